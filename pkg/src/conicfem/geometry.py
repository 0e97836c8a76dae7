"""Implicit conics, boundary arcs and piecewise-conic domains.

A boundary is an ordered, counter-clockwise chain of arcs, each the zero
set of an implicit quadratic.  Arcs are kept purely implicit: point
queries are answered by ray intersection, never by a stored
parameterization.  All values are immutable after construction and all
operations are pure functions.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .bernstein import index_map, multi_indices


class GeometryError(ValueError):
    """Invalid or degenerate geometric input."""


@dataclass(frozen=True)
class Conic:
    """Implicit curve q(x) = k1 x1^2 + k2 x1 x2 + k3 x2^2 + k4 x1 + k5 x2 + k6.

    degree is 1 for a straight line (k1 = k2 = k3 = 0) and 2 for a genuine
    conic, which must be irreducible.
    """

    coeffs: tuple
    degree: int = 2

    def __post_init__(self):
        k = np.asarray(self.coeffs, dtype=float)
        if k.shape != (6,):
            raise GeometryError("conic needs 6 coefficients")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in k))
        scale = np.abs(k).max()
        if scale == 0.0:
            raise GeometryError("zero conic")
        if self.degree == 1:
            if np.abs(k[:3]).max() > 1e-12 * scale:
                raise GeometryError("degree-1 conic has quadratic terms")
            if np.abs(k[3:5]).max() <= 1e-12 * scale:
                raise GeometryError("degenerate line")
        elif self.degree == 2:
            if np.abs(k[:3]).max() <= 1e-12 * scale:
                raise GeometryError("degree-2 conic with zero quadratic part")
            if not _is_irreducible(k):
                raise GeometryError("reducible conic (factors into lines)")
        else:
            raise GeometryError("conic degree must be 1 or 2")

    def negated(self):
        return Conic(tuple(-c for c in self.coeffs), self.degree)


def _is_irreducible(k):
    """A quadratic factors into (possibly complex) linear forms iff the
    3x3 symmetric matrix of the form is singular."""
    k = np.asarray(k, dtype=float) / np.abs(k).max()
    m = np.array(
        [
            [k[0], k[1] / 2, k[3] / 2],
            [k[1] / 2, k[2], k[4] / 2],
            [k[3] / 2, k[4] / 2, k[5]],
        ]
    )
    return abs(np.linalg.det(m)) > 1e-12


def eval_conic(q, x):
    """Value of the implicit quadratic at a point (or (n,2) array of points)."""
    k = q.coeffs
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return (
        k[0] * x1 * x1 + k[1] * x1 * x2 + k[2] * x2 * x2
        + k[3] * x1 + k[4] * x2 + k[5]
    )


def grad_conic(q, x):
    """Gradient of the implicit quadratic at a point (or points)."""
    k = q.coeffs
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack(
        [2 * k[0] * x1 + k[1] * x2 + k[3], k[1] * x1 + 2 * k[2] * x2 + k[4]],
        axis=-1,
    )


def conic_scale(q, x):
    """Magnitude scale of q near x, for relative on-curve tolerances."""
    k = np.abs(np.asarray(q.coeffs))
    x = np.asarray(x, dtype=float)
    r = max(1.0, float(np.abs(x).max()))
    return float(k[0] * r * r + k[1] * r * r + k[2] * r * r + k[3] * r + k[4] * r + k[5])


def point_on_conic(q, x, tol=1e-12):
    return abs(eval_conic(q, x)) <= tol * conic_scale(q, x)


@dataclass(frozen=True)
class BoundaryArc:
    """Open arc of a conic between two endpoints, oriented counter-clockwise
    around the domain (domain on the left when walking start -> end).

    The stored conic satisfies q > 0 on the domain side near the arc.
    """

    conic: Conic
    start: tuple
    end: tuple

    def __post_init__(self):
        s = np.asarray(self.start, dtype=float)
        e = np.asarray(self.end, dtype=float)
        object.__setattr__(self, "start", (float(s[0]), float(s[1])))
        object.__setattr__(self, "end", (float(e[0]), float(e[1])))
        if np.linalg.norm(e - s) < 1e-14 * max(1.0, np.abs(s).max()):
            raise GeometryError("degenerate arc: coincident endpoints")
        for z in (s, e):
            if not point_on_conic(self.conic, z):
                raise GeometryError(
                    f"arc endpoint {tuple(z)} not on conic "
                    f"(|q| = {abs(eval_conic(self.conic, z)):.3e})"
                )


def arc_midpoint(arc):
    """A point on the arc near the chord midpoint (Newton projection)."""
    x = 0.5 * (np.asarray(arc.start) + np.asarray(arc.end))
    for _ in range(60):
        qv = eval_conic(arc.conic, x)
        g = grad_conic(arc.conic, x)
        gn = float(g @ g)
        if gn == 0.0:
            raise GeometryError("vanishing conic gradient while projecting")
        step = -qv / gn * g
        x = x + step
        if np.linalg.norm(step) < 1e-15 * max(1.0, np.linalg.norm(x)):
            break
    if not point_on_conic(arc.conic, x, tol=1e-10):
        raise GeometryError("arc midpoint projection failed")
    return x


def normalize_arc_sign(arc):
    """Flip the conic sign if needed so the domain side has q > 0.

    Uses the counter-clockwise orientation: at the arc midpoint the outward
    normal is the right-hand side of the travel direction, and the normal
    derivative of q must be negative there.  Idempotent.
    """
    x = arc_midpoint(arc)
    g = grad_conic(arc.conic, x)
    gn = np.linalg.norm(g)
    if gn == 0.0:
        raise GeometryError("vanishing conic gradient on arc")
    chord = np.asarray(arc.end) - np.asarray(arc.start)
    tang = np.array([-g[1], g[0]])
    if tang @ chord < 0:
        tang = -tang
    outward = np.array([tang[1], -tang[0]])
    if g @ outward < 0:
        return arc
    return BoundaryArc(arc.conic.negated(), arc.start, arc.end)


def arc_point_on_ray(arc, origin, through):
    """Intersection of the arc with the ray origin -> through (extended).

    `through` must lie between the origin and the arc; the quadratic in the
    ray parameter must then have exactly one admissible root at or beyond
    `through`.  Anything else is reported as a geometry error (a violation
    of the star-shapedness the construction relies on).
    """
    origin = np.asarray(origin, dtype=float)
    through = np.asarray(through, dtype=float)
    d = through - origin
    if np.linalg.norm(d) < 1e-15:
        raise GeometryError("ray direction degenerate")
    k = arc.conic.coeffs
    a2 = k[0] * d[0] ** 2 + k[1] * d[0] * d[1] + k[2] * d[1] ** 2
    a1 = float(grad_conic(arc.conic, origin) @ d)
    a0 = float(eval_conic(arc.conic, origin))
    roots = []
    if abs(a2) < 1e-15 * max(abs(a1), abs(a0), 1.0):
        if a1 != 0.0:
            roots = [-a0 / a1]
    else:
        disc = a1 * a1 - 4 * a2 * a0
        if disc < 0:
            raise GeometryError("ray does not reach the arc (no real root)")
        sq = np.sqrt(disc)
        roots = [(-a1 - sq) / (2 * a2), (-a1 + sq) / (2 * a2)]
    admissible = [t for t in roots if t >= 1.0 - 1e-9]
    if len(admissible) != 1:
        if len(admissible) > 1 and abs(admissible[0] - admissible[1]) < 1e-12:
            admissible = admissible[:1]
        else:
            raise GeometryError(
                f"expected one ray/arc crossing beyond the through point, "
                f"found {len(admissible)} (star-shapedness violated?)"
            )
    x = origin + admissible[0] * d
    # polish with one Newton step along the ray to kill rounding
    g1 = float(grad_conic(arc.conic, x) @ d)
    if g1 != 0.0:
        x = x + (-eval_conic(arc.conic, x) / g1) * d
    return x


def conic_bb_form(q, tri):
    """Degree-2 BB coefficients of the conic over a triangle (exact).

    Corner coefficients are values at the vertices; edge coefficients come
    from midpoint values.  Ordering follows bernstein.multi_indices(2):
    (200, 110, 101, 020, 011, 002).
    """
    tri = np.asarray(tri, dtype=float)
    v1, v2, v3 = tri
    vals = {
        (2, 0, 0): float(eval_conic(q, v1)),
        (0, 2, 0): float(eval_conic(q, v2)),
        (0, 0, 2): float(eval_conic(q, v3)),
    }
    m12 = 0.5 * (v1 + v2)
    m13 = 0.5 * (v1 + v3)
    m23 = 0.5 * (v2 + v3)
    vals[(1, 1, 0)] = 2.0 * float(eval_conic(q, m12)) - 0.5 * (vals[(2, 0, 0)] + vals[(0, 2, 0)])
    vals[(1, 0, 1)] = 2.0 * float(eval_conic(q, m13)) - 0.5 * (vals[(2, 0, 0)] + vals[(0, 0, 2)])
    vals[(0, 1, 1)] = 2.0 * float(eval_conic(q, m23)) - 0.5 * (vals[(0, 2, 0)] + vals[(0, 0, 2)])
    return np.array([vals[g] for g in multi_indices(2)])


def normalized_pie_conic(q, tri):
    """BB form of q over the chord triangle, scaled so q(v1) = 1.

    v1 is the interior vertex of the pie triangle; the conic must vanish at
    the other two vertices.
    """
    c = conic_bb_form(q, tri)
    im = index_map(2)
    c200 = c[im[(2, 0, 0)]]
    scale = max(1.0, float(np.abs(c).max()))
    if abs(c200) <= 1e-12 * scale:
        raise GeometryError("conic vanishes at the pie interior vertex")
    c = c / c200
    for g in ((0, 2, 0), (0, 0, 2)):
        if abs(c[im[g]]) > 1e-9:
            raise GeometryError("chord triangle corners are not on the conic")
        c[im[g]] = 0.0
    return c


@dataclass(frozen=True)
class ConicDomain:
    """Simply connected domain bounded by a counter-clockwise chain of arcs.

    Simple connectivity is a documented assumption, not verified here.
    interior_angles[j] is the angle between incoming and outgoing tangents
    at corner j (the start point of arc j).
    """

    arcs: tuple
    corners: np.ndarray = field(default=None)
    interior_angles: np.ndarray = field(default=None)

    def __post_init__(self):
        arcs = tuple(normalize_arc_sign(a) for a in self.arcs)
        if not arcs:
            raise GeometryError("domain needs at least one arc")
        n = len(arcs)
        tol = 1e-10
        for j in range(n):
            e = np.asarray(arcs[j].end)
            s = np.asarray(arcs[(j + 1) % n].start)
            if np.linalg.norm(e - s) > tol * max(1.0, np.linalg.norm(e)):
                raise GeometryError(f"arcs {j} and {(j + 1) % n} do not chain")
        corners = np.array([a.start for a in arcs])
        angles = np.array(
            [_corner_angle(arcs[(j - 1) % n], arcs[j]) for j in range(n)]
        )
        if np.any(angles <= 0):
            raise GeometryError("non-positive interior corner angle")
        object.__setattr__(self, "arcs", arcs)
        object.__setattr__(self, "corners", corners)
        object.__setattr__(self, "interior_angles", angles)

    def corner_is_tangent(self, j, tol=1e-10):
        """True if incoming and outgoing arcs share a tangent line at corner j."""
        n = len(self.arcs)
        z = self.corners[j]
        g1 = grad_conic(self.arcs[(j - 1) % n].conic, z)
        g2 = grad_conic(self.arcs[j].conic, z)
        cross = abs(g1[0] * g2[1] - g1[1] * g2[0])
        return cross <= tol * np.linalg.norm(g1) * np.linalg.norm(g2)


def _corner_angle(arc_in, arc_out):
    """Interior angle between boundary tangents at the shared corner."""
    z = np.asarray(arc_out.start)
    g_in = grad_conic(arc_in.conic, z)
    g_out = grad_conic(arc_out.conic, z)
    # ccw travel: domain (q > 0) lies on the left, so the travel tangent is
    # the -90 degree rotation of the inward-pointing gradient
    t_in = np.array([g_in[1], -g_in[0]])
    t_out = np.array([g_out[1], -g_out[0]])
    cross = t_out[0] * (-t_in[1]) - t_out[1] * (-t_in[0])
    ang = float(np.arctan2(cross, np.dot(t_out, -t_in)))
    if ang <= 0:
        ang += 2 * np.pi
    return ang


# ---------------------------------------------------------------------------
# domain file IO

def domain_to_dict(domain):
    return {
        "arcs": [
            {"coeffs": list(a.conic.coeffs), "degree": a.conic.degree,
             "from": list(a.start), "to": list(a.end)}
            for a in domain.arcs
        ]
    }


def domain_from_dict(data):
    arcs = []
    for a in data["arcs"]:
        conic = Conic(tuple(a["coeffs"]), int(a.get("degree", 2)))
        arcs.append(BoundaryArc(conic, tuple(a["from"]), tuple(a["to"])))
    return ConicDomain(tuple(arcs))


def load_domain(path):
    """Load and validate a domain description file (JSON).

    The loader re-checks endpoint-on-conic (relative tolerance 1e-12, a
    choice the source material leaves open) and chaining, and applies sign
    normalization.
    """
    with open(path) as f:
        return domain_from_dict(json.load(f))


def save_domain(domain, path):
    with open(path, "w") as f:
        json.dump(domain_to_dict(domain), f, indent=1)
