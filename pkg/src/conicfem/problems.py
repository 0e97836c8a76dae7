"""Built-in test domains, initial meshes and model problems.

The three shipped domains are the unit disk, the ellipse
x1^2 + 6.25 x2^2 = 1, and a centrally symmetric C2 domain made of two
elliptic and two circular segments that join with continuous curvature.
Initial meshes ship as JSON data files (written by tools/generate_builtin_data.py)
and are re-validated on load.
"""

import json
from importlib import resources

import numpy as np

from .geometry import BoundaryArc, Conic, ConicDomain
from .mesh import classify_and_validate, mesh_from_dict

PROBLEM_IDS = ("disk", "ellipse-exp", "ellipse-sin", "c2-domain")


def disk_domain():
    """Unit circle boundary as four quarter arcs of the same conic."""
    q = Conic((-1.0, 0.0, -1.0, 0.0, 0.0, 1.0))
    pts = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
    arcs = tuple(
        BoundaryArc(q, pts[j], pts[(j + 1) % 4]) for j in range(4)
    )
    return ConicDomain(arcs)


def ellipse_domain():
    """Ellipse x1^2 + 6.25 x2^2 = 1 as four quarter arcs."""
    q = Conic((-1.0, 0.0, -6.25, 0.0, 0.0, 1.0))
    pts = [(1.0, 0.0), (0.0, 0.4), (-1.0, 0.0), (0.0, -0.4)]
    arcs = tuple(
        BoundaryArc(q, pts[j], pts[(j + 1) % 4]) for j in range(4)
    )
    return ConicDomain(arcs)


def c2_domain_params(a=4.0, b=1.3, t0=0.85 * np.pi):
    """Radius and center of the osculating circle at the ellipse point t0.

    Returns (r, c1, c2) for the ellipse (a cos t, b sin t); the C2 test
    domain shifts the ellipse down by c2 so the circle center lands on the
    x axis.  Curvature kappa = a b / (a^2 sin^2 t + b^2 cos^2 t)^(3/2).
    """
    st, ct = np.sin(t0), np.cos(t0)
    kappa = a * b / (a * a * st * st + b * b * ct * ct) ** 1.5
    r = 1.0 / kappa
    # evolute of the ellipse
    c1 = (a * a - b * b) * ct**3 / a
    c2 = (b * b - a * a) * st**3 / b
    return float(r), float(c1), float(c2)


def c2_domain(a=4.0, b=1.3, t0=0.85 * np.pi):
    """Centrally symmetric C2 domain: two elliptic and two circular segments.

    The top segment is (a cos t, b sin t - c2), t in [pi - t0, t0]; the left
    cap is the osculating circle at t0 (center (c1, 0) after the shift), and
    the bottom/right pieces are the point reflections through the origin.
    """
    r, c1, c2 = c2_domain_params(a, b, t0)
    t1 = np.pi - t0

    def top_pt(t):
        return (a * np.cos(t), b * np.sin(t) - c2)

    z1 = top_pt(t1)
    z2 = top_pt(t0)
    z3 = (-z1[0], -z1[1])
    z4 = (-z2[0], -z2[1])

    q_top = Conic((
        -1.0 / a**2, 0.0, -1.0 / b**2, 0.0, -2.0 * c2 / b**2,
        1.0 - c2 * c2 / b**2,
    ))
    q_bot = Conic((
        -1.0 / a**2, 0.0, -1.0 / b**2, 0.0, 2.0 * c2 / b**2,
        1.0 - c2 * c2 / b**2,
    ))
    q_left = Conic((-1.0, 0.0, -1.0, 2.0 * c1, 0.0, r * r - c1 * c1))
    q_right = Conic((-1.0, 0.0, -1.0, -2.0 * c1, 0.0, r * r - c1 * c1))

    arcs = (
        BoundaryArc(q_top, z1, z2),
        BoundaryArc(q_left, z2, z3),
        BoundaryArc(q_bot, z3, z4),
        BoundaryArc(q_right, z4, z1),
    )
    return ConicDomain(arcs)


# ---------------------------------------------------------------------------
# wheel meshes: ring of pie/buffer triangles around an ordinary fan

def wheel_mesh(domain, boundary_pts, boundary_arcs, shrink=0.55, center=(0.0, 0.0)):
    """Initial triangulation with one ring of pies/buffers around a hub fan.

    boundary_pts: ccw list of boundary vertices (on the domain arcs);
    boundary_arcs[i] is the arc index of the edge boundary_pts[i] ->
    boundary_pts[i+1].  Ring vertex i sits at shrink * (chord midpoint of
    edge i, relative to the center).  Every boundary vertex then has the
    pie-buffer-pie fan the dof construction expects.
    """
    b = np.asarray(boundary_pts, dtype=float)
    n = len(b)
    center = np.asarray(center, dtype=float)
    ring = np.array([
        center + shrink * (0.5 * (b[i] + b[(i + 1) % n]) - center) for i in range(n)
    ])
    vertices = np.vstack([b, ring, center])
    ctr = 2 * n
    tris = []
    for i in range(n):
        j = (i + 1) % n
        tris.append((n + i, i, j))                    # pie, interior vertex first
        tris.append((i, n + (i - 1) % n, n + i))      # buffer at boundary vertex i
        tris.append((ctr, n + (i - 1) % n, n + i))    # ordinary hub triangle
    boundary_edges = [(i, (i + 1) % n, boundary_arcs[i]) for i in range(n)]
    return classify_and_validate(domain, vertices, tris, boundary_edges)


def disk_wheel_points():
    ang = [np.pi * k / 4 for k in range(8)]
    pts = [(np.cos(t), np.sin(t)) for t in ang]
    arcs = [k // 2 for k in range(8)]
    return pts, arcs


def ellipse_wheel_points():
    ang = [np.pi * k / 4 for k in range(8)]
    pts = [(np.cos(t), 0.4 * np.sin(t)) for t in ang]
    arcs = [k // 2 for k in range(8)]
    return pts, arcs


def c2_wheel_points(a=4.0, b=1.3, t0=0.85 * np.pi, n_ellipse=4, n_circle=2):
    """Boundary vertices for the C2 domain wheel (per-arc subdivision)."""
    r, c1, c2 = c2_domain_params(a, b, t0)
    t1 = np.pi - t0
    top = [
        (a * np.cos(t), b * np.sin(t) - c2)
        for t in np.linspace(t1, t0, n_ellipse + 1)
    ]
    cc = np.array([c1, 0.0])
    th_start = np.arctan2(top[-1][1] - cc[1], top[-1][0] - cc[0])
    th_end = np.arctan2(-top[0][1] - cc[1], -top[0][0] - cc[0])
    if th_end < th_start:
        th_end += 2 * np.pi
    left = [
        (cc[0] + r * np.cos(th), cc[1] + r * np.sin(th))
        for th in np.linspace(th_start, th_end, n_circle + 1)
    ]
    bottom = [(-p[0], -p[1]) for p in top]
    right = [(-p[0], -p[1]) for p in left]
    pts = top[:-1] + left[:-1] + bottom[:-1] + right[:-1]
    arcs = (
        [0] * n_ellipse + [1] * n_circle + [2] * n_ellipse + [3] * n_circle
    )
    return pts, arcs


_BUILTIN = {
    "disk": (disk_domain, "disk_mesh.json"),
    "ellipse-exp": (ellipse_domain, "ellipse_mesh.json"),
    "ellipse-sin": (ellipse_domain, "ellipse_mesh.json"),
    "c2-domain": (c2_domain, "c2_mesh.json"),
}


def builtin_domain(problem_id):
    """Analytic domain and validated initial mesh of a built-in problem."""
    if problem_id not in _BUILTIN:
        raise KeyError(f"unknown problem id {problem_id!r}; choose from {PROBLEM_IDS}")
    domain_fn, mesh_file = _BUILTIN[problem_id]
    domain = domain_fn()
    data = json.loads(
        resources.files("conicfem.data").joinpath(mesh_file).read_text()
    )
    mesh = mesh_from_dict(data, domain=domain)
    return domain, mesh


# ---------------------------------------------------------------------------
# model problem data (right-hand sides and exact solutions)

def disk_exact_solution():
    """Exact convex solution exp(0.5 r^2) - exp(0.5) on the unit disk.

    Returns (value, gradient, hessian) callables; the corresponding
    Monge-Ampere datum is g = exp(r^2) (1 + r^2).
    """

    e_half = np.exp(0.5)

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.exp(0.5 * (x[..., 0] ** 2 + x[..., 1] ** 2)) - e_half

    def gradient(x):
        x = np.asarray(x, dtype=float)
        w = np.exp(0.5 * (x[..., 0] ** 2 + x[..., 1] ** 2))
        return np.stack([w * x[..., 0], w * x[..., 1]], axis=-1)

    def hessian(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        w = np.exp(0.5 * (x1**2 + x2**2))
        h11 = w * (1 + x1 * x1)
        h12 = w * x1 * x2
        h22 = w * (1 + x2 * x2)
        return np.stack(
            [np.stack([h11, h12], axis=-1), np.stack([h12, h22], axis=-1)],
            axis=-2,
        )

    return value, gradient, hessian


def problem_g(problem_id):
    """The positive Monge-Ampere datum g of a built-in problem."""
    if problem_id == "disk":
        def g(x):
            x = np.asarray(x, dtype=float)
            r2 = x[..., 0] ** 2 + x[..., 1] ** 2
            return np.exp(r2) * (1.0 + r2)
        return g
    if problem_id == "ellipse-exp":
        return lambda x: np.exp(np.asarray(x, dtype=float)[..., 0])
    if problem_id == "ellipse-sin":
        def g(x):
            x = np.asarray(x, dtype=float)
            return np.sin(np.pi * np.abs(x[..., 0])) + 1.1
        return g
    if problem_id == "c2-domain":
        return lambda x: np.ones(np.asarray(x, dtype=float).shape[:-1])
    raise KeyError(problem_id)
