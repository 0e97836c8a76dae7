"""Bernstein-Bezier algebra on triangles.

Polynomials are stored as flat coefficient vectors in the fixed
lexicographic ordering of ``multi_indices`` (i descending, then j
descending).  All functions here are pure and operate on immutable
inputs, so they are safe to share across threads.

Degrees up to ``MAX_DEGREE`` = 10 are supported; the library itself
only uses d in {1, 2, 4, 5, 6}.
"""

import math
from functools import lru_cache

import numpy as np

MAX_DEGREE = 10

_FACT = [math.factorial(n) for n in range(MAX_DEGREE + 1)]


class DegreeError(ValueError):
    """Requested polynomial degree outside the supported range."""


def _check_degree(d):
    if not (0 <= d <= MAX_DEGREE):
        raise DegreeError(f"degree {d} outside supported range 0..{MAX_DEGREE}")


@lru_cache(maxsize=None)
def multi_indices(d):
    """All (i, j, k) with i+j+k = d, ordered i descending then j descending."""
    _check_degree(d)
    return tuple(
        (i, j, d - i - j) for i in range(d, -1, -1) for j in range(d - i, -1, -1)
    )


@lru_cache(maxsize=None)
def index_map(d):
    """Dict mapping each multi-index of degree d to its linear position."""
    return {ijk: n for n, ijk in enumerate(multi_indices(d))}


def n_coeffs(d):
    return (d + 1) * (d + 2) // 2


def multinomial(d, ijk):
    i, j, k = ijk
    return _FACT[d] // (_FACT[i] * _FACT[j] * _FACT[k])


def domain_points(d, tri):
    """Domain points (i*v1 + j*v2 + k*v3)/d of a triangle, as an (n, 2) array."""
    tri = np.asarray(tri, dtype=float)
    lam = np.array(multi_indices(d), dtype=float) / d
    return lam @ tri


# ---------------------------------------------------------------------------
# barycentric coordinates

def _cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


def triangle_area(tri):
    tri = np.asarray(tri, dtype=float)
    return 0.5 * float(_cross2(tri[1] - tri[0], tri[2] - tri[0]))


def barycentric(tri, x):
    """Barycentric coordinates of point x w.r.t. triangle tri ((3,2) array).

    Works for points outside the triangle as well (affine extension).
    Raises ValueError for (near-)degenerate triangles.
    """
    return barycentric_many(tri, np.asarray(x, dtype=float).reshape(1, 2))[0]


def barycentric_many(tri, pts):
    """Barycentric coordinates for an (n, 2) array of points; returns (n, 3)."""
    tri = np.asarray(tri, dtype=float)
    pts = np.asarray(pts, dtype=float)
    v1, v2, v3 = tri
    area2 = float(_cross2(v2 - v1, v3 - v1))
    scale = max(np.abs(tri).max(), 1.0)
    if abs(area2) < 2e-14 * scale * scale:
        raise ValueError("degenerate triangle in barycentric computation")
    d = pts - v1
    e2, e3 = v2 - v1, v3 - v1
    b2 = (d[:, 0] * e3[1] - d[:, 1] * e3[0]) / area2
    b3 = (e2[0] * d[:, 1] - e2[1] * d[:, 0]) / area2
    b1 = 1.0 - b2 - b3
    return np.column_stack([b1, b2, b3])


def directional_coords(tri, u):
    """Barycentric directional coordinates of a vector u (they sum to 0)."""
    tri = np.asarray(tri, dtype=float)
    u = np.asarray(u, dtype=float)
    b = barycentric_many(tri, np.vstack([tri[0] + u, tri[0]]))
    return b[0] - b[1]


# ---------------------------------------------------------------------------
# evaluation

def bernstein_matrix(d, bary):
    """Design matrix of all degree-d Bernstein polynomials at barycentric points.

    bary: (n, 3) array; returns (n, n_coeffs(d)).
    """
    bary = np.asarray(bary, dtype=float)
    if bary.ndim == 1:
        bary = bary.reshape(1, 3)
    cols = []
    for ijk in multi_indices(d):
        i, j, k = ijk
        cols.append(
            multinomial(d, ijk)
            * bary[:, 0] ** i * bary[:, 1] ** j * bary[:, 2] ** k
        )
    return np.column_stack(cols)


def de_casteljau(d, coeffs, b):
    """Reference scalar evaluation of a BB polynomial by de Casteljau steps."""
    b1, b2, b3 = b
    work = {ijk: float(c) for ijk, c in zip(multi_indices(d), coeffs)}
    for r in range(d, 0, -1):
        nxt = {}
        for (i, j, k) in multi_indices(r - 1):
            nxt[(i, j, k)] = (
                b1 * work[(i + 1, j, k)]
                + b2 * work[(i, j + 1, k)]
                + b3 * work[(i, j, k + 1)]
            )
        work = nxt
    return work[(0, 0, 0)]


@lru_cache(maxsize=None)
def _diff_structure(d):
    """Index triples ((pos+e1, pos+e2, pos+e3) per reduced index) for differencing."""
    im = index_map(d)
    rows = []
    for (i, j, k) in multi_indices(d - 1):
        rows.append((im[(i + 1, j, k)], im[(i, j + 1, k)], im[(i, j, k + 1)]))
    return np.array(rows, dtype=np.int64)


def diff_matrix(d, a):
    """Matrix of the coefficient difference operator for direction coords a.

    Maps degree-d coefficients to degree-(d-1) coefficients of the (scaled)
    directional derivative: D_u p = d * sum (diff_matrix(d, a) @ c)_g B^{d-1}_g.
    """
    st = _diff_structure(d)
    m = np.zeros((len(st), n_coeffs(d)))
    rows = np.arange(len(st))
    for s in range(3):
        m[rows, st[:, s]] += a[s]
    return m


def eval_bb(d, coeffs, tri, x, order=0):
    """Evaluate a BB polynomial (or its Cartesian derivatives) at a point.

    order 0 -> value, 1 -> gradient (2,), 2 -> Hessian (2,2).
    Exact for polynomials; evaluation uses coefficient differencing in
    directional coordinates followed by de Casteljau.
    """
    if order > d:
        if order == 1:
            return np.zeros(2)
        if order == 2:
            return np.zeros((2, 2))
    coeffs = np.asarray(coeffs, dtype=float)
    b = barycentric(tri, x)
    if order == 0:
        return de_casteljau(d, coeffs, b)
    ax = directional_coords(tri, (1.0, 0.0))
    ay = directional_coords(tri, (0.0, 1.0))
    if order == 1:
        fac = float(d)
        gx = de_casteljau(d - 1, diff_matrix(d, ax) @ coeffs, b)
        gy = de_casteljau(d - 1, diff_matrix(d, ay) @ coeffs, b)
        return fac * np.array([gx, gy])
    if order == 2:
        fac = float(d * (d - 1))
        dx = diff_matrix(d, ax) @ coeffs
        dy = diff_matrix(d, ay) @ coeffs
        hxx = de_casteljau(d - 2, diff_matrix(d - 1, ax) @ dx, b)
        hxy = de_casteljau(d - 2, diff_matrix(d - 1, ay) @ dx, b)
        hyy = de_casteljau(d - 2, diff_matrix(d - 1, ay) @ dy, b)
        return fac * np.array([[hxx, hxy], [hxy, hyy]])
    raise ValueError(f"derivative order {order} not supported")


def design_matrices(d, tri, bary, order=2):
    """Vectorized evaluation matrices at fixed barycentric points.

    Returns (V, G, H) where V is (n, nc), G = [Dx, Dy] and
    H = [Dxx, Dxy, Dyy] (each (n, nc)), so that e.g. values = V @ coeffs.
    G and H are None when not requested via order.
    """
    V = bernstein_matrix(d, bary)
    G = H = None
    if order >= 1 and d >= 1:
        ax = directional_coords(tri, (1.0, 0.0))
        ay = directional_coords(tri, (0.0, 1.0))
        B1 = bernstein_matrix(d - 1, bary)
        Mx, My = diff_matrix(d, ax), diff_matrix(d, ay)
        G = [d * (B1 @ Mx), d * (B1 @ My)]
        if order >= 2 and d >= 2:
            B2 = bernstein_matrix(d - 2, bary)
            fac = d * (d - 1)
            H = [
                fac * (B2 @ (diff_matrix(d - 1, ax) @ Mx)),
                fac * (B2 @ (diff_matrix(d - 1, ay) @ Mx)),
                fac * (B2 @ (diff_matrix(d - 1, ay) @ My)),
            ]
    return V, G, H


# ---------------------------------------------------------------------------
# degree raising and products

@lru_cache(maxsize=None)
def degree_raise_matrix(d, d_to):
    """Matrix R with raise(c) = R @ c, mapping degree d to degree d_to >= d."""
    if d_to < d:
        raise DegreeError("cannot lower degree")
    _check_degree(d_to)
    R = np.eye(n_coeffs(d))
    for dd in range(d, d_to):
        im = index_map(dd)
        step = np.zeros((n_coeffs(dd + 1), n_coeffs(dd)))
        for r, (i, j, k) in enumerate(multi_indices(dd + 1)):
            if i > 0:
                step[r, im[(i - 1, j, k)]] += i / (dd + 1)
            if j > 0:
                step[r, im[(i, j - 1, k)]] += j / (dd + 1)
            if k > 0:
                step[r, im[(i, j, k - 1)]] += k / (dd + 1)
        R = step @ R
    return R


def degree_raise(d, coeffs, d_to):
    """Coefficients of the same polynomial written at degree d_to >= d."""
    return degree_raise_matrix(d, d_to) @ np.asarray(coeffs, dtype=float)


@lru_cache(maxsize=None)
def product_matrix_structure(d1, d2):
    """Sparse structure (rows, cols1, cols2, weights) of the BB product."""
    _check_degree(d1 + d2)
    io = index_map(d1 + d2)
    rows, c1, c2, w = [], [], [], []
    for n1, a in enumerate(multi_indices(d1)):
        for n2, b in enumerate(multi_indices(d2)):
            g = (a[0] + b[0], a[1] + b[1], a[2] + b[2])
            rows.append(io[g])
            c1.append(n1)
            c2.append(n2)
            w.append(multinomial(d1, a) * multinomial(d2, b) / multinomial(d1 + d2, g))
    return (
        np.array(rows, dtype=np.int64),
        np.array(c1, dtype=np.int64),
        np.array(c2, dtype=np.int64),
        np.array(w),
    )


def bb_product(d1, c1, d2, c2):
    """BB coefficients of the product of two polynomials on the same triangle."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    rows, i1, i2, w = product_matrix_structure(d1, d2)
    out = np.zeros(n_coeffs(d1 + d2))
    np.add.at(out, rows, w * c1[i1] * c2[i2])
    return out


def product_matrix(d1, d2, c2):
    """Matrix P with bb_product(d1, c, d2, c2) = P @ c (second factor fixed)."""
    c2 = np.asarray(c2, dtype=float)
    rows, i1, i2, w = product_matrix_structure(d1, d2)
    P = np.zeros((n_coeffs(d1 + d2), n_coeffs(d1)))
    np.add.at(P, (rows, i1), w * c2[i2])
    return P


def edge_product(dp, p_edge, dq, q_edge):
    """Univariate Bernstein product of edge restrictions.

    p_edge[m] is the coefficient with m steps toward the edge's second
    endpoint; returns the degree dp+dq edge coefficient array.
    """
    p_edge = np.asarray(p_edge, dtype=float)
    q_edge = np.asarray(q_edge, dtype=float)
    out = np.zeros(dp + dq + 1)
    for m1 in range(dp + 1):
        for m2 in range(dq + 1):
            m = m1 + m2
            out[m] += (
                p_edge[m1] * q_edge[m2]
                * math.comb(dp, m1) * math.comb(dq, m2) / math.comb(dp + dq, m)
            )
    return out


# ---------------------------------------------------------------------------
# vertex rings and cross-edge smoothness

_RING_SLOT1 = ((0, 0), (-1, 1, 0), (-1, 0, 1), (-2, 2, 0), (-2, 0, 2), (-2, 1, 1))


def vertex_ring(d, slot):
    """The six domain-point indices closest to a vertex, in canonical order.

    Order: corner, +1 step toward each of the two other vertices, +2 steps
    toward each, then the mixed point.
    """
    if d < 2:
        raise DegreeError("vertex ring requires degree >= 2")
    base = [
        (d, 0, 0),
        (d - 1, 1, 0),
        (d - 1, 0, 1),
        (d - 2, 2, 0),
        (d - 2, 0, 2),
        (d - 2, 1, 1),
    ]
    if slot == 1:
        return base
    if slot == 2:
        return [(b, a, c) for (a, b, c) in base]
    if slot == 3:
        return [(b, c, a) for (a, b, c) in base]
    raise ValueError("slot must be 1, 2 or 3")


def ring_edge_slots(slot):
    """Slots of the two neighbor vertices, in the order used by vertex_ring."""
    return {1: (2, 3), 2: (1, 3), 3: (1, 2)}[slot]


def _edge_index(d, slots, m):
    """Multi-index on the edge (slots[0], slots[1]) with m steps toward slots[1]."""
    g = [0, 0, 0]
    g[slots[0] - 1] = d - m
    g[slots[1] - 1] = m
    return tuple(g)


def edge_row_indices(d, slots, off):
    """Multi-indices of the row `off` steps away from an edge.

    slots is the (slot_a, slot_b) pair of the edge's endpoints; entry m of
    the returned list has m steps toward slot_b.
    """
    off_slot = 6 - slots[0] - slots[1]
    out = []
    for m in range(d - off + 1):
        g = [0, 0, 0]
        g[slots[0] - 1] = d - off - m
        g[slots[1] - 1] = m
        g[off_slot - 1] = off
        out.append(tuple(g))
    return out


def cross_edge_rows(d, coef_src, src_slots, dst_slots, b_off):
    """Edge row and first interior row of the neighbor patch across an edge.

    The source patch (coefficients coef_src, degree d) and destination patch
    share an edge; src_slots / dst_slots give the local slots of the two
    shared vertices, listed in the same physical order.  b_off are the
    barycentric coordinates of the destination's off-edge vertex w.r.t. the
    source triangle.  Returns two dicts keyed by destination multi-index:
    the continuity row (off=0) and the tangent-plane row (off=1) implied by
    C0/C1 smoothness.
    """
    im = index_map(d)
    coef_src = np.asarray(coef_src, dtype=float)
    c0 = {}
    for m, g in enumerate(edge_row_indices(d, dst_slots, 0)):
        c0[g] = coef_src[im[_edge_index(d, src_slots, m)]]
    c1 = {}
    for m, g in enumerate(edge_row_indices(d, dst_slots, 1)):
        c1[g] = c1_point(d, coef_src, src_slots, b_off, m)
    return c0, c1


def c1_point(d, coef_src, src_slots, b_off, m):
    """Single smoothness-implied value on the neighbor's first interior row.

    m counts steps toward the edge's second shared vertex (src_slots[1]).
    """
    im = index_map(d)
    coef_src = np.asarray(coef_src, dtype=float)
    base = list(_edge_index(d - 1, src_slots, m))
    val = 0.0
    for s in range(3):
        g = base.copy()
        g[s] += 1
        val += b_off[s] * coef_src[im[tuple(g)]]
    return val


def smoothness_gaps(d, tri_a, coef_a, slots_a, tri_b, coef_b, slots_b):
    """Max C0 and C1 condition violations across a shared edge.

    slots_a / slots_b identify the shared vertices (same physical order).
    Returns absolute gaps (max over the edge row / first interior row);
    callers scale by the coefficient magnitude for a relative test.
    """
    off_b = 6 - slots_b[0] - slots_b[1]
    w = np.asarray(tri_b, dtype=float)[off_b - 1]
    b_off = barycentric(tri_a, w)
    c0, c1 = cross_edge_rows(d, coef_a, slots_a, slots_b, b_off)
    im = index_map(d)
    coef_b = np.asarray(coef_b, dtype=float)
    gap0 = max(abs(coef_b[im[g]] - v) for g, v in c0.items())
    gap1 = max(abs(coef_b[im[g]] - v) for g, v in c1.items())
    return gap0, gap1
