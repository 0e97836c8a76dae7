"""Quadrature, Galerkin assembly, Sobolev error norms and sparse solves.

Straight triangles use a fixed reference rule of polynomial exactness 16
(collapsed Gauss-Jacobi x Gauss-Legendre).  Pie triangles use a 12x12
tensor Gauss rule through a radial blending map whose far edge is pushed
onto the boundary arc by per-node ray intersection, with exact Jacobians,
so the curved geometry enters the integrals without any polynomial
approximation of the boundary.

Assembly loops triangles sequentially (deterministic by construction);
rules and maps are immutable and shareable across threads.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.special import roots_jacobi, roots_legendre

from . import bernstein as bb
from .geometry import arc_point_on_ray, grad_conic
from .mesh import ORDINARY, PIE


class AssemblyError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# reference rule on straight triangles

@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric nodes and weights on the reference triangle.

    Weights sum to one, so the integral over a physical triangle T is
    area(T) * sum(w * f(nodes)).
    """

    degree: int
    bary: np.ndarray
    weights: np.ndarray


def triangle_rule(degree=16):
    """Rule of the requested polynomial exactness via a collapsed tensor grid."""
    n = degree // 2 + 1
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    xi = 0.5 * (xj + 1.0)      # weight (1-xi) absorbed: sum wj/4 = 1/2
    eta = 0.5 * (xl + 1.0)
    bary = []
    weights = []
    for i in range(n):
        for j in range(n):
            u = xi[i]
            v = eta[j] * (1.0 - xi[i])
            bary.append((1.0 - u - v, u, v))
            weights.append((wj[i] / 4.0) * (wl[j] / 2.0))
    w = np.asarray(weights)
    return QuadratureRule(degree, np.asarray(bary), w / w.sum())


# ---------------------------------------------------------------------------
# pie triangles: radial blending map

@dataclass(frozen=True)
class PieQuadratureMap:
    """Mapped quadrature nodes and weights on one pie triangle."""

    nodes: np.ndarray       # (npts, 2) physical points
    weights: np.ndarray     # (npts,) positive, sum = curved area
    bary: np.ndarray        # (npts, 3) w.r.t. the chord triangle


def pie_quadrature(mesh, t, order=12):
    """Tensor Gauss rule mapped onto the curved pie triangle t.

    The map is (r, s) -> v1 + r*(A(s) - v1) where A(s) is the ray/arc
    intersection through the chord point at parameter s; the Jacobian
    r * det[A - v1, A'(s)] is exact (implicit differentiation of the arc).
    """
    rec = mesh.triangles[t]
    if rec.kind != PIE:
        raise AssemblyError(f"triangle {t} is not pie-shaped")
    tri = mesh.tri_coords(t)
    v1, v2, v3 = tri
    arc = mesh.domain.arcs[rec.arc]
    conic = arc.conic
    xg, wg = roots_legendre(order)
    r = 0.5 * (xg + 1.0)
    wr = 0.5 * wg
    s = 0.5 * (xg + 1.0)
    ws = 0.5 * wg
    cdir = v3 - v2
    apts = np.empty((order, 2))
    adot = np.empty((order, 2))
    for j in range(order):
        c = v2 + s[j] * cdir
        a = arc_point_on_ray(arc, v1, c)
        g = grad_conic(conic, a)
        denom = float(g @ (c - v1))
        if denom == 0.0:
            raise AssemblyError(f"tangential ray on pie {t} (star-shape violated)")
        tpar = float((a - v1) @ (c - v1)) / float((c - v1) @ (c - v1))
        tdot = -tpar * float(g @ cdir) / denom
        apts[j] = a
        adot[j] = tdot * (c - v1) + tpar * cdir
    js = apts[:, 0] * 0.0
    js = (apts[:, 0] - v1[0]) * adot[:, 1] - (apts[:, 1] - v1[1]) * adot[:, 0]
    if np.any(js <= 0):
        raise AssemblyError(f"non-positive blending Jacobian on pie triangle {t}")
    nodes = np.empty((order * order, 2))
    weights = np.empty(order * order)
    k = 0
    for i in range(order):
        for j in range(order):
            nodes[k] = v1 + r[i] * (apts[j] - v1)
            weights[k] = wr[i] * ws[j] * r[i] * js[j]
            k += 1
    bary = bb.barycentric_many(tri, nodes)
    return PieQuadratureMap(nodes, weights, bary)


# ---------------------------------------------------------------------------
# per-triangle quadrature data shared by assembly and norms

class TriangleQuadrature:
    """Physical nodes/weights plus basis design matrices per triangle."""

    def __init__(self, space, degree=16, pie_order=12):
        self.space = space
        mesh = space.mesh
        self.rule = triangle_rule(degree)
        self._ref = {}
        for d in (5, 6):
            self._ref[d] = (
                bb.bernstein_matrix(d, self.rule.bary),
                bb.bernstein_matrix(d - 1, self.rule.bary),
                bb.bernstein_matrix(d - 2, self.rule.bary),
            )
        self.nodes = []
        self.weights = []
        self.basis = []        # (V, Gx, Gy, Hxx, Hxy, Hyy) per triangle
        for t in range(mesh.n_triangles):
            rec = mesh.triangles[t]
            tri = mesh.tri_coords(t)
            d = 5 if rec.kind == ORDINARY else 6
            if rec.kind == PIE:
                pq = pie_quadrature(mesh, t, order=pie_order)
                nodes, w, bary = pq.nodes, pq.weights, pq.bary
                B = bb.bernstein_matrix(d, bary)
                B1 = bb.bernstein_matrix(d - 1, bary)
                B2 = bb.bernstein_matrix(d - 2, bary)
            else:
                bary = self.rule.bary
                nodes = bary @ tri
                area = abs(bb.triangle_area(tri))
                w = area * self.rule.weights
                B, B1, B2 = self._ref[d]
            ax = bb.directional_coords(tri, (1.0, 0.0))
            ay = bb.directional_coords(tri, (0.0, 1.0))
            Mx, My = bb.diff_matrix(d, ax), bb.diff_matrix(d, ay)
            Gx, Gy = d * (B1 @ Mx), d * (B1 @ My)
            fac = d * (d - 1)
            Hxx = fac * (B2 @ (bb.diff_matrix(d - 1, ax) @ Mx))
            Hxy = fac * (B2 @ (bb.diff_matrix(d - 1, ay) @ Mx))
            Hyy = fac * (B2 @ (bb.diff_matrix(d - 1, ay) @ My))
            self.nodes.append(nodes)
            self.weights.append(w)
            self.basis.append((B, Gx, Gy, Hxx, Hxy, Hyy))

    def spline_data(self, spline, t, order=2):
        """(values, grads, hessians) of a spline at this triangle's nodes."""
        c = spline.patch(t)
        B, Gx, Gy, Hxx, Hxy, Hyy = self.basis[t]
        vals = B @ c
        grads = np.column_stack([Gx @ c, Gy @ c]) if order >= 1 else None
        hess = None
        if order >= 2:
            hess = np.empty((len(vals), 2, 2))
            hess[:, 0, 0] = Hxx @ c
            hess[:, 0, 1] = hess[:, 1, 0] = Hxy @ c
            hess[:, 1, 1] = Hyy @ c
        return vals, grads, hess


def integrate(quad, field, triangles=None):
    """Integral of a pointwise field over the mesh (or a triangle subset)."""
    tris = range(quad.space.mesh.n_triangles) if triangles is None else triangles
    total = 0.0
    for t in tris:
        total += float(quad.weights[t] @ np.asarray(field(quad.nodes[t])))
    return total


def domain_area(quad):
    return integrate(quad, lambda x: np.ones(len(x)))


# ---------------------------------------------------------------------------
# the linear elliptic weak form

@dataclass
class LinearEllipticProblem:
    """Coefficients of the weak form
    int grad(u) . A grad(v) + int v b . grad(u) + int c u v = int f v.

    Each field is a callable of (points, triangle_index): A returns
    (n,2,2) matrices, b returns (n,2), c and f return (n,).  None means
    the term is absent.  Analytic coefficients can ignore the triangle
    index (see ``pointwise`` and ``constant_matrix``)."""

    A: object = None
    b: object = None
    c: object = None
    f: object = None


def pointwise(fn):
    """Wrap a points-only callable as a weak-form coefficient field."""
    return lambda pts, t: fn(pts)


def constant_matrix(M):
    """Constant matrix-valued coefficient field (e.g. the identity)."""
    M = np.asarray(M, dtype=float)
    return lambda pts, t: np.tile(M, (len(pts), 1, 1))


@dataclass
class SparseSystem:
    matrix: sps.csr_matrix
    rhs: np.ndarray


def assemble(problem, space, quad=None):
    """Galerkin system of the weak form in the determining-set basis."""
    if quad is None:
        quad = TriangleQuadrature(space)
    mesh = space.mesh
    n = space.dimension
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    for t in range(mesh.n_triangles):
        gdofs = space.tri_cols[t]
        if mesh.triangles[t].kind == PIE:
            Z = space.pie_product_maps[t]
        else:
            Z = space.tri_maps[t]
        B, Gx, Gy, _, _, _ = quad.basis[t]
        w = quad.weights[t]
        pts = quad.nodes[t]
        Phi = B @ Z
        Dx = Gx @ Z
        Dy = Gy @ Z
        loc = np.zeros((len(gdofs), len(gdofs)))
        if problem.A is not None:
            Amat = np.asarray(problem.A(pts, t))
            qx = Amat[:, 0, 0, None] * Dx + Amat[:, 0, 1, None] * Dy
            qy = Amat[:, 1, 0, None] * Dx + Amat[:, 1, 1, None] * Dy
            loc += Dx.T @ (w[:, None] * qx) + Dy.T @ (w[:, None] * qy)
        if problem.b is not None:
            bvec = np.asarray(problem.b(pts, t))
            loc += Phi.T @ (w[:, None] * (bvec[:, 0, None] * Dx + bvec[:, 1, None] * Dy))
        if problem.c is not None:
            cvals = np.asarray(problem.c(pts, t))
            loc += Phi.T @ ((w * cvals)[:, None] * Phi)
        if problem.f is not None:
            fvals = np.asarray(problem.f(pts, t))
            rhs[gdofs] += Phi.T @ (w * fvals)
        ii, jj = np.meshgrid(gdofs, gdofs, indexing="ij")
        rows.append(ii.ravel())
        cols.append(jj.ravel())
        vals.append(loc.ravel())
    matrix = sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    return SparseSystem(matrix, rhs)


@dataclass
class SolveResult:
    dofs: np.ndarray
    rel_residual: float


def solve_sparse(system):
    """Direct sparse solve with a residual check."""
    import warnings

    A, b = system.matrix, system.rhs
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(A.tocsc(), b)
        except spla.MatrixRankWarning as exc:
            raise SolverError(f"matrix is singular: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("sparse factorization produced non-finite values "
                          "(matrix singular or severely ill-conditioned)")
    bn = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b) / (bn if bn > 0 else 1.0)
    if res > 1e-6:
        est = spla.norm(A) * np.linalg.norm(x) / max(bn, 1e-300)
        raise SolverError(
            f"sparse solve residual {res:.2e} too large (condition estimate {est:.2e})"
        )
    return SolveResult(x, float(res))


# ---------------------------------------------------------------------------
# norms

def _accumulate_norms(quad, data_fn):
    """Sum L2^2, H1-seminorm^2, H2-seminorm^2 of a field given per-triangle
    (values, grads, hessians)."""
    l2 = h1 = h2 = 0.0
    mesh = quad.space.mesh
    for t in range(mesh.n_triangles):
        w = quad.weights[t]
        vals, grads, hess = data_fn(t)
        l2 += float(w @ (vals * vals))
        if grads is not None:
            h1 += float(w @ (grads[:, 0] ** 2 + grads[:, 1] ** 2))
        if hess is not None:
            h2 += float(w @ (
                hess[:, 0, 0] ** 2 + 2.0 * hess[:, 0, 1] ** 2 + hess[:, 1, 1] ** 2
            ))
    return l2, h1, h2


def error_norms(spline, quad, ref=None, ref_batch=None):
    """(L2, H1, H2) norms of spline - reference.

    ref: (value, gradient, hessian) callables on (n,2) arrays, or None to
    measure the spline itself.  ref_batch: alternative per-triangle batch
    evaluator t, pts -> (vals, grads, hess), used for comparing against a
    spline from another level.  Full norms: H1 and H2 include the
    lower-order terms.
    """
    def data(t):
        vals, grads, hess = quad.spline_data(spline, t)
        pts = quad.nodes[t]
        if ref is not None:
            rv, rg, rh = ref
            vals = vals - np.asarray(rv(pts))
            grads = grads - np.asarray(rg(pts))
            hess = hess - np.asarray(rh(pts))
        elif ref_batch is not None:
            rv, rg, rh = ref_batch(t, pts)
            vals = vals - rv
            grads = grads - rg
            hess = hess - rh
        return vals, grads, hess

    l2, h1s, h2s = _accumulate_norms(quad, data)
    return (
        float(np.sqrt(l2)),
        float(np.sqrt(l2 + h1s)),
        float(np.sqrt(l2 + h1s + h2s)),
    )


def field_norms(quad, ref):
    """(L2, H1, H2) norms of an analytic field given by callables."""
    rv, rg, rh = ref

    def data(t):
        pts = quad.nodes[t]
        return np.asarray(rv(pts)), np.asarray(rg(pts)), np.asarray(rh(pts))

    l2, h1s, h2s = _accumulate_norms(quad, data)
    return (
        float(np.sqrt(l2)),
        float(np.sqrt(l2 + h1s)),
        float(np.sqrt(l2 + h1s + h2s)),
    )


def l2_norm(spline, quad):
    """L2 norm of a spline (values only, no derivatives)."""
    total = 0.0
    for t in range(quad.space.mesh.n_triangles):
        vals = quad.basis[t][0] @ spline.patch(t)
        total += float(quad.weights[t] @ (vals * vals))
    return float(np.sqrt(total))


def residual_norm(spline, quad, g):
    """L2 norm of det(Hessian of spline) - g over the domain."""
    total = 0.0
    for t in range(quad.space.mesh.n_triangles):
        _, _, hess = quad.spline_data(spline, t)
        det = hess[:, 0, 0] * hess[:, 1, 1] - hess[:, 0, 1] * hess[:, 1, 0]
        r = det - np.asarray(g(quad.nodes[t]))
        total += float(quad.weights[t] @ (r * r))
    return float(np.sqrt(total))
