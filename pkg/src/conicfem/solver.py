"""Newton-Galerkin solver for the Monge-Ampere equation.

Solves det(Hessian u) = g with homogeneous Dirichlet data by Newton's
method, where each linearized problem is solved by the C1 Galerkin
method: the linearization of u -> det(Hessian u) - g at u_k acts on a
correction w as cof(Hessian u_k) : Hessian w, and since the cofactor of
a Hessian field of a C1 function is row-wise divergence free with
edge-continuous normal flux, the correction solves

    int grad(w) . cof(Hessian u_k) grad(v) = -(det(Hessian u_k) - g, v)

for all test splines v.  The first level starts from the Galerkin
solution of the Poisson problem laplace(u) = 2 sqrt(g); refined levels
start from a quasi-interpolant of the previous level's last iterate.
"""

from dataclasses import dataclass, field

import numpy as np

from . import assembly as asm
from . import bernstein as bb
from .mesh import PIE, refine_uniform
from .space import build_space
from .geometry import grad_conic


@dataclass
class MongeAmpereProblem:
    """det(Hessian u) = g > 0 on a conic-bounded domain, u = 0 on the boundary.

    g maps (n,2) point arrays to positive values; exact, when available,
    is a (value, gradient, hessian) triple of callables used for error
    tables.  Only homogeneous boundary data is supported.
    """

    domain: object
    initial_mesh: object
    g: object
    exact: tuple = None
    name: str = "monge-ampere"


@dataclass
class NewtonState:
    spline: object
    iterations: int
    update_norms: list
    diverged: bool = False


@dataclass
class LevelReport:
    level: int
    dimension: int
    iterations: int
    update_norms: list
    residual: float
    errors: tuple = None        # vs exact solution, (L2, H1, H2)
    eps_errors: tuple = None    # vs next level, (L2, H1, H2)
    rates: dict = field(default_factory=dict)
    hessian_eigmin: float = None
    diverged: bool = False
    init_errors: tuple = None
    init_residual: float = None


class LevelContext:
    """Space + quadrature of one refinement level."""

    def __init__(self, mesh, quad_degree=16, pie_order=12):
        self.mesh = mesh
        self.space = build_space(mesh)
        self.quad = asm.TriangleQuadrature(self.space, degree=quad_degree,
                                           pie_order=pie_order)


def _check_positive_g(problem, ctx):
    for t in range(ctx.mesh.n_triangles):
        if np.any(np.asarray(problem.g(ctx.quad.nodes[t])) <= 0.0):
            raise ValueError("datum g must be positive at all quadrature points")


def linearize_ma(u, g, quad):
    """Linear elliptic problem of one Newton step at the iterate u.

    A is the cofactor of the spline's Hessian (tabulated at the quadrature
    nodes), b and c vanish, and f is the current residual det(Hessian) - g.
    Also returns the minimum eigenvalue of A over all quadrature points
    (the ellipticity monitor; for 2x2 cofactors these are exactly the
    Hessian eigenvalues)."""
    cof_tab = {}
    res_tab = {}
    eigmin = np.inf
    for t in range(quad.space.mesh.n_triangles):
        _, _, hess = quad.spline_data(u, t)
        cof = np.empty_like(hess)
        cof[:, 0, 0] = hess[:, 1, 1]
        cof[:, 1, 1] = hess[:, 0, 0]
        cof[:, 0, 1] = cof[:, 1, 0] = -hess[:, 0, 1]
        cof_tab[t] = cof
        det = hess[:, 0, 0] * hess[:, 1, 1] - hess[:, 0, 1] ** 2
        res_tab[t] = det - np.asarray(g(quad.nodes[t]))
        half_tr = 0.5 * (hess[:, 0, 0] + hess[:, 1, 1])
        rad = np.sqrt((0.5 * (hess[:, 0, 0] - hess[:, 1, 1])) ** 2
                      + hess[:, 0, 1] ** 2)
        eigmin = min(eigmin, float((half_tr - rad).min()))
    problem = asm.LinearEllipticProblem(
        A=lambda pts, t: cof_tab[t],
        f=lambda pts, t: res_tab[t],
    )
    return problem, eigmin


def poisson_initial_guess(ctx, g):
    """Galerkin solution of laplace(u) = 2 sqrt(g) with zero boundary values."""
    prob = asm.LinearEllipticProblem(
        A=asm.constant_matrix(np.eye(2)),
        f=lambda pts, t: 2.0 * np.sqrt(np.asarray(g(pts))),
    )
    system = asm.assemble(prob, ctx.space, ctx.quad)
    result = asm.solve_sparse(asm.SparseSystem(system.matrix, -system.rhs))
    return ctx.space.spline(result.dofs)


def newton_step(ctx, u, g):
    """One Newton update; returns (new iterate, L2 norm of the correction)."""
    problem, eigmin = linearize_ma(u, g, ctx.quad)
    system = asm.assemble(problem, ctx.space, ctx.quad)
    result = asm.solve_sparse(asm.SparseSystem(system.matrix, -system.rhs))
    w = ctx.space.spline(result.dofs)
    u_next = ctx.space.spline(u.dofs - w.dofs)
    return u_next, asm.l2_norm(w, ctx.quad), eigmin


def run_level(ctx, g, u0, tol=1e-15, max_iter=20, floor_factor=100.0):
    """Newton iteration on one level until the correction norm drops below tol.

    Corrections smaller than floor_factor * eps * |u| are roundoff-level
    and also terminate the loop: the nominal tolerance 1e-15 can sit below
    the double-precision floor of the assembled correction.  The reported
    iteration count excludes the final below-tolerance correction (except
    that a single immediately-converged step counts as one), matching the
    convention of the reference convergence tables.
    """
    u = u0
    norms = []
    eigmin = np.inf
    diverged = False
    converged = False
    for k in range(1, max_iter + 1):
        u, n, e = newton_step(ctx, u, g)
        norms.append(n)
        eigmin = min(eigmin, e)
        tol_eff = max(tol, floor_factor * np.finfo(float).eps
                      * asm.l2_norm(u, ctx.quad))
        if n < tol_eff:
            converged = True
            break
        if len(norms) >= 4 and norms[-1] > norms[-2] > norms[-3] > norms[-4]:
            diverged = True
            break
    else:
        diverged = True
    if len(norms) == 1:
        m = 1
    elif converged:
        m = len(norms) - 1
    else:
        m = len(norms)
    state = NewtonState(u, m, norms, diverged)
    return state, eigmin


def transfer_guess(coarse_ctx, u_coarse, fine_ctx):
    """Quasi-interpolant of a coarse spline in the next level's space.

    Vertex dofs are read off the coarse 2-jet; edge/pie/buffer dofs come
    from re-expanding the coarse piece on the fine triangle (exact where
    the coarse restriction has matching degree, interpolation at the fine
    domain points otherwise)."""
    fine = fine_ctx.space
    mesh_f = fine.mesh
    mesh_c = coarse_ctx.space.mesh
    parents = mesh_f.parents
    if parents is None:
        raise ValueError("fine mesh does not record its parent triangles")
    dofs = np.zeros(fine.dimension)
    mds = fine.mds

    dom_pts5 = np.array(bb.multi_indices(5), dtype=float) / 5.0
    dom_pts6 = np.array(bb.multi_indices(6), dtype=float) / 6.0
    coll5 = bb.bernstein_matrix(5, dom_pts5)
    coll6 = bb.bernstein_matrix(6, dom_pts6)
    coll4 = bb.bernstein_matrix(4, np.array(bb.multi_indices(4), dtype=float) / 4.0)

    for v, start in mds.vertex_block.items():
        t_f = mds.dofs[start].tri
        tc = parents[t_f]
        x = mesh_f.vertices[v]
        val = u_coarse.eval_on_triangle(tc, x, 0)
        gr = u_coarse.eval_on_triangle(tc, x, 1)
        he = u_coarse.eval_on_triangle(tc, x, 2)
        jet = np.array([val, gr[0], gr[1], he[0, 0], he[0, 1], he[1, 1]])
        dofs[start:start + 6] = fine.vertex_dofs_from_jet(v, jet)

    for e, pos in mds.edge_pos.items():
        dof = mds.dofs[pos]
        t_f = dof.tri
        tc = parents[t_f]
        tri_f = mesh_f.tri_coords(t_f)
        pts = dom_pts5 @ tri_f
        vals, _, _ = u_coarse.eval_batch(tc, pts, order=0)
        c5 = np.linalg.solve(coll5, vals)
        dofs[pos] = c5[bb.index_map(5)[dof.local]]

    for v, pos in mds.corner_pos.items():
        dof = mds.dofs[pos]
        t_f = dof.tri
        tc = parents[t_f]
        x = mesh_f.vertices[v]
        gr = u_coarse.eval_on_triangle(tc, x, 1)
        conic = mesh_f.pie_conic(t_f)
        gq = grad_conic(conic, x) / fine.pie_scale[t_f]
        dofs[pos] = float(gr @ gq) / float(gq @ gq)

    for t_f, start in mds.pie_block.items():
        tc = parents[t_f]
        if mesh_c.triangles[tc].kind != PIE:
            raise ValueError("pie triangle refined from a non-pie parent")
        tri_f = mesh_f.tri_coords(t_f)
        tri_c = mesh_c.tri_coords(tc)
        # s = p_c * conic/scale_c = p_f * conic/scale_f  =>  p_f = (scale_f/scale_c) p_c
        ratio = fine.pie_scale[t_f] / coarse_ctx.space.pie_scale[tc]
        pts = (np.array(bb.multi_indices(4), dtype=float) / 4.0) @ tri_f
        bary_c = bb.barycentric_many(tri_c, pts)
        vals = bb.bernstein_matrix(4, bary_c) @ u_coarse.factor(tc)
        c4 = np.linalg.solve(coll4, ratio * vals)
        for i, g_loc in enumerate(
                d.local for d in mds.dofs[start:start + 5]):
            dofs[start + i] = c4[bb.index_map(4)[g_loc]]

    for t_f, start in mds.buffer_block.items():
        tc = parents[t_f]
        tri_f = mesh_f.tri_coords(t_f)
        pts = dom_pts6 @ tri_f
        vals, _, _ = u_coarse.eval_batch(tc, pts, order=0)
        c6 = np.linalg.solve(coll6, vals)
        for i, g_loc in enumerate(
                d.local for d in mds.dofs[start:start + 2]):
            dofs[start + i] = c6[bb.index_map(6)[g_loc]]

    return fine.spline(dofs)


def _coarse_batch_evaluator(u_coarse, fine_mesh):
    """Per-fine-triangle evaluator of a previous-level spline (via parents)."""
    parents = fine_mesh.parents

    def ref_batch(t, pts):
        return u_coarse.eval_batch(parents[t], pts, order=2)

    return ref_batch


def multilevel_run(problem, levels, tol=1e-15, max_iter=20,
                   quad_degree=16, pie_order=12, verbose=False):
    """Newton-Galerkin runs on a hierarchy of uniformly refined meshes.

    Returns the list of LevelReports (with consecutive-level eps errors
    and rates filled in) and the final-level solution spline.
    """
    reports = []
    meshes = [problem.initial_mesh]
    for _ in range(levels - 1):
        meshes.append(refine_uniform(meshes[-1]))

    prev_ctx = None
    prev_u = None
    prev_report = None
    u = None
    for lev, mesh in enumerate(meshes, start=1):
        ctx = LevelContext(mesh, quad_degree=quad_degree, pie_order=pie_order)
        _check_positive_g(problem, ctx)
        if lev == 1:
            u0 = poisson_initial_guess(ctx, problem.g)
            init_res = asm.residual_norm(u0, ctx.quad, problem.g)
            init_err = None
            if problem.exact is not None:
                init_err = asm.error_norms(u0, ctx.quad, ref=problem.exact)
        else:
            u0 = transfer_guess(prev_ctx, prev_u, ctx)
            init_res = init_err = None
        state, eigmin = run_level(ctx, problem.g, u0, tol=tol, max_iter=max_iter)
        u = state.spline
        rep = LevelReport(
            level=lev,
            dimension=ctx.space.dimension,
            iterations=state.iterations,
            update_norms=state.update_norms,
            residual=asm.residual_norm(u, ctx.quad, problem.g),
            hessian_eigmin=eigmin,
            diverged=state.diverged,
            init_errors=init_err,
            init_residual=init_res,
        )
        if problem.exact is not None:
            rep.errors = asm.error_norms(u, ctx.quad, ref=problem.exact)
        if prev_report is not None:
            # difference of consecutive-level solutions, measured on the
            # finer quadrature with the coarse spline read through parents
            prev_report.eps_errors = _eps_errors(prev_u, u, ctx, mesh)
        if verbose:
            print(f"level {lev}: dim={rep.dimension} m={rep.iterations} "
                  f"R={rep.residual:.3e} updates={['%.1e' % n for n in rep.update_norms]}")
        reports.append(rep)
        prev_ctx, prev_u, prev_report = ctx, u, rep

    _fill_rates(reports)
    return reports, u


def _eps_errors(u_coarse, u_fine, fine_ctx, fine_mesh):
    """(L2, H1, H2) norms of the difference of consecutive-level solutions."""
    return asm.error_norms(
        u_fine, fine_ctx.quad,
        ref_batch=_coarse_batch_evaluator(u_coarse, fine_mesh),
    )


def _fill_rates(reports):
    def rate(a, b):
        if a is None or b is None or a <= 0 or b <= 0:
            return None
        return float(np.log2(a / b))

    for i, rep in enumerate(reports):
        if i == 0:
            continue
        prev = reports[i - 1]
        if rep.errors and prev.errors:
            for k, name in enumerate(("L2", "H1", "H2")):
                rep.rates[name] = rate(prev.errors[k], rep.errors[k])
        if rep.eps_errors and prev.eps_errors:
            for k, name in enumerate(("L2", "H1", "H2")):
                rep.rates[name] = rate(prev.eps_errors[k], rep.eps_errors[k])
        rep.rates["R"] = rate(prev.residual, rep.residual)
