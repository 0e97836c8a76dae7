import math

import numpy as np
import pytest

from conicfem import assembly as asm
from conicfem.mesh import PIE
from conicfem.problems import (builtin_domain, disk_exact_solution,
                               wheel_mesh)
from conicfem.space import build_space, propagate

from _oracles import disk_radial_integral

EYE = asm.constant_matrix(np.eye(2))


def test_rule_weights_and_exactness():
    rule = asm.triangle_rule(16)
    assert abs(rule.weights.sum() - 1.0) < 1e-14
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    pts = rule.bary @ tri
    for a in range(17):
        for b in range(17 - a):
            approx = 0.5 * float(rule.weights @ (pts[:, 0] ** a * pts[:, 1] ** b))
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert abs(approx - exact) <= 1e-14 * max(1.0, 1.0 / exact) * exact * 10


def test_areas(disk_space2, ellipse_mesh2):
    from conicfem.space import build_space
    quad = asm.TriangleQuadrature(disk_space2)
    assert abs(asm.domain_area(quad) - np.pi) < 1e-10 * np.pi
    equad = asm.TriangleQuadrature(build_space(ellipse_mesh2))
    assert abs(asm.domain_area(equad) - np.pi * 0.4) < 1e-10 * np.pi * 0.4
    # second moment over the disk
    val = asm.integrate(quad, lambda x: x[:, 0] ** 2)
    assert abs(val - np.pi / 4) < 1e-9 * np.pi / 4


def test_pie_quadrature_jacobians(disk_space):
    mesh = disk_space.mesh
    for t in mesh.triangles_of_kind(PIE):
        pq = asm.pie_quadrature(mesh, t)
        assert np.all(pq.weights > 0)
    with pytest.raises(asm.AssemblyError):
        asm.pie_quadrature(mesh, mesh.triangles_of_kind("ordinary")[0])


def test_mass_matrix_spd_and_symmetry(disk_space):
    quad = asm.TriangleQuadrature(disk_space)
    mass = asm.assemble(asm.LinearEllipticProblem(
        c=asm.pointwise(lambda x: np.ones(len(x)))), disk_space, quad)
    M = mass.matrix.toarray()
    assert np.abs(M - M.T).max() < 1e-12 * np.abs(M).max()
    assert np.linalg.eigvalsh(M).min() > 0


def test_stiffness_symmetric_for_symmetric_A(disk_space):
    quad = asm.TriangleQuadrature(disk_space)
    def A(pts, t):
        out = np.empty((len(pts), 2, 2))
        out[:, 0, 0] = 1.0 + pts[:, 0] ** 2
        out[:, 1, 1] = 2.0 + pts[:, 1] ** 2
        out[:, 0, 1] = out[:, 1, 0] = 0.3 * pts[:, 0] * pts[:, 1]
        return out
    K = asm.assemble(asm.LinearEllipticProblem(A=A), disk_space, quad).matrix.toarray()
    assert np.abs(K - K.T).max() < 1e-12 * np.abs(K).max()


def test_solve_sparse_identity_and_mass_roundtrip(disk_space):
    import scipy.sparse as sps
    n = disk_space.dimension
    rng = np.random.default_rng(0)
    b = rng.standard_normal(n)
    res = asm.solve_sparse(asm.SparseSystem(sps.identity(n, format="csr"), b))
    assert np.allclose(res.dofs, b)
    quad = asm.TriangleQuadrature(disk_space)
    mass = asm.assemble(asm.LinearEllipticProblem(
        c=asm.pointwise(lambda x: np.ones(len(x)))), disk_space, quad)
    x = rng.standard_normal(n)
    res = asm.solve_sparse(asm.SparseSystem(mass.matrix, mass.matrix @ x))
    assert np.abs(res.dofs - x).max() < 1e-10 * max(1.0, np.abs(x).max())
    assert res.rel_residual < 1e-10


def test_singular_solve_raises(disk_space):
    import scipy.sparse as sps
    n = disk_space.dimension
    A = sps.csr_matrix((n, n))
    with pytest.raises(asm.SolverError):
        asm.solve_sparse(asm.SparseSystem(A, np.ones(n)))


def test_poisson_reproduces_in_space_solution(disk_space2):
    quad = asm.TriangleQuadrature(disk_space2)
    prob = asm.LinearEllipticProblem(A=EYE, f=asm.pointwise(lambda x: 2.0 * np.ones(len(x))))
    sys0 = asm.assemble(prob, disk_space2, quad)
    res = asm.solve_sparse(asm.SparseSystem(sys0.matrix, -sys0.rhs))
    u = disk_space2.spline(res.dofs)
    ref = (
        lambda x: 0.5 * (x[:, 0] ** 2 + x[:, 1] ** 2 - 1.0),
        lambda x: x.copy(),
        lambda x: np.tile(np.eye(2), (len(x), 1, 1)),
    )
    errs = asm.error_norms(u, quad, ref=ref)
    assert errs[0] < 1e-10


def test_manufactured_solution_and_orthogonality(disk_space2):
    # u* = (1 - x^2 - y^2)^2 lies in the space; f = -laplace(u*) = 8 - 16 r^2
    quad = asm.TriangleQuadrature(disk_space2)
    prob = asm.LinearEllipticProblem(
        A=EYE,
        f=asm.pointwise(lambda x: 8.0 - 16.0 * (x[:, 0] ** 2 + x[:, 1] ** 2)),
    )
    system = asm.assemble(prob, disk_space2, quad)
    res = asm.solve_sparse(asm.SparseSystem(system.matrix, system.rhs))
    u = disk_space2.spline(res.dofs)

    def val(x):
        return (1.0 - x[:, 0] ** 2 - x[:, 1] ** 2) ** 2

    def grad(x):
        w = 1.0 - x[:, 0] ** 2 - x[:, 1] ** 2
        return np.column_stack([-4.0 * x[:, 0] * w, -4.0 * x[:, 1] * w])

    def hess(x):
        w = 1.0 - x[:, 0] ** 2 - x[:, 1] ** 2
        h = np.empty((len(x), 2, 2))
        h[:, 0, 0] = -4.0 * w + 8.0 * x[:, 0] ** 2
        h[:, 1, 1] = -4.0 * w + 8.0 * x[:, 1] ** 2
        h[:, 0, 1] = h[:, 1, 0] = 8.0 * x[:, 0] * x[:, 1]
        return h

    errs = asm.error_norms(u, quad, ref=(val, grad, hess))
    assert errs[0] < 1e-9
    # Galerkin orthogonality: residual functional vanishes on every basis fn
    resid = system.matrix @ res.dofs - system.rhs
    assert np.abs(resid).max() < 1e-9 * max(1.0, np.abs(system.rhs).max())


def test_dense_bilinear_form_agreement():
    # smallest valid wheel (4 boundary vertices) against per-pair quadrature
    dom, _ = builtin_domain("disk")
    pts = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
    mesh = wheel_mesh(dom, pts, [0, 1, 2, 3], shrink=0.5)
    space = build_space(mesh)
    quad = asm.TriangleQuadrature(space)
    prob = asm.LinearEllipticProblem(A=EYE)
    K = asm.assemble(prob, space, quad).matrix.toarray()
    rng = np.random.default_rng(1)
    eye = np.eye(space.dimension)
    idx = rng.integers(0, space.dimension, size=(25, 2))
    splines = {}
    for lam in np.unique(idx):
        splines[lam] = propagate(space, eye[lam])
    for lam, mu in idx:
        s_l, s_m = splines[lam], splines[mu]
        total = 0.0
        for t in range(mesh.n_triangles):
            _, gl, _ = quad.spline_data(s_l, t, order=1)
            _, gm, _ = quad.spline_data(s_m, t, order=1)
            total += float(quad.weights[t] @ (gl[:, 0] * gm[:, 0] + gl[:, 1] * gm[:, 1]))
        scale = max(np.abs(K).max(), 1e-12)
        assert abs(K[lam, mu] - total) < 1e-10 * scale


def test_error_norms_self_is_zero(disk_space):
    rng = np.random.default_rng(2)
    s = propagate(disk_space, rng.standard_normal(disk_space.dimension))
    quad = asm.TriangleQuadrature(disk_space)
    errs = asm.error_norms(s, quad, ref_batch=lambda t, pts: s.eval_batch(t, pts))
    assert max(errs) < 1e-12


def test_zero_spline_vs_exact_matches_radial_oracle(disk_space2):
    quad = asm.TriangleQuadrature(disk_space2)
    zero = disk_space2.zero()
    exact = disk_exact_solution()
    l2, h1, h2 = asm.error_norms(zero, quad, ref=exact)
    c = np.exp(0.5)
    l2_ref = np.sqrt(disk_radial_integral(lambda r: (np.exp(0.5 * r**2) - c) ** 2))
    h1_ref = np.sqrt(l2_ref**2 + disk_radial_integral(lambda r: np.exp(r**2) * r**2))
    h2_ref = np.sqrt(h1_ref**2 + disk_radial_integral(
        lambda r: np.exp(r**2) * (2.0 + 2.0 * r**2 + r**4)))
    assert abs(l2 - l2_ref) < 1e-8 * l2_ref
    assert abs(h1 - h1_ref) < 1e-8 * h1_ref
    assert abs(h2 - h2_ref) < 1e-8 * h2_ref


def test_residual_norm_cases(disk_space2):
    quad = asm.TriangleQuadrature(disk_space2)
    # det(Hessian) of the in-space paraboloid (r^2-1)/2 is exactly 1
    prob = asm.LinearEllipticProblem(A=EYE, f=asm.pointwise(lambda x: 2.0 * np.ones(len(x))))
    system = asm.assemble(prob, disk_space2, quad)
    res = asm.solve_sparse(asm.SparseSystem(system.matrix, -system.rhs))
    u = disk_space2.spline(res.dofs)
    assert asm.residual_norm(u, quad, lambda x: np.ones(len(x))) < 1e-10
    zero = disk_space2.zero()
    assert asm.residual_norm(zero, quad, lambda x: np.zeros(len(x))) == 0.0
