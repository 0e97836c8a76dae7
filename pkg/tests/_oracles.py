"""Independent oracles used by the test suite.

These deliberately avoid the code paths they check: the dimension oracle
assembles the raw smoothness/boundary constraint system on unreduced patch
coefficients and counts its rank; the product oracle multiplies in the
monomial basis; radial quadrature integrates rotationally symmetric fields
with a 1-D Gauss rule.
"""

import numpy as np
from scipy.special import roots_legendre

from conicfem import bernstein as bb
from conicfem.geometry import normalized_pie_conic
from conicfem.mesh import ORDINARY, PIE
from conicfem.space import ring_to_jet_matrix


# ---------------------------------------------------------------------------
# monomial-basis product oracle

def bb_to_monomial(d, coeffs, tri):
    """Coefficients of x^a y^b monomials (a+b <= d) of a BB polynomial,
    via collocation at generic points and a Vandermonde solve."""
    rng = np.random.default_rng(1234)
    n = bb.n_coeffs(d)
    pts = rng.standard_normal((n, 2))
    V = np.array([
        [x**a * y**b for a in range(d + 1) for b in range(d + 1 - a)]
        for x, y in pts
    ])
    vals = [bb.de_casteljau(d, coeffs, bb.barycentric(tri, p)) for p in pts]
    return np.linalg.solve(V, vals)


def monomial_product(d1, m1, d2, m2):
    """Product of two monomial coefficient vectors."""
    def unpack(d, m):
        out = {}
        k = 0
        for a in range(d + 1):
            for b in range(d + 1 - a):
                out[(a, b)] = m[k]
                k += 1
        return out

    p1, p2 = unpack(d1, m1), unpack(d2, m2)
    d = d1 + d2
    prod = {}
    for (a1, b1), c1 in p1.items():
        for (a2, b2), c2 in p2.items():
            key = (a1 + a2, b1 + b2)
            prod[key] = prod.get(key, 0.0) + c1 * c2
    return np.array([prod.get((a, b), 0.0)
                     for a in range(d + 1) for b in range(d + 1 - a)])


def monomial_to_bb(d, mono, tri):
    """Inverse of bb_to_monomial (collocation at the domain points)."""
    lam = np.array(bb.multi_indices(d), dtype=float) / d
    pts = lam @ np.asarray(tri, dtype=float)
    V = np.array([
        [x**a * y**b for a in range(d + 1) for b in range(d + 1 - a)]
        for x, y in pts
    ])
    vals = V @ mono
    B = bb.bernstein_matrix(d, lam)
    return np.linalg.solve(B, vals)


# ---------------------------------------------------------------------------
# dimension oracle: rank of the raw constraint system

def space_dimension_by_rank(mesh):
    """Dimension of the constrained piecewise-polynomial space, computed as
    (#raw coefficients) - rank(smoothness + boundary constraint matrix).

    Raw unknowns: 21 per ordinary (quintic), 28 per buffer (sextic), 15 per
    pie triangle (the quartic factor; the conic factor enforces the zero
    boundary values).  Constraints: C0/C1 conditions across every interior
    edge in a uniform degree-6 representation, plus full 2-jet agreement of
    adjacent pieces at every interior vertex.
    """
    offsets = []
    sizes = []
    pos = 0
    to6 = []
    raise56 = bb.degree_raise_matrix(5, 6)
    for t in range(mesh.n_triangles):
        kind = mesh.triangles[t].kind
        n = {ORDINARY: 21, PIE: 15}.get(kind, 28)
        offsets.append(pos)
        sizes.append(n)
        pos += n
        if kind == ORDINARY:
            to6.append(raise56)
        elif kind == PIE:
            qbb = normalized_pie_conic(mesh.pie_conic(t), mesh.tri_coords(t))
            to6.append(bb.product_matrix(4, 2, qbb))
        else:
            to6.append(np.eye(28))
    n_raw = pos

    rows = []

    def add_row(contribs):
        row = np.zeros(n_raw)
        for t, local_row in contribs:
            row[offsets[t]:offsets[t] + sizes[t]] += local_row
        rows.append(row)

    im6 = bb.index_map(6)
    for e in mesh.interior_edges():
        rec = mesh.edges[e]
        ta, tb = rec.tris
        slots_a = tuple(mesh.triangles[ta].verts.index(v) + 1 for v in rec.verts)
        slots_b = tuple(mesh.triangles[tb].verts.index(v) + 1 for v in rec.verts)
        A6, B6 = to6[ta], to6[tb]
        # C0: matching edge rows
        for m, gb in enumerate(bb.edge_row_indices(6, slots_b, 0)):
            ga = [0, 0, 0]
            ga[slots_a[0] - 1] = 6 - m
            ga[slots_a[1] - 1] = m
            add_row([(tb, B6[im6[gb]]), (ta, -A6[im6[tuple(ga)]])])
        # C1: first interior row of side b from side a
        off_b = 6 - slots_b[0] - slots_b[1]
        w = mesh.vertices[mesh.triangles[tb].verts[off_b - 1]]
        b_off = bb.barycentric(mesh.tri_coords(ta), w)
        for m, gb in enumerate(bb.edge_row_indices(6, slots_b, 1)):
            base = [0, 0, 0]
            base[slots_a[0] - 1] = 5 - m
            base[slots_a[1] - 1] = m
            local = B6[im6[gb]].copy()
            contrib_a = np.zeros(A6.shape[1])
            for s in range(3):
                gg = base.copy()
                gg[s] += 1
                contrib_a -= b_off[s] * A6[im6[tuple(gg)]]
            add_row([(tb, local), (ta, contrib_a)])

    # twice differentiable at interior vertices: adjacent pieces share jets
    for v in mesh.interior_vertices():
        tris = mesh.vertex_triangles(v)
        pairs = []
        for t in tris:
            for u in tris:
                if t < u:
                    shared = set(mesh.triangles[t].verts) & set(mesh.triangles[u].verts)
                    if len(shared) == 2:
                        pairs.append((t, u))
        for ta, tb in pairs:
            Ja = _jet_rows(mesh, ta, v) @ to6[ta]
            Jb = _jet_rows(mesh, tb, v) @ to6[tb]
            for r in range(6):
                add_row([(ta, Ja[r]), (tb, -Jb[r])])

    M = np.array(rows)
    norms = np.linalg.norm(M, axis=1)
    M = M[norms > 0] / norms[norms > 0, None]
    sv = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(sv > 1e-8 * sv[0]))
    return n_raw - rank


def _jet_rows(mesh, t, v):
    """Rows extracting the 2-jet at vertex v from a degree-6 patch on t."""
    tri = mesh.tri_coords(t)
    slot = mesh.triangles[t].verts.index(v) + 1
    ring = bb.vertex_ring(6, slot)
    im = bb.index_map(6)
    sel = np.zeros((6, 28))
    for i, g in enumerate(ring):
        sel[i, im[g]] = 1.0
    return ring_to_jet_matrix(tri, slot, 6) @ sel


# ---------------------------------------------------------------------------
# vectorized checks over many dof vectors at once

def _global_degree6_maps(space):
    """Per-triangle (28 x dim) dense maps from dofs to degree-6 coefficients."""
    mesh = space.mesh
    dim = space.dimension
    raise56 = bb.degree_raise_matrix(5, 6)
    out = []
    for t in range(mesh.n_triangles):
        cols = space.tri_cols[t]
        if mesh.triangles[t].kind == PIE:
            Z = space.pie_product_maps[t]
        elif mesh.triangles[t].kind == ORDINARY:
            Z = raise56 @ space.tri_maps[t]
        else:
            Z = space.tri_maps[t]
        G = np.zeros((28, dim))
        G[:, cols] = Z
        out.append(G)
    return out


def smoothness_residual_matrix(space):
    """All C0/C1 residual functionals as one (n_conditions x dim) matrix."""
    mesh = space.mesh
    maps = _global_degree6_maps(space)
    im6 = bb.index_map(6)
    rows = []
    for e in mesh.interior_edges():
        rec = mesh.edges[e]
        ta, tb = rec.tris
        slots_a = tuple(mesh.triangles[ta].verts.index(v) + 1 for v in rec.verts)
        slots_b = tuple(mesh.triangles[tb].verts.index(v) + 1 for v in rec.verts)
        A6, B6 = maps[ta], maps[tb]
        for m, gb in enumerate(bb.edge_row_indices(6, slots_b, 0)):
            ga = [0, 0, 0]
            ga[slots_a[0] - 1] = 6 - m
            ga[slots_a[1] - 1] = m
            rows.append(B6[im6[gb]] - A6[im6[tuple(ga)]])
        off_b = 6 - slots_b[0] - slots_b[1]
        w = mesh.vertices[mesh.triangles[tb].verts[off_b - 1]]
        b_off = bb.barycentric(mesh.tri_coords(ta), w)
        for m, gb in enumerate(bb.edge_row_indices(6, slots_b, 1)):
            base = [0, 0, 0]
            base[slots_a[0] - 1] = 5 - m
            base[slots_a[1] - 1] = m
            row = B6[im6[gb]].copy()
            for s in range(3):
                gg = base.copy()
                gg[s] += 1
                row -= b_off[s] * A6[im6[tuple(gg)]]
            rows.append(row)
    return np.array(rows), maps


def boundary_sample_matrix(space, per_arc=30):
    """Boundary point-evaluation functionals as a matrix over the dofs."""
    from conicfem.geometry import arc_point_on_ray

    mesh = space.mesh
    rows = []
    for t in mesh.triangles_of_kind(PIE):
        rec = mesh.triangles[t]
        tri = mesh.tri_coords(t)
        v1, v2, v3 = tri
        arc = mesh.domain.arcs[rec.arc]
        pts = np.array([
            arc_point_on_ray(arc, v1, v2 + u * (v3 - v2))
            for u in np.linspace(0.03, 0.97, per_arc)
        ])
        V = bb.bernstein_matrix(6, bb.barycentric_many(tri, pts))
        G = np.zeros((per_arc, space.dimension))
        G[:, space.tri_cols[t]] = V @ space.pie_product_maps[t]
        rows.append(G)
    return np.vstack(rows)


def extraction_matrix(space):
    """Matrix of all determining functionals applied to all dual splines."""
    dim = space.dimension
    E = np.zeros((dim, dim))
    for j, dof in enumerate(space.mds.dofs):
        cols = space.tri_cols[dof.tri]
        if dof.category in ("tangent-corner", "pie"):
            Z = space.pie_factor_maps[dof.tri]
            E[j, cols] = Z[bb.index_map(4)[dof.local]]
        elif dof.category == "buffer":
            Z = space.tri_maps[dof.tri]
            E[j, cols] = Z[bb.index_map(6)[dof.local]]
        else:
            Z = space.tri_maps[dof.tri]
            E[j, cols] = Z[bb.index_map(5)[dof.local]]
    return E


# ---------------------------------------------------------------------------
# smoothness predicates applied to a propagated spline

def smoothness_report(space, spline):
    """Worst relative C0 / C1 violations across all interior edges."""
    mesh = space.mesh
    worst0 = worst1 = 0.0
    for e in mesh.interior_edges():
        rec = mesh.edges[e]
        ta, tb = rec.tris
        ca, cb = spline.patch(ta), spline.patch(tb)
        da = 5 if mesh.triangles[ta].kind == ORDINARY else 6
        db = 5 if mesh.triangles[tb].kind == ORDINARY else 6
        if da < 6 <= db:
            ca = bb.degree_raise(5, ca, 6)
        if db < 6 <= da:
            cb = bb.degree_raise(5, cb, 6)
        d = max(da, db)
        slots_a = tuple(mesh.triangles[ta].verts.index(v) + 1 for v in rec.verts)
        slots_b = tuple(mesh.triangles[tb].verts.index(v) + 1 for v in rec.verts)
        g0, g1 = bb.smoothness_gaps(d, mesh.tri_coords(ta), ca, slots_a,
                                    mesh.tri_coords(tb), cb, slots_b)
        scale = max(np.abs(ca).max(), np.abs(cb).max(), 1e-300)
        worst0 = max(worst0, g0 / scale)
        worst1 = max(worst1, g1 / scale)
    return worst0, worst1


def boundary_samples_max(space, spline, per_arc=30):
    """Max |s| over boundary samples (ray points on each pie's arc)."""
    from conicfem.geometry import arc_point_on_ray

    mesh = space.mesh
    worst = 0.0
    for t in mesh.triangles_of_kind(PIE):
        rec = mesh.triangles[t]
        v1, v2, v3 = (mesh.vertices[i] for i in rec.verts)
        arc = mesh.domain.arcs[rec.arc]
        for u in np.linspace(0.03, 0.97, per_arc):
            x = arc_point_on_ray(arc, v1, v2 + u * (v3 - v2))
            worst = max(worst, abs(spline.eval_on_triangle(t, x, 0)))
    return worst


# ---------------------------------------------------------------------------
# radial quadrature for rotationally symmetric integrands on the unit disk

def disk_radial_integral(f_of_r, n=200):
    """integral over the unit disk of f(r), via 2*pi*int_0^1 f(r) r dr."""
    x, w = roots_legendre(n)
    r = 0.5 * (x + 1.0)
    return 2.0 * np.pi * 0.5 * float(w @ (f_of_r(r) * r))
