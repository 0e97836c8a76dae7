"""The C1 quintic spline space with homogeneous boundary values.

Splines are piecewise quintic on ordinary triangles, sextic on buffer
triangles, and of the form (conic factor) * (quartic) on pie triangles,
twice differentiable at interior vertices and vanishing on the curved
boundary.  Degrees of freedom form a 1-local minimal determining set with
five categories:

  vertex-jet      six coefficients around each interior vertex (2-jet)
  edge            one interior coefficient per plain interior edge
  tangent-corner  the factor value at boundary vertices with a tangent
  pie             five factor coefficients per pie triangle
  buffer          two interior coefficients per buffer triangle

``build_space`` runs the constructive fill once symbolically and stores,
per triangle, the linear map from global dofs to patch coefficients;
propagating a dof vector is then a per-triangle matrix product.  Spaces
and splines are immutable after construction and safe to share across
threads; propagation of different dof vectors may run concurrently.
"""

import json
from dataclasses import dataclass
from math import comb

import numpy as np

from . import bernstein as bb
from .geometry import eval_conic, grad_conic, normalized_pie_conic
from .mesh import BUFFER, ORDINARY, PIE, mesh_from_dict, mesh_to_dict

VERTEX_JET = "vertex-jet"
EDGE_INTERIOR = "edge"
TANGENT_CORNER = "tangent-corner"
PIE_FACTOR = "pie"
BUFFER_INTERIOR = "buffer"

_PIE_LOCALS = ((1, 3, 0), (1, 2, 1), (1, 1, 2), (1, 0, 3), (0, 2, 2))
_BUFFER_LOCALS = ((4, 1, 1), (2, 2, 2))


class SpaceError(RuntimeError):
    """Spline-space construction failed."""


class PropagationError(SpaceError):
    """Inconsistent coefficient fill (should not happen on valid meshes)."""


@dataclass(frozen=True)
class DofDescriptor:
    """One coefficient-extraction functional of the determining set.

    tri is the designated triangle whose representation carries the
    coefficient; local is the multi-index inside that representation
    (the quartic factor for pie/tangent-corner dofs).  The triangle is
    also the functional's supporting set.
    """

    category: str
    owner: tuple
    tri: int
    local: tuple


class MinimalDeterminingSet:
    def __init__(self, mesh, dofs, counts, vertex_block, edge_pos, corner_pos,
                 pie_block, buffer_block):
        self.mesh = mesh
        self.dofs = dofs
        self.counts = counts
        self.vertex_block = vertex_block
        self.edge_pos = edge_pos
        self.corner_pos = corner_pos
        self.pie_block = pie_block
        self.buffer_block = buffer_block

    @property
    def dimension(self):
        return len(self.dofs)


def _vertex_slot(rec, v):
    return rec.verts.index(v) + 1


def build_mds(mesh):
    """The minimal determining set of the space over a validated mesh.

    Designated triangles are chosen by lowest triangle index.  The
    dimension is 6|V_I| + |E_I0| + |V_B1| + 5|pies| + 2|buffers|.
    """
    dofs = []
    vertex_block = {}
    edge_pos = {}
    corner_pos = {}
    pie_block = {}
    buffer_block = {}

    for v in mesh.interior_vertices():
        cands = [t for t in mesh.vertex_triangles(v)
                 if mesh.triangles[t].kind == ORDINARY]
        if not cands:
            raise SpaceError(f"interior vertex {v} touches no ordinary triangle")
        t = min(cands)
        slot = _vertex_slot(mesh.triangles[t], v)
        vertex_block[v] = len(dofs)
        for g in bb.vertex_ring(5, slot):
            dofs.append(DofDescriptor(VERTEX_JET, ("v", v), t, g))

    for e in mesh.plain_interior_edges():
        rec = mesh.edges[e]
        cands = [t for t in rec.tris if mesh.triangles[t].kind == ORDINARY]
        if not cands:
            raise SpaceError(f"edge {rec.verts} has no ordinary side")
        t = min(cands)
        slots = tuple(_vertex_slot(mesh.triangles[t], v) for v in rec.verts)
        off = 6 - slots[0] - slots[1]
        g = [2, 2, 2]
        g[off - 1] = 1
        edge_pos[e] = len(dofs)
        dofs.append(DofDescriptor(EDGE_INTERIOR, ("e", e), t, tuple(g)))

    for v in mesh.boundary_vertices():
        if not mesh.vertex_tangent[v]:
            continue
        pies = sorted(t for t in mesh.vertex_triangles(v)
                      if mesh.triangles[t].kind == PIE)
        t = pies[0]
        slot = _vertex_slot(mesh.triangles[t], v)
        g = [0, 0, 0]
        g[slot - 1] = 4
        corner_pos[v] = len(dofs)
        dofs.append(DofDescriptor(TANGENT_CORNER, ("v", v), t, tuple(g)))

    for t in mesh.triangles_of_kind(PIE):
        pie_block[t] = len(dofs)
        for g in _PIE_LOCALS:
            dofs.append(DofDescriptor(PIE_FACTOR, ("t", t), t, g))

    for t in mesh.triangles_of_kind(BUFFER):
        buffer_block[t] = len(dofs)
        for g in _BUFFER_LOCALS:
            dofs.append(DofDescriptor(BUFFER_INTERIOR, ("t", t), t, g))

    counts = {
        VERTEX_JET: len(vertex_block),
        EDGE_INTERIOR: len(edge_pos),
        TANGENT_CORNER: len(corner_pos),
        PIE_FACTOR: len(pie_block),
        BUFFER_INTERIOR: len(buffer_block),
    }
    return MinimalDeterminingSet(
        mesh, dofs, counts, vertex_block, edge_pos, corner_pos,
        pie_block, buffer_block,
    )


# ---------------------------------------------------------------------------
# jet <-> vertex ring maps

def jet_to_ring_matrix(tri, slot, d):
    """6x6 map from a Cartesian 2-jet (v, gx, gy, hxx, hxy, hyy) at a
    vertex to the six ring coefficients in canonical ring order."""
    tri = np.asarray(tri, dtype=float)
    corner = tri[slot - 1]
    sa, sb = bb.ring_edge_slots(slot)
    ua = tri[sa - 1] - corner
    ub = tri[sb - 1] - corner
    d1 = float(d)
    d2 = float(d * (d - 1))
    rows = np.zeros((6, 6))
    rows[0] = [1, 0, 0, 0, 0, 0]
    rows[1] = [1, ua[0] / d1, ua[1] / d1, 0, 0, 0]
    rows[2] = [1, ub[0] / d1, ub[1] / d1, 0, 0, 0]
    rows[3] = [1, 2 * ua[0] / d1, 2 * ua[1] / d1,
               ua[0] ** 2 / d2, 2 * ua[0] * ua[1] / d2, ua[1] ** 2 / d2]
    rows[4] = [1, 2 * ub[0] / d1, 2 * ub[1] / d1,
               ub[0] ** 2 / d2, 2 * ub[0] * ub[1] / d2, ub[1] ** 2 / d2]
    rows[5] = [1, (ua[0] + ub[0]) / d1, (ua[1] + ub[1]) / d1,
               ua[0] * ub[0] / d2, (ua[0] * ub[1] + ua[1] * ub[0]) / d2,
               ua[1] * ub[1] / d2]
    return rows


def ring_to_jet_matrix(tri, slot, d):
    return np.linalg.inv(jet_to_ring_matrix(tri, slot, d))


# ---------------------------------------------------------------------------
# the corner system of the pie factor

def factor_ring_matrix(q110, q101, q011):
    """Lower-triangular map from the factor's vertex ring to the product's.

    Ring order is canonical (corner, +A, +B, ++A, ++B, mixed) at the pie
    interior vertex; the conic is normalized to 1 there and vanishes at the
    other two vertices.  Derived from the Bernstein product identity.
    """
    return np.array([
        [1.0, 0, 0, 0, 0, 0],
        [q110 / 3.0, 2 / 3.0, 0, 0, 0, 0],
        [q101 / 3.0, 0, 2 / 3.0, 0, 0, 0],
        [0, 8 * q110 / 15.0, 0, 2 / 5.0, 0, 0],
        [0, 0, 8 * q101 / 15.0, 0, 2 / 5.0, 0],
        [q011 / 15.0, 4 * q101 / 15.0, 4 * q110 / 15.0, 0, 0, 2 / 5.0],
    ])


def solve_factor_ring(a_ring, q110, q101, q011):
    """Recover the quartic factor's vertex ring from the product's.

    a_ring holds the degree-6 ring coefficients of (factor * conic) at the
    pie interior vertex, canonical ring order; returns the factor's
    degree-4 ring, same order.  The system is unconditionally
    lower-triangular with positive diagonal.
    """
    L = factor_ring_matrix(q110, q101, q011)
    out = np.zeros(6)
    for i in range(6):
        out[i] = (float(a_ring[i]) - L[i, :i] @ out[:i]) / L[i, i]
    return out


# ---------------------------------------------------------------------------
# symbolic rows (linear forms in the global dofs)

def _axpy(acc, row, w):
    if w == 0.0:
        return
    for k, v in row.items():
        acc[k] = acc.get(k, 0.0) + w * v


def _combo(weights, rows):
    acc = {}
    for w, r in zip(weights, rows):
        _axpy(acc, r, float(w))
    return acc


def _matvec(M, rows):
    return [_combo(M[i], rows) for i in range(M.shape[0])]


def _row_gap(r1, r2):
    keys = set(r1) | set(r2)
    if not keys:
        return 0.0
    scale = max(max((abs(v) for v in r1.values()), default=0.0),
                max((abs(v) for v in r2.values()), default=0.0), 1.0)
    return max(abs(r1.get(k, 0.0) - r2.get(k, 0.0)) for k in keys) / scale


class _Propagator:
    """Runs the constructive fill once, symbolically, over a mesh."""

    def __init__(self, mesh, mds):
        self.mesh = mesh
        self.mds = mds
        self.defect = 0.0
        self.ord_c = {t: [None] * 21 for t in mesh.triangles_of_kind(ORDINARY)}
        self.buf_c = {t: [None] * 28 for t in mesh.triangles_of_kind(BUFFER)}
        self.pie_p = {t: [None] * 15 for t in mesh.triangles_of_kind(PIE)}
        self.pie_q = {}
        self.pie_scale = {}
        for t in mesh.triangles_of_kind(PIE):
            tri = mesh.tri_coords(t)
            conic = mesh.pie_conic(t)
            self.pie_q[t] = normalized_pie_conic(conic, tri)
            self.pie_scale[t] = float(eval_conic(conic, tri[0]))
        self.jets = {}

    # -- helpers ----------------------------------------------------------

    def _store(self, table, t, d, g, row):
        idx = bb.index_map(d)[g]
        old = table[t][idx]
        if old is None:
            table[t][idx] = row
        else:
            gap = _row_gap(old, row)
            self.defect = max(self.defect, gap)
            if gap > 1e-8:
                raise PropagationError(
                    f"inconsistent fill at triangle {t}, index {g} (gap {gap:.2e})"
                )

    def _qparts(self, t):
        q = self.pie_q[t]
        im = bb.index_map(2)
        return q[im[(1, 1, 0)]], q[im[(1, 0, 1)]], q[im[(0, 1, 1)]]

    # -- pipeline ----------------------------------------------------------

    def run(self):
        self._seed_dofs()
        self._vertex_jets()
        self._fill_ordinary()
        self._fill_near_boundary_rings()
        self._fill_buffer_from_ordinary()
        self._fill_factor_corners()
        self._fill_chords_and_buffer_edges()
        self._finish_pies_and_buffers()
        for t, rows in list(self.ord_c.items()) + list(self.buf_c.items()) + \
                list(self.pie_p.items()):
            for i, r in enumerate(rows):
                if r is None:
                    raise PropagationError(f"coefficient {i} of triangle {t} unset")
        return self

    def _seed_dofs(self):
        for j, dof in enumerate(self.mds.dofs):
            row = {j: 1.0}
            if dof.category in (VERTEX_JET, EDGE_INTERIOR):
                self._store(self.ord_c, dof.tri, 5, dof.local, row)
            elif dof.category in (TANGENT_CORNER, PIE_FACTOR):
                self._store(self.pie_p, dof.tri, 4, dof.local, row)
            elif dof.category == BUFFER_INTERIOR:
                self._store(self.buf_c, dof.tri, 6, dof.local, row)
            else:
                raise SpaceError(f"unknown dof category {dof.category}")

    def _vertex_jets(self):
        mesh, mds = self.mesh, self.mds
        for v, start in mds.vertex_block.items():
            dof = mds.dofs[start]
            tri = mesh.tri_coords(dof.tri)
            slot = _vertex_slot(mesh.triangles[dof.tri], v)
            R = ring_to_jet_matrix(tri, slot, 5)
            unit = [{start + i: 1.0} for i in range(6)]
            self.jets[v] = _matvec(R, unit)

    def _fill_ordinary(self):
        mesh = self.mesh
        # vertex rings from jets
        for t in self.ord_c:
            tri = mesh.tri_coords(t)
            for slot in (1, 2, 3):
                v = mesh.triangles[t].verts[slot - 1]
                rows = _matvec(jet_to_ring_matrix(tri, slot, 5), self.jets[v])
                for g, r in zip(bb.vertex_ring(5, slot), rows):
                    self._store(self.ord_c, t, 5, g, r)
        # remaining edge-interior coefficients via the smoothness rule
        for e in self.mesh.plain_interior_edges():
            rec = mesh.edges[e]
            tris = [t for t in rec.tris if mesh.triangles[t].kind == ORDINARY]
            if len(tris) < 2:
                continue
            src = self.mds.dofs[self.mds.edge_pos[e]].tri
            dst = tris[0] if tris[1] == src else tris[1]
            self._fill_edge_middle(src, dst, rec.verts)

    def _fill_edge_middle(self, src, dst, shared):
        """Fill the middle first-interior-row coefficient of dst across an edge."""
        mesh = self.mesh
        rec_src, rec_dst = mesh.triangles[src], mesh.triangles[dst]
        src_slots = tuple(_vertex_slot(rec_src, v) for v in shared)
        dst_slots = tuple(_vertex_slot(rec_dst, v) for v in shared)
        off_dst = 6 - dst_slots[0] - dst_slots[1]
        w = mesh.vertices[rec_dst.verts[off_dst - 1]]
        b_off = bb.barycentric(mesh.tri_coords(src), w)
        for m, g_dst in enumerate(bb.edge_row_indices(5, dst_slots, 1)):
            if sorted(g_dst) != [1, 2, 2]:
                continue
            base = [0, 0, 0]
            base[src_slots[0] - 1] = 4 - m
            base[src_slots[1] - 1] = m
            rows, weights = [], []
            for s in range(3):
                gg = base.copy()
                gg[s] += 1
                rows.append(self.ord_c[src][bb.index_map(5)[tuple(gg)]])
                weights.append(b_off[s])
            self._store(self.ord_c, dst, 5, g_dst, _combo(weights, rows))

    def _fill_near_boundary_rings(self):
        mesh = self.mesh
        for t in self.buf_c:
            tri = mesh.tri_coords(t)
            for slot in (2, 3):
                v = mesh.triangles[t].verts[slot - 1]
                rows = _matvec(jet_to_ring_matrix(tri, slot, 6), self.jets[v])
                for g, r in zip(bb.vertex_ring(6, slot), rows):
                    self._store(self.buf_c, t, 6, g, r)
        for t in self.pie_p:
            tri = mesh.tri_coords(t)
            v = mesh.triangles[t].verts[0]
            a_ring = _matvec(jet_to_ring_matrix(tri, 1, 6), self.jets[v])
            L = factor_ring_matrix(*self._qparts(t))
            p_ring = []
            for i in range(6):
                acc = dict(a_ring[i])
                for jcol in range(i):
                    _axpy(acc, p_ring[jcol], -L[i, jcol])
                p_ring.append({k: val / L[i, i] for k, val in acc.items()})
            for g, r in zip(bb.vertex_ring(4, 1), p_ring):
                self._store(self.pie_p, t, 4, g, r)

    def _fill_buffer_from_ordinary(self):
        mesh = self.mesh
        raise_m = bb.degree_raise_matrix(5, 6)
        for t in self.buf_c:
            rec = mesh.triangles[t]
            shared = (rec.verts[1], rec.verts[2])
            e = mesh.edge_id(*shared)
            src = [x for x in mesh.edges[e].tris if x != t][0]
            if mesh.triangles[src].kind != ORDINARY:
                raise SpaceError(f"buffer {t} inner edge not shared with ordinary")
            raised = _matvec(raise_m, self.ord_c[src])
            rec_src = mesh.triangles[src]
            src_slots = tuple(_vertex_slot(rec_src, v) for v in shared)
            dst_slots = (2, 3)
            w = mesh.vertices[rec.verts[0]]
            b_off = bb.barycentric(mesh.tri_coords(src), w)
            for m, g in enumerate(bb.edge_row_indices(6, dst_slots, 0)):
                base = [0, 0, 0]
                base[src_slots[0] - 1] = 6 - m
                base[src_slots[1] - 1] = m
                self._store(self.buf_c, t, 6, g, raised[bb.index_map(6)[tuple(base)]])
            for m, g in enumerate(bb.edge_row_indices(6, dst_slots, 1)):
                base = [0, 0, 0]
                base[src_slots[0] - 1] = 5 - m
                base[src_slots[1] - 1] = m
                rows, weights = [], []
                for s in range(3):
                    gg = base.copy()
                    gg[s] += 1
                    rows.append(raised[bb.index_map(6)[tuple(gg)]])
                    weights.append(b_off[s])
                self._store(self.buf_c, t, 6, g, _combo(weights, rows))

    def _fill_factor_corners(self):
        mesh, mds = self.mesh, self.mds
        for v in mesh.boundary_vertices():
            pies = sorted(t for t in mesh.vertex_triangles(v)
                          if mesh.triangles[t].kind == PIE)
            locs = []
            for t in pies:
                slot = _vertex_slot(mesh.triangles[t], v)
                g = [0, 0, 0]
                g[slot - 1] = 4
                locs.append(tuple(g))
            if not mesh.vertex_tangent[v]:
                for t, g in zip(pies, locs):
                    self._store(self.pie_p, t, 4, g, {})
                continue
            pos = mds.corner_pos[v]
            base_row = {pos: 1.0}
            # value on the designated pie is the dof; the partner is scaled
            # by the ratio of the normalized conic gradients
            g1 = self._normalized_grad(pies[0], v)
            g2 = self._normalized_grad(pies[1], v)
            i = int(np.argmax(np.abs(g2)))
            if abs(g2[i]) == 0.0:
                raise SpaceError(f"vanishing conic gradient at boundary vertex {v}")
            alpha = g1[i] / g2[i]
            self._store(self.pie_p, pies[0], 4, locs[0], base_row)
            self._store(self.pie_p, pies[1], 4, locs[1], {pos: alpha})

    def _normalized_grad(self, t, v):
        mesh = self.mesh
        conic = mesh.pie_conic(t)
        return grad_conic(conic, mesh.vertices[v]) / self.pie_scale[t]

    def _pie_edges(self):
        """(pie, buffer, edge verts (v1, other), chord local index, q parts)."""
        mesh = self.mesh
        out = []
        for t in self.pie_p:
            rec = mesh.triangles[t]
            v1, v2, v3 = rec.verts
            q110, q101, q011 = self._qparts(t)
            for other, chord_g, qe, qo in (
                (v3, (0, 1, 3), q101, (q110, q011)),
                (v2, (0, 3, 1), q110, (q101, q011)),
            ):
                e = mesh.edge_id(v1, other)
                buf = [x for x in mesh.edges[e].tris if x != t][0]
                out.append((t, buf, (v1, other), chord_g, qe, qo))
        return out

    def _fill_chords_and_buffer_edges(self):
        mesh = self.mesh
        im4, im6 = bb.index_map(4), bb.index_map(6)
        for t, buf, shared, chord_g, q_edge_mid, (q_same, q_cross) in self._pie_edges():
            rec, rec_b = mesh.triangles[t], mesh.triangles[buf]
            src_slots = tuple(_vertex_slot(rec, v) for v in shared)
            dst_slots = tuple(_vertex_slot(rec_b, v) for v in shared)
            # restriction of the factor to the straight edge (all known)
            p_edge = []
            for m in range(5):
                base = [0, 0, 0]
                base[src_slots[0] - 1] = 4 - m
                base[src_slots[1] - 1] = m
                p_edge.append(self.pie_p[t][im4[tuple(base)]])
            # univariate product with the conic restriction (1, q_mid, 0)
            a_edge = []
            for m in range(7):
                acc = {}
                for m1 in range(max(0, m - 2), min(4, m) + 1):
                    m2 = m - m1
                    qv = (1.0, q_edge_mid, 0.0)[m2]
                    wgt = qv * comb(4, m1) * comb(2, m2) / comb(6, m)
                    _axpy(acc, p_edge[m1], wgt)
                a_edge.append(acc)
            # continuity row of the buffer across this edge
            for m, g in enumerate(bb.edge_row_indices(6, dst_slots, 0)):
                self._store(self.buf_c, buf, 6, g, a_edge[m])
            # smoothness fixes the product's first-row entry at the
            # boundary-vertex end, and with it the chord coefficient
            off_src = 6 - src_slots[0] - src_slots[1]
            w = mesh.vertices[rec.verts[off_src - 1]]
            b_off = bb.barycentric(mesh.tri_coords(buf), w)
            base = [0, 0, 0]
            base[dst_slots[0] - 1] = 1
            base[dst_slots[1] - 1] = 4
            rows, weights = [], []
            for s in range(3):
                gg = base.copy()
                gg[s] += 1
                rows.append(self.buf_c[buf][im6[tuple(gg)]])
                weights.append(b_off[s])
            a_row1 = _combo(weights, rows)
            # product identity: 15 a = q_mid*4*c_chord + q_same*c_corner + 4*q_cross*c_dofside
            corner_g = [0, 0, 0]
            corner_g[src_slots[1] - 1] = 4
            dof_g = [0, 0, 0]
            dof_g[src_slots[0] - 1] = 1
            dof_g[src_slots[1] - 1] = 3
            if abs(q_edge_mid) < 1e-12:
                raise SpaceError(
                    f"pie {t}: conic edge coefficient vanishes (gradient condition)"
                )
            acc = {}
            _axpy(acc, a_row1, 15.0)
            _axpy(acc, self.pie_p[t][im4[tuple(corner_g)]], -q_same)
            _axpy(acc, self.pie_p[t][im4[tuple(dof_g)]], -4.0 * q_cross)
            chord_row = {k: v / (4.0 * q_edge_mid) for k, v in acc.items()}
            self._store(self.pie_p, t, 4, chord_g, chord_row)

    def _finish_pies_and_buffers(self):
        mesh = self.mesh
        self.pie_a = {}
        for t in self.pie_p:
            P = bb.product_matrix(4, 2, self.pie_q[t])
            self.pie_a[t] = _matvec(P, self.pie_p[t])
        for t, buf, shared, _, _, _ in self._pie_edges():
            rec, rec_b = mesh.triangles[t], mesh.triangles[buf]
            src_slots = tuple(_vertex_slot(rec, v) for v in shared)
            dst_slots = tuple(_vertex_slot(rec_b, v) for v in shared)
            off_dst = 6 - dst_slots[0] - dst_slots[1]
            w = mesh.vertices[rec_b.verts[off_dst - 1]]
            b_off = bb.barycentric(mesh.tri_coords(t), w)
            for m, g in enumerate(bb.edge_row_indices(6, dst_slots, 1)):
                base = [0, 0, 0]
                base[src_slots[0] - 1] = 5 - m
                base[src_slots[1] - 1] = m
                rows, weights = [], []
                for s in range(3):
                    gg = base.copy()
                    gg[s] += 1
                    rows.append(self.pie_a[t][bb.index_map(6)[tuple(gg)]])
                    weights.append(b_off[s])
                self._store(self.buf_c, buf, 6, g, _combo(weights, rows))


# ---------------------------------------------------------------------------
# the assembled space

class SplineSpace:
    """Mesh + determining set + per-triangle dof-to-coefficient maps."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.mds = build_mds(mesh)
        prop = _Propagator(mesh, self.mds).run()
        self.fill_defect = prop.defect
        self.pie_q = prop.pie_q
        self.pie_scale = prop.pie_scale
        self.tri_cols = {}
        self.tri_maps = {}      # ordinary/buffer: coefficient matrix
        self.pie_factor_maps = {}
        self.pie_product_maps = {}
        for t, rows in prop.ord_c.items():
            self.tri_cols[t], self.tri_maps[t] = _densify(rows)
        for t, rows in prop.buf_c.items():
            self.tri_cols[t], self.tri_maps[t] = _densify(rows)
        for t, rows in prop.pie_p.items():
            cols, Zp = _densify(rows)
            self.tri_cols[t] = cols
            self.pie_factor_maps[t] = Zp
            self.pie_product_maps[t] = bb.product_matrix(4, 2, self.pie_q[t]) @ Zp

    @property
    def dimension(self):
        return self.mds.dimension

    def tri_degree(self, t):
        return 5 if self.mesh.triangles[t].kind == ORDINARY else 6

    def spline(self, dofs):
        return SplineFunction(self, dofs)

    def zero(self):
        return self.spline(np.zeros(self.dimension))

    def extract_dofs(self, spline):
        """Apply every determining functional to a spline (dual extraction)."""
        out = np.zeros(self.dimension)
        for j, dof in enumerate(self.mds.dofs):
            if dof.category in (TANGENT_CORNER, PIE_FACTOR):
                out[j] = spline.factor(dof.tri)[bb.index_map(4)[dof.local]]
            elif dof.category == BUFFER_INTERIOR:
                out[j] = spline.patch(dof.tri)[bb.index_map(6)[dof.local]]
            else:
                out[j] = spline.patch(dof.tri)[bb.index_map(5)[dof.local]]
        return out

    def vertex_dofs_from_jet(self, v, jet):
        """The six vertex-jet dof values matching a Cartesian 2-jet at v."""
        start = self.mds.vertex_block[v]
        dof = self.mds.dofs[start]
        tri = self.mesh.tri_coords(dof.tri)
        slot = _vertex_slot(self.mesh.triangles[dof.tri], v)
        return jet_to_ring_matrix(tri, slot, 5) @ np.asarray(jet, dtype=float)


def _densify(rows):
    cols = sorted({k for r in rows for k in r})
    pos = {c: i for i, c in enumerate(cols)}
    Z = np.zeros((len(rows), len(cols)))
    for i, r in enumerate(rows):
        for k, v in r.items():
            Z[i, pos[k]] = v
    if len(cols) == 0:
        Z = np.zeros((len(rows), 0))
    scale = np.abs(Z).max() if Z.size else 1.0
    Z[np.abs(Z) < 1e-15 * max(scale, 1.0)] = 0.0
    return np.array(cols, dtype=np.int64), Z


def build_space(mesh):
    """Build the spline space (determining set + propagation maps)."""
    return SplineSpace(mesh)


def propagate(space, dofs):
    """Spline with the given determining-set values, all patches filled."""
    return space.spline(dofs)


class SplineFunction:
    """A spline: dof vector plus fully propagated patch coefficients."""

    def __init__(self, space, dofs):
        dofs = np.asarray(dofs, dtype=float)
        if dofs.shape != (space.dimension,):
            raise ValueError(
                f"dof vector has shape {dofs.shape}, expected ({space.dimension},)"
            )
        self.space = space
        self.dofs = dofs
        self._patches = {}
        self._factors = {}
        for t in range(space.mesh.n_triangles):
            local = dofs[space.tri_cols[t]]
            if space.mesh.triangles[t].kind == PIE:
                self._factors[t] = space.pie_factor_maps[t] @ local
                self._patches[t] = space.pie_product_maps[t] @ local
            else:
                self._patches[t] = space.tri_maps[t] @ local

    def patch(self, t):
        """BB coefficients of the piece on triangle t (degree-6 product form
        over the chord triangle for pies)."""
        return self._patches[t]

    def factor(self, t):
        """Degree-4 factor coefficients of a pie triangle."""
        return self._factors[t]

    def eval_on_triangle(self, t, x, order=0):
        mesh = self.space.mesh
        d = 6 if mesh.triangles[t].kind != ORDINARY else 5
        return bb.eval_bb(d, self._patches[t], mesh.tri_coords(t), x, order=order)

    def eval_batch(self, t, pts, order=2):
        """Values, gradients and Hessians of the piece on triangle t at many
        points (vectorized; points need not lie inside the triangle)."""
        mesh = self.space.mesh
        d = 6 if mesh.triangles[t].kind != ORDINARY else 5
        tri = mesh.tri_coords(t)
        bary = bb.barycentric_many(tri, pts)
        V, G, H = bb.design_matrices(d, tri, bary, order=order)
        c = self._patches[t]
        vals = V @ c
        grads = hesses = None
        if order >= 1:
            grads = np.column_stack([G[0] @ c, G[1] @ c])
        if order >= 2:
            hxx, hxy, hyy = (H[0] @ c, H[1] @ c, H[2] @ c)
            hesses = np.empty((len(vals), 2, 2))
            hesses[:, 0, 0] = hxx
            hesses[:, 0, 1] = hxy
            hesses[:, 1, 0] = hxy
            hesses[:, 1, 1] = hyy
        return vals, grads, hesses

    def locate(self, x):
        """Triangle containing the point, honoring curved pie regions."""
        mesh = self.space.mesh
        x = np.asarray(x, dtype=float)
        best, best_score = None, np.inf
        for t in range(mesh.n_triangles):
            rec = mesh.triangles[t]
            tri = mesh.tri_coords(t)
            span = np.abs(tri).max() + 1.0
            if rec.kind != PIE and (
                np.any(x < tri.min(axis=0) - 1e-12 * span)
                or np.any(x > tri.max(axis=0) + 1e-12 * span)
            ):
                continue
            b = bb.barycentric(tri, x)
            if rec.kind == PIE:
                qv = eval_conic(mesh.pie_conic(t), x) / self.space.pie_scale[t]
                score = max(-b[1], -b[2], -qv, 0.0)
            else:
                score = max(0.0, float(-b.min()))
            if score < best_score:
                best, best_score = t, score
            if score <= 1e-12:
                return t
        if best_score < 1e-9:
            return best
        raise ValueError(f"point {tuple(x)} is outside the triangulation")

    def value(self, x):
        return self.eval_on_triangle(self.locate(x), x, order=0)

    def gradient(self, x):
        return self.eval_on_triangle(self.locate(x), x, order=1)

    def hessian(self, x):
        return self.eval_on_triangle(self.locate(x), x, order=2)


def eval_spline(spline, x, order=0):
    """Value (order 0), gradient (1) or Hessian (2) of a spline at a point."""
    return spline.eval_on_triangle(spline.locate(x), x, order=order)


def basis_support(space, lam, tol=1e-13):
    """Triangles on which the dual basis function of dof lam is nonzero."""
    out = set()
    for t in range(space.mesh.n_triangles):
        cols = space.tri_cols[t]
        hit = np.nonzero(cols == lam)[0]
        if hit.size == 0:
            continue
        if space.mesh.triangles[t].kind == PIE:
            Z = space.pie_factor_maps[t]
        else:
            Z = space.tri_maps[t]
        if np.abs(Z[:, hit[0]]).max() > tol:
            out.add(t)
    return out


def active_dofs(space, t):
    """Dofs that influence the piece on triangle t."""
    return space.tri_cols[t]


# ---------------------------------------------------------------------------
# spline file IO

def save_spline(spline, path, include_patches=False):
    data = {
        "mesh": mesh_to_dict(spline.space.mesh),
        "dofs": [float(v) for v in spline.dofs],
    }
    if include_patches:
        data["patches"] = {
            str(t): [float(v) for v in spline.patch(t)]
            for t in range(spline.space.mesh.n_triangles)
        }
    with open(path, "w") as f:
        json.dump(data, f)


def load_spline(path):
    with open(path) as f:
        data = json.load(f)
    mesh = mesh_from_dict(data["mesh"])
    space = build_space(mesh)
    return space.spline(np.asarray(data["dofs"], dtype=float))
