"""Structured P1 finite element spaces and spatial assembly.

Meshes are uniform structured grids on axis-aligned boxes: segments in
1D, triangles in 2D (each cell split along the lower-left to upper-right
diagonal, so nested refinements interpolate exactly).  Assembled forms:

* mass with porosity weight, optionally augmented by q-weighted
  interface mass (the Order-2 time-derivative term lives there);
* the skew-symmetrized advection-diffusion-reaction volume form
      atilde(u,v) = int 1/2((b.grad u)v - (b.grad v)u)
                  + int nu grad u . grad v + int (c + div(b)/2) u v;
* interface operator blocks on flat interfaces: interface mass,
  (p - b.n/2)-weighted mass, tangential advection B_r and tangential
  stiffness K_s;
* exterior-boundary Robin closure (p_ext - b.n/2)-weighted mass;
* per-mode time-quadrature load vectors for the DG right-hand sides.

Volume quadrature is the edge-midpoint rule per triangle (2-point Gauss
per segment), exact for P2 integrands.  Assembly is deterministic:
identical inputs produce identical entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from oswr.timebasis import GAUSS4_NODES, GAUSS4_WEIGHTS, legendre_eval
from oswr.timeproject import hat_cross_matrix

__all__ = [
    "Mesh",
    "FemSpace",
    "build_mesh",
    "build_tensor_mesh",
    "build_space",
    "assemble_mass",
    "assemble_atilde",
    "assemble_interface_ops",
    "assemble_exterior_robin",
    "assemble_load",
    "assemble_space_load",
    "nodal_interpolate",
    "scatter_matrix",
    "InterfaceBlocks",
]

_G2 = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass(frozen=True)
class Mesh:
    """Structured tensor-product mesh of an axis-aligned box.

    Grid lines xs (and ys in 2D) may be nonuniform; each 2D cell is split
    along its lower-left to upper-right diagonal, so integer-nested
    refinements interpolate P1 fields exactly.
    """

    dim: int
    box: tuple
    nx: int
    ny: int | None
    xs: np.ndarray
    ys: np.ndarray | None
    coords: np.ndarray  # (n_nodes,) in 1D, (n_nodes, 2) in 2D
    elems: np.ndarray   # (n_elems, 2) segments or (n_elems, 3) triangles

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    def node_index(self, i, j=None):
        if self.dim == 1:
            return i
        return j * (self.nx + 1) + i

    def side_nodes(self, side):
        """Node ids on a box side, sorted along the side."""
        if self.dim == 1:
            return np.array([0 if side == "xmin" else self.nx])
        nx, ny = self.nx, self.ny
        if side == "xmin":
            return np.arange(ny + 1) * (nx + 1)
        if side == "xmax":
            return np.arange(ny + 1) * (nx + 1) + nx
        if side == "ymin":
            return np.arange(nx + 1)
        if side == "ymax":
            return ny * (nx + 1) + np.arange(nx + 1)
        raise KeyError(side)

    def _locate(self, axis_nodes, v):
        i = np.searchsorted(axis_nodes, v, side="right") - 1
        i = np.clip(i, 0, axis_nodes.size - 2)
        lam = (v - axis_nodes[i]) / (axis_nodes[i + 1] - axis_nodes[i])
        return i, np.clip(lam, 0.0, 1.0)

    def eval_p1(self, nodal, points):
        """Evaluate a P1 nodal field at arbitrary points of the box.

        Exact for points inside the box; used for nested-grid
        interpolation in error norms (clamps outside points to the box).
        """
        nodal = np.asarray(nodal, dtype=float)
        if self.dim == 1:
            x = np.asarray(points, dtype=float)
            i, lam = self._locate(self.xs, x)
            return nodal[i] * (1.0 - lam) + nodal[i + 1] * lam
        pts = np.asarray(points, dtype=float)
        i, lx = self._locate(self.xs, pts[:, 0])
        j, ly = self._locate(self.ys, pts[:, 1])
        n00 = j * (self.nx + 1) + i
        n10, n01, n11 = n00 + 1, n00 + (self.nx + 1), n00 + (self.nx + 2)
        lower = lx >= ly  # triangle (i,j),(i+1,j),(i+1,j+1)
        out = np.where(
            lower,
            nodal[n00] * (1.0 - lx) + nodal[n10] * (lx - ly) + nodal[n11] * ly,
            nodal[n00] * (1.0 - ly) + nodal[n11] * lx + nodal[n01] * (ly - lx),
        )
        return out


def build_tensor_mesh(xs, ys=None):
    """Mesh from explicit (strictly increasing) grid-line coordinates."""
    xs = np.asarray(xs, dtype=float)
    if np.any(np.diff(xs) <= 0):
        raise ValueError("grid lines must be strictly increasing")
    if ys is None:
        nx = xs.size - 1
        elems = np.stack([np.arange(nx), np.arange(1, nx + 1)], axis=1)
        return Mesh(dim=1, box=(float(xs[0]), float(xs[-1])), nx=nx, ny=None,
                    xs=xs, ys=None, coords=xs, elems=elems)
    ys = np.asarray(ys, dtype=float)
    if np.any(np.diff(ys) <= 0):
        raise ValueError("grid lines must be strictly increasing")
    nx, ny = xs.size - 1, ys.size - 1
    X, Y = np.meshgrid(xs, ys)  # row j = y_j
    coords = np.stack([X.ravel(), Y.ravel()], axis=1)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    n00 = j * (nx + 1) + i
    n10, n01, n11 = n00 + 1, n00 + (nx + 1), n00 + (nx + 2)
    lower = np.stack([n00, n10, n11], axis=1)
    upper = np.stack([n00, n11, n01], axis=1)
    elems = np.concatenate([lower, upper], axis=0)
    box = (float(xs[0]), float(xs[-1]), float(ys[0]), float(ys[-1]))
    return Mesh(dim=2, box=box, nx=nx, ny=ny, xs=xs, ys=ys, coords=coords, elems=elems)


def build_mesh(box, counts):
    """Uniform mesh; counts is (nx,) in 1D or (nx, ny) in 2D."""
    if len(box) == 2:
        (nx,) = counts
        if nx < 1 or box[1] <= box[0]:
            raise ValueError("degenerate box or counts")
        return build_tensor_mesh(np.linspace(box[0], box[1], nx + 1))
    nx, ny = counts
    if nx < 1 or ny < 1 or box[1] <= box[0] or box[3] <= box[2]:
        raise ValueError("degenerate box or counts")
    return build_tensor_mesh(
        np.linspace(box[0], box[1], nx + 1), np.linspace(box[2], box[3], ny + 1)
    )


# ---------------------------------------------------------------------------
# Volume assembly
# ---------------------------------------------------------------------------


def _tri_geometry(mesh, elems_idx):
    tris = mesh.elems if elems_idx is None else mesh.elems[elems_idx]
    p = mesh.coords[tris]  # (M, 3, 2)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * det  # positively oriented by construction
    # grad lambda_a = perp(c - b)/(2A), perp(v) = (-v_y, v_x), cyclic
    grads = np.empty((tris.shape[0], 3, 2))
    for a in range(3):
        v = p[:, (a + 2) % 3] - p[:, (a + 1) % 3]
        grads[:, a, 0] = -v[:, 1] / det
        grads[:, a, 1] = v[:, 0] / det
    # edge midpoints; midpoint q is opposite vertex q
    mids = np.empty((tris.shape[0], 3, 2))
    for q in range(3):
        mids[:, q] = 0.5 * (p[:, (q + 1) % 3] + p[:, (q + 2) % 3])
    return tris, area, grads, mids


# P1 values at the edge midpoints: phi[k](mid_q) = 0 if k == q else 1/2
_PHI_MID = 0.5 * (1.0 - np.eye(3))


def _accumulate(rows, cols, vals, tris, local):
    for l in range(3):
        for k in range(3):
            rows.append(tris[:, l])
            cols.append(tris[:, k])
            vals.append(local[:, l, k])


def _coo(rows, cols, vals, n):
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()


def _seg_geometry(mesh, elems_idx):
    segs = mesh.elems if elems_idx is None else mesh.elems[elems_idx]
    xa = mesh.coords[segs[:, 0]]
    xb = mesh.coords[segs[:, 1]]
    h = xb - xa
    xq = xa[:, None] + h[:, None] * _G2[None, :]  # (M, 2)
    return segs, h, xq


def assemble_mass(mesh, omega, elems=None, t=0.0, interface_weights=None, space=None):
    """Mass matrix int omega phi_k phi_l, optionally augmented by
    q-weighted interface mass (pass a FemSpace and a neighbor->q map).

    The interface term realizes the boundary part of the Order-2 mass
    pairing; in 1D the interface is a point and contributes q on that
    node's diagonal."""
    if interface_weights:
        if space is None:
            raise ValueError("interface_weights needs the FemSpace")
        M = assemble_mass(mesh, omega, elems=elems, t=t)
        n = mesh.n_nodes
        for nb, q in sorted(interface_weights.items()):
            if q == 0.0:
                continue
            tr = space.traces[nb]
            if mesh.dim == 1:
                M = M + sp.coo_matrix(([q], ([tr.nodes[0]], [tr.nodes[0]])),
                                      shape=(n, n)).tocsr()
            else:
                B = hat_cross_matrix(tr.along, tr.along, None, "mass")
                M = M + q * scatter_matrix(B, tr.nodes, tr.nodes, n, n)
        return M
    n = mesh.n_nodes
    if mesh.dim == 1:
        segs, h, xq = _seg_geometry(mesh, elems)
        om = _eval_coeff(omega, xq, np.zeros_like(xq), t)
        w = 0.5 * h[:, None]  # equal Gauss weights
        phi = np.stack([1.0 - _G2, _G2])  # (2 basis, 2 qp)
        local = np.einsum("mq,lq,kq->mlk", w * om, phi, phi)
        rows, cols, vals = [], [], []
        for l in range(2):
            for k in range(2):
                rows.append(segs[:, l])
                cols.append(segs[:, k])
                vals.append(local[:, l, k])
        return _coo(rows, cols, vals, n)
    tris, area, _, mids = _tri_geometry(mesh, elems)
    om = _eval_coeff(omega, mids[..., 0], mids[..., 1], t)
    w = (area / 3.0)[:, None] * om  # (M, 3 qp)
    local = np.einsum("mq,ql,qk->mlk", w, _PHI_MID, _PHI_MID)
    rows, cols, vals = [], [], []
    _accumulate(rows, cols, vals, tris, local)
    return _coo(rows, cols, vals, n)


def _eval_coeff(coeff, x, y, t):
    """Evaluate an expression or callable on quadrature points."""
    if callable(coeff):
        vals = coeff(x, y, t)
    else:
        vals = float(coeff) * np.ones_like(x)
    return np.broadcast_to(np.asarray(vals, dtype=float), np.shape(x))


def assemble_atilde(mesh, nu, b, c, div_b, elems=None, t=0.0):
    """Skew-symmetrized advection-diffusion-reaction volume form.

    Raises if the diffusion evaluates negative at a quadrature point
    (boundary-touching zeros are tolerated: they only drop that point's
    contribution).
    """
    n = mesh.n_nodes
    if mesh.dim == 1:
        segs, h, xq = _seg_geometry(mesh, elems)
        zero = np.zeros_like(xq)
        nuq = _eval_coeff(nu, xq, zero, t)
        if np.any(nuq < 0):
            raise ValueError("negative diffusion nu at a quadrature point")
        bq = _eval_coeff(b[0], xq, zero, t)
        cq = _eval_coeff(c, xq, zero, t) + 0.5 * _eval_coeff(div_b, xq, zero, t)
        w = 0.5 * h[:, None]
        phi = np.stack([1.0 - _G2, _G2])  # (2, qp)
        gphi = np.stack([-1.0 / h, 1.0 / h])  # (2, M)
        local = np.zeros((segs.shape[0], 2, 2))
        for l in range(2):
            for k in range(2):
                diff = np.sum(w * nuq, axis=1) * gphi[k] * gphi[l]
                reac = np.sum(w * cq * phi[k][None, :] * phi[l][None, :], axis=1)
                adv = 0.5 * np.sum(
                    w * bq * (gphi[k][:, None] * phi[l][None, :]
                              - gphi[l][:, None] * phi[k][None, :]),
                    axis=1,
                )
                local[:, l, k] = diff + reac + adv
        rows, cols, vals = [], [], []
        for l in range(2):
            for k in range(2):
                rows.append(segs[:, l])
                cols.append(segs[:, k])
                vals.append(local[:, l, k])
        return _coo(rows, cols, vals, n)

    tris, area, grads, mids = _tri_geometry(mesh, elems)
    x, y = mids[..., 0], mids[..., 1]
    nuq = _eval_coeff(nu, x, y, t)
    if np.any(nuq < 0):
        raise ValueError("negative diffusion nu at a quadrature point")
    bxq = _eval_coeff(b[0], x, y, t)
    byq = _eval_coeff(b[1], x, y, t)
    cq = _eval_coeff(c, x, y, t) + 0.5 * _eval_coeff(div_b, x, y, t)
    w = (area / 3.0)[:, None]  # (M, 1) broadcast over qp

    local = np.zeros((tris.shape[0], 3, 3))
    # diffusion: grads constant per element
    gdot = np.einsum("mld,mkd->mlk", grads, grads)
    local += np.sum(w * nuq, axis=1)[:, None, None] * gdot
    # reaction shift
    local += np.einsum("mq,ql,qk->mlk", w * cq, _PHI_MID, _PHI_MID)
    # skew advection: 1/2 sum_q w_q [ (b.g_k) phi_l(q) - (b.g_l) phi_k(q) ]
    bg = np.einsum("mqd,mkd->mqk", np.stack([bxq, byq], axis=-1), grads)  # (M,q,k)
    term = np.einsum("mq,mqk,ql->mlk", w * np.ones_like(bxq), bg, _PHI_MID)
    local += 0.5 * (term - np.swapaxes(term, 1, 2))
    rows, cols, vals = [], [], []
    _accumulate(rows, cols, vals, tris, local)
    return _coo(rows, cols, vals, n)


# ---------------------------------------------------------------------------
# Function space with interface bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceSpace:
    """Trace of the P1 space on one flat interface."""

    neighbor: int
    side: str
    nodes: np.ndarray        # global dof ids, sorted along the interface
    along: np.ndarray | None  # running coordinate (None in 1D)
    normal: tuple
    position: float
    axis: int

    @property
    def n(self):
        return self.nodes.size

    def points(self, s):
        """Map interface coordinates to (x, y) points."""
        s = np.asarray(s, dtype=float)
        if self.axis == 0:
            return self.position * np.ones_like(s), s
        return s, self.position * np.ones_like(s)


@dataclass(frozen=True)
class FemSpace:
    """P1 space on one subdomain mesh with interface/exterior metadata."""

    mesh: Mesh
    traces: dict  # neighbor id -> TraceSpace
    exterior: tuple  # of (side, nodes, along, normal, position, axis)

    @property
    def n_dofs(self):
        return self.mesh.n_nodes


_SIDE_NORMALS_2D = {
    "xmin": (-1.0, 0.0), "xmax": (1.0, 0.0),
    "ymin": (0.0, -1.0), "ymax": (0.0, 1.0),
}


def build_space(mesh, interface_sides):
    """interface_sides: neighbor id -> side name ('xmin', ...)."""
    traces = {}
    used = set()
    for nb, side in interface_sides.items():
        nodes = mesh.side_nodes(side)
        if mesh.dim == 1:
            traces[nb] = TraceSpace(nb, side, nodes, None,
                                    (-1.0,) if side == "xmin" else (1.0,),
                                    float(mesh.coords[nodes[0]]), 0)
        else:
            axis = 0 if side in ("xmin", "xmax") else 1
            along = mesh.coords[nodes, 1 - axis]
            pos = float(mesh.coords[nodes[0], axis])
            traces[nb] = TraceSpace(nb, side, nodes, along,
                                    _SIDE_NORMALS_2D[side], pos, axis)
        used.add(side)
    exterior = []
    sides = ("xmin", "xmax") if mesh.dim == 1 else ("xmin", "xmax", "ymin", "ymax")
    for side in sides:
        if side in used:
            continue
        nodes = mesh.side_nodes(side)
        if mesh.dim == 1:
            exterior.append((side, nodes, None,
                             (-1.0,) if side == "xmin" else (1.0,),
                             float(mesh.coords[nodes[0]]), 0))
        else:
            axis = 0 if side in ("xmin", "xmax") else 1
            along = mesh.coords[nodes, 1 - axis]
            pos = float(mesh.coords[nodes[0], axis])
            exterior.append((side, nodes, along, _SIDE_NORMALS_2D[side], pos, axis))
    return FemSpace(mesh=mesh, traces=traces, exterior=tuple(exterior))


def scatter_matrix(B, rows_gidx, cols_gidx, n_rows, n_cols):
    """Embed a small interface matrix into global dof numbering."""
    B = sp.coo_matrix(B)
    return sp.coo_matrix(
        (B.data, (rows_gidx[B.row], cols_gidx[B.col])), shape=(n_rows, n_cols)
    ).tocsr()


@dataclass(frozen=True)
class InterfaceBlocks:
    """Operator blocks on one interface, in interface-local numbering.

    M_gamma : interface mass
    M_pbn   : (p - b.n/2)-weighted interface mass
    B_r     : tangential advection, int grad_G.(r phi_l) psi_k
              (assembled by parts, endpoint terms dropped)
    K_s     : tangential stiffness, int q s dphi_l dpsi_k
    nodes   : global dof ids (the trace restriction map)
    """

    M_gamma: sp.csr_matrix
    M_pbn: sp.csr_matrix
    B_r: sp.csr_matrix
    K_s: sp.csr_matrix
    nodes: np.ndarray


def _bn_along(trace, b, t=0.0):
    """b . n_i as a callable of the interface coordinate."""
    def f(s):
        x, y = trace.points(s)
        bx = _eval_coeff(b[0], x, y, t)
        if len(b) == 1:
            return bx * trace.normal[0]
        by = _eval_coeff(b[1], x, y, t)
        return bx * trace.normal[0] + by * trace.normal[1]
    return f


def assemble_interface_ops(space, neighbor, params, b):
    """Interface operator blocks for the directed interface (self -> neighbor).

    params carries (p, q, r, s); b is this subdomain's advection (its
    trace on the interface defines b.n).  The time-derivative part of
    the Order-2 operator is not assembled here; it enters the time-step
    systems through the q-weighted interface mass.
    """
    if neighbor not in space.traces:
        raise KeyError(f"no interface to neighbor {neighbor}")
    tr = space.traces[neighbor]
    if space.mesh.dim == 1:
        one = sp.csr_matrix(np.array([[1.0]]))
        bn = float(_bn_along(tr, b)(np.zeros(1))[0])
        m_pbn = sp.csr_matrix(np.array([[params.p - 0.5 * bn]]))
        zero = sp.csr_matrix((1, 1))
        return InterfaceBlocks(one, m_pbn, zero, zero.copy(), tr.nodes)
    bn = _bn_along(tr, b)
    m_gamma = hat_cross_matrix(tr.along, tr.along, None, "mass")
    m_pbn = hat_cross_matrix(
        tr.along, tr.along, lambda s: params.p - 0.5 * bn(s), "mass"
    )
    if params.r.is_zero():
        b_r = sp.csr_matrix((tr.n, tr.n))
    else:
        def rw(s):
            x, y = tr.points(s)
            return _eval_coeff(params.r, x, y, 0.0)
        b_r = -hat_cross_matrix(tr.along, tr.along, rw, "dtarget")
    qs = params.q * params.s
    if qs == 0.0:
        k_s = sp.csr_matrix((tr.n, tr.n))
    else:
        k_s = hat_cross_matrix(tr.along, tr.along, lambda s: qs * np.ones_like(s), "grad_both")
    return InterfaceBlocks(m_gamma, m_pbn, b_r, k_s, tr.nodes)


def assemble_exterior_robin(space, b, p_ext=1.0):
    """Absorbing-type closure on exterior faces: (p_ext - b.n/2) mass.

    The continuous problem lives on the whole space; the computational
    box is closed with the homogeneous Robin condition
    (nu d_n - b.n) u + p_ext u = 0, which contributes this boundary
    mass to the spatial operator.
    """
    n = space.n_dofs
    out = sp.csr_matrix((n, n))
    for side, nodes, along, normal, position, axis in space.exterior:
        if space.mesh.dim == 1:
            x = space.mesh.coords[nodes[0]]
            bn = float(_eval_coeff(b[0], np.array([x]), np.zeros(1), 0.0)[0]) * normal[0]
            out = out + sp.coo_matrix(
                ([p_ext - 0.5 * bn], ([nodes[0]], [nodes[0]])), shape=(n, n)
            ).tocsr()
            continue
        tr = TraceSpace(-1, side, nodes, along, normal, position, axis)
        bn = _bn_along(tr, b)
        B = hat_cross_matrix(along, along, lambda s: p_ext - 0.5 * bn(s), "mass")
        out = out + scatter_matrix(B, nodes, nodes, n, n)
    return out


# ---------------------------------------------------------------------------
# Load vectors
# ---------------------------------------------------------------------------


def assemble_space_load(mesh, g, elems=None, t=0.0):
    """Load vector int g(.,t) phi_k dx."""
    n = mesh.n_nodes
    out = np.zeros(n)
    if mesh.dim == 1:
        segs, h, xq = _seg_geometry(mesh, elems)
        gq = _eval_coeff(g, xq, np.zeros_like(xq), t)
        w = 0.5 * h[:, None]
        phi = np.stack([1.0 - _G2, _G2])
        for k in range(2):
            np.add.at(out, segs[:, k], np.sum(w * gq * phi[k][None, :], axis=1))
        return out
    tris, area, _, mids = _tri_geometry(mesh, elems)
    gq = _eval_coeff(g, mids[..., 0], mids[..., 1], t)
    w = (area / 3.0)[:, None]
    for k in range(3):
        np.add.at(out, tris[:, k], np.sum(w * gq * _PHI_MID[:, k][None, :], axis=1))
    return out


def assemble_load(mesh, f, interval, d, elems=None):
    """Per-mode load vectors F_beta = int_{I_n} L_beta(s) (f(.,s), phi) ds.

    Tensorized 4-point Gauss in time over the spatial rule.  For data
    with no time dependence F_0 = k_n * (f, phi) and higher modes vanish.
    """
    t_n, k_n = interval
    n = mesh.n_nodes
    time_dep = getattr(f, "depends_on", lambda v: True)("t")
    if getattr(f, "is_zero", lambda: False)():
        return np.zeros((d + 1, n))
    if not time_dep:
        F0 = k_n * assemble_space_load(mesh, f, elems=elems, t=t_n)
        out = np.zeros((d + 1, n))
        out[0] = F0
        return out
    ts = t_n + k_n * GAUSS4_NODES
    out = np.zeros((d + 1, n))
    for tq, wq in zip(ts, GAUSS4_WEIGHTS * k_n):
        load = assemble_space_load(mesh, f, elems=elems, t=tq)
        for beta in range(d + 1):
            out[beta] += wq * legendre_eval(beta, (t_n, k_n), tq) * load
    return out


def nodal_interpolate(mesh, g, t=0.0):
    """Nodal values of an expression at mesh nodes."""
    if mesh.dim == 1:
        x = mesh.coords
        return _eval_coeff(g, x, np.zeros_like(x), t).copy()
    x, y = mesh.coords[:, 0], mesh.coords[:, 1]
    return _eval_coeff(g, x, y, t).copy()
