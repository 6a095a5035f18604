"""Coupling of two nonconforming partitions of the same interval.

Serves two purposes:

* transfer of piecewise-polynomial (Legendre, degree d) traces between
  the time grids of two subdomains, through the sparse overlap-integral
  blocks M[alpha][beta] with entries int_I Phi^src_{m,alpha} Phi^tgt_{n,beta};
* transfer between nonmatching piecewise-linear meshes of a flat 1D
  interface (mortar coupling), through hat-function overlap integrals.

Both are built by a single merge sweep over the union of breakpoints,
O(N_src + N_tgt) overlaps, no merged grid stored.  Overlap integrands
are low-degree polynomials and are integrated exactly by Gauss rules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from oswr.timebasis import TimePartition

__all__ = [
    "ProjectionMatrices",
    "build_projection_matrices",
    "apply_projection",
    "hat_cross_matrix",
    "sweep_overlaps",
]

# relative overlap threshold: guards against floating-point slivers when
# breakpoints of the two partitions nearly coincide
SLIVER_REL = 1e-13

_G2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_G3_NODES = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_G3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 9.0


def sweep_overlaps(a_pts, b_pts, min_len):
    """Yield (ia, ib, lo, hi) for every positive-measure intersection of
    intervals [a_pts[ia], a_pts[ia+1]] and [b_pts[ib], b_pts[ib+1]]."""
    ia = ib = 0
    na, nb = len(a_pts) - 1, len(b_pts) - 1
    while ia < na and ib < nb:
        lo = max(a_pts[ia], b_pts[ib])
        hi = min(a_pts[ia + 1], b_pts[ib + 1])
        if hi - lo > min_len:
            yield ia, ib, lo, hi
        # advance the cursor whose interval ends first
        if a_pts[ia + 1] <= b_pts[ib + 1]:
            ia += 1
        else:
            ib += 1


@dataclass(frozen=True)
class ProjectionMatrices:
    """Blocks M[alpha][beta], each (n_target_intervals, n_source_intervals)."""

    degree: int
    source: TimePartition
    target: TimePartition
    blocks: tuple  # blocks[alpha][beta] csr_matrix


def build_projection_matrices(source, target, d):
    """Overlap-integral blocks between two partitions of the same window."""
    if d not in (0, 1):
        raise ValueError(f"unsupported degree {d}")
    span = source.end - source.start
    if span <= 0 or target.n_intervals == 0 or source.n_intervals == 0:
        raise ValueError("empty partition")
    tol = 1e-12 * span
    if abs(source.start - target.start) > tol or abs(source.end - target.end) > tol:
        raise ValueError("partitions do not cover the same window")

    src_bp, tgt_bp = source.breakpoints, target.breakpoints
    src_mid = 0.5 * (src_bp[:-1] + src_bp[1:])
    tgt_mid = 0.5 * (tgt_bp[:-1] + tgt_bp[1:])
    src_k, tgt_k = source.lengths, target.lengths

    rows, cols = [], []
    vals = [[[] for _ in range(d + 1)] for _ in range(d + 1)]
    for m, n, lo, hi in sweep_overlaps(src_bp, tgt_bp, SLIVER_REL * span):
        rows.append(n)
        cols.append(m)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        s = mid + half * _G2  # 2-point Gauss, exact for the quadratic integrand
        w = half  # equal weights (hi-lo)/2
        phi_src = [np.ones(2), 2.0 * (s - src_mid[m]) / src_k[m]]
        phi_tgt = [np.ones(2), 2.0 * (s - tgt_mid[n]) / tgt_k[n]]
        for al in range(d + 1):
            for be in range(d + 1):
                vals[al][be].append(w * np.sum(phi_src[al] * phi_tgt[be]))

    shape = (target.n_intervals, source.n_intervals)
    blocks = tuple(
        tuple(
            sp.coo_matrix((np.array(vals[al][be]), (rows, cols)), shape=shape).tocsr()
            for be in range(d + 1)
        )
        for al in range(d + 1)
    )
    return ProjectionMatrices(degree=d, source=source, target=target, blocks=blocks)


def apply_projection(matrices, source_coeffs):
    """L2-project per-interval Legendre coefficients onto the target grid.

    source_coeffs has shape (N_source, d+1) or (N_source, d+1, K);
    returns the same layout on the target partition.  With the Legendre
    basis the per-interval Gram matrix is diagonal, so
    G_tgt[n, beta] = (2 beta + 1)/k_n * sum_alpha (M[alpha][beta] @ G_src[:, alpha])[n].
    """
    d = matrices.degree
    src = np.asarray(source_coeffs, dtype=float)
    if src.shape[0] != matrices.source.n_intervals or src.shape[1] != d + 1:
        raise ValueError("source coefficients do not match the source partition")
    flat = src.reshape(src.shape[0], d + 1, -1)
    n_tgt = matrices.target.n_intervals
    out = np.zeros((n_tgt, d + 1, flat.shape[2]))
    k_tgt = matrices.target.lengths
    for be in range(d + 1):
        acc = np.zeros((n_tgt, flat.shape[2]))
        for al in range(d + 1):
            acc += matrices.blocks[al][be] @ flat[:, al, :]
        out[:, be, :] = acc * ((2.0 * be + 1.0) / k_tgt)[:, None]
    return out.reshape((n_tgt,) + src.shape[1:])


def hat_cross_matrix(target_nodes, source_nodes, weight=None, kind="mass"):
    """Overlap integrals of P1 hat bases on two 1D meshes of a segment.

    Returns a csr matrix B with B[k, l] = int w(x) T(psi_k) S(chi_l) dx,
    where psi_k are hats on target_nodes, chi_l hats on source_nodes and

        kind = "mass":       T = S = identity
        kind = "grad_both":  T = S = d/dx
        kind = "dtarget":    T = d/dx, S = identity

    weight is a vectorized callable of the interface coordinate (or None
    for 1).  3-point Gauss per overlap segment.
    """
    xt = np.asarray(target_nodes, dtype=float)
    xs = np.asarray(source_nodes, dtype=float)
    if xt.size < 2 or xs.size < 2:
        raise ValueError("need at least two nodes per mesh")
    span = min(xt[-1], xs[-1]) - max(xt[0], xs[0])
    rows, cols, vals = [], [], []
    for f, e, lo, hi in sweep_overlaps(xt, xs, SLIVER_REL * max(span, 1e-300)):
        ht, hs = xt[f + 1] - xt[f], xs[e + 1] - xs[e]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        xq = mid + half * _G3_NODES
        wq = half * _G3_WEIGHTS
        if weight is not None:
            wq = wq * np.asarray(weight(xq), dtype=float)
        # local values/derivatives of the two active hats on each mesh
        t_val = np.stack([(xt[f + 1] - xq) / ht, (xq - xt[f]) / ht])
        t_der = np.stack([np.full(3, -1.0 / ht), np.full(3, 1.0 / ht)])
        s_val = np.stack([(xs[e + 1] - xq) / hs, (xq - xs[e]) / hs])
        s_der = np.stack([np.full(3, -1.0 / hs), np.full(3, 1.0 / hs)])
        tloc = t_der if kind in ("grad_both", "dtarget") else t_val
        sloc = s_der if kind == "grad_both" else s_val
        for a in range(2):
            for b in range(2):
                rows.append(f + a)
                cols.append(e + b)
                vals.append(np.sum(wq * tloc[a] * sloc[b]))
    return sp.coo_matrix(
        (vals, (rows, cols)), shape=(xt.size, xs.size)
    ).tocsr()
