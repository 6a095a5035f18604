"""Local subdomain solver: DG(d) time stepping over one window.

The per-interval scheme is assembled from the Legendre coupling tables:
with mass-like operator Mm and stiffness-like operator Aa, the unknown
modes U_0..U_d on interval I_n solve

    sum_k A[k][j] Mm U_k + gram[j] Aa U_j = (-1)^j Mm U(t_n^-) + F_j,

which for d=0 is the modified backward Euler step
    (Mm + k Aa) U = Mm U^n + F_0,
and for d=1 the 2x2 block system
    [[Mm + k Aa,  Mm], [-Mm,  Mm + (k/3) Aa]] (U_0, U_1).

Two interface treatments are supported: the conforming-trace path folds
the interface operators into Aa and the transmission data into the load,
while the mortar path carries a discrete flux unknown Q per interface
and solves a coupled (U, Q) system, enabling nonmatching spatial meshes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from oswr.timebasis import TimePartition, build_interval_basis

__all__ = [
    "SolverError",
    "DGTrajectory",
    "InterfaceTrace",
    "MortarFlux",
    "FactorCache",
    "linear_solve",
    "dg_step_matrix",
    "step_d0",
    "step_d1",
    "solve_window",
    "solve_window_mortar",
    "trajectory_norm",
]

RESIDUAL_TOL = 1e-12


class SolverError(Exception):
    """Linear solve failure; carries the achieved residual."""


@dataclass
class FactorCache:
    """LU factorizations keyed by (path, degree, step length)."""

    factors: dict = field(default_factory=dict)

    def get(self, key, build):
        if key not in self.factors:
            try:
                self.factors[key] = spla.splu(build().tocsc())
            except RuntimeError as e:  # exactly singular factorization
                raise SolverError(f"factorization breakdown: {e}") from None
        return self.factors[key]


def linear_solve(matrix, rhs, factor=None):
    """Direct sparse solve with a residual contract of 1e-12 relative."""
    rhs = np.asarray(rhs, dtype=float)
    if factor is None:
        try:
            factor = spla.splu(sp.csc_matrix(matrix))
        except RuntimeError as e:
            raise SolverError(f"factorization breakdown: {e}") from None
    x = factor.solve(rhs)
    r = matrix @ x - rhs
    nb = np.linalg.norm(rhs)
    rel = np.linalg.norm(r) / nb if nb > 0 else np.linalg.norm(r)
    if not np.isfinite(rel) or rel > RESIDUAL_TOL:
        raise SolverError(f"linear solve residual {rel:.3e} exceeds {RESIDUAL_TOL:.0e}")
    return x


@dataclass
class DGTrajectory:
    """Piecewise-polynomial-in-time field of spatial dof vectors."""

    partition: TimePartition
    coeffs: np.ndarray  # (N, d+1, ndof)
    u_init: np.ndarray  # value at the window start (left limit)

    @property
    def degree(self):
        return self.coeffs.shape[1] - 1

    def endpoint(self, n):
        """Right-endpoint value on interval n (Legendre values are all 1)."""
        return self.coeffs[n].sum(axis=0)

    def final_value(self):
        return self.endpoint(self.partition.n_intervals - 1)

    def left_limit(self, n):
        """Value at t_n^-: previous endpoint, or the window initial value."""
        return self.u_init if n == 0 else self.endpoint(n - 1)

    def value(self, t, left=False):
        """Evaluate at time t; left=True takes the limit from below at
        breakpoints (and the initial value at the window start)."""
        bp = self.partition.breakpoints
        if left:
            n = int(np.searchsorted(bp, t, side="left")) - 1
            if n < 0:
                return self.u_init.copy()
            if n >= self.partition.n_intervals:
                n = self.partition.n_intervals - 1
            if abs(t - bp[n + 1]) == 0.0:
                return self.endpoint(n)
        n = self.partition.locate(t)
        k = bp[n + 1] - bp[n]
        theta = 2.0 * (t - 0.5 * (bp[n] + bp[n + 1])) / k
        val = self.coeffs[n, 0].copy()
        if self.degree >= 1:
            val += theta * self.coeffs[n, 1]
        return val


@dataclass
class InterfaceTrace:
    """Transmission data on one directed interface, owner's time grid.

    coeffs[n, beta, :] are per-interval Legendre modes of the interface
    functionals (one real per interface test function)."""

    partition: TimePartition
    coeffs: np.ndarray  # (N, d+1, n_iface)

    def copy(self):
        return InterfaceTrace(self.partition, self.coeffs.copy())

    def norm(self):
        """Discrete L2((0,T) x Gamma)-style coefficient norm."""
        gram = self.partition.lengths[:, None] / (
            2.0 * np.arange(self.coeffs.shape[1])[None, :] + 1.0
        )
        return float(np.sqrt(np.sum(gram[:, :, None] * self.coeffs**2)))


@dataclass
class MortarFlux:
    """Discrete interface flux modes per interface (mortar path)."""

    partition: TimePartition
    coeffs: dict  # neighbor id -> (N, d+1, n_iface)


def dg_step_matrix(Mm, Aa, k, d):
    """Block system of one DG(d) step for mass-like Mm, stiffness-like Aa."""
    tab = build_interval_basis(d, k)
    if d == 0:
        return (Mm + k * Aa).tocsc(), tab
    blocks = [[None] * (d + 1) for _ in range(d + 1)]
    for j in range(d + 1):
        for kk in range(d + 1):
            B = tab.A[kk, j] * Mm
            if kk == j:
                B = B + tab.gram[j] * Aa
            blocks[j][kk] = B
    return sp.bmat(blocks, format="csc"), tab


def step_d0(M, A, u_prev, k, F0, factor=None):
    """One DG(0) (modified backward Euler) step."""
    rhs = M @ u_prev + F0
    if factor is not None:
        return factor.solve(rhs)
    return linear_solve((M + k * A).tocsc(), rhs)


def step_d1(M, A, u_prev, k, F0, F1, factor=None):
    """One DG(1) step; returns the Legendre modes (U_0, U_1)."""
    n = M.shape[0]
    if factor is None:
        S, _ = dg_step_matrix(M, A, k, 1)
    else:
        S = None
    rhs = np.concatenate([M @ u_prev + F0, -(M @ u_prev) + F1])
    if factor is not None:
        x = factor.solve(rhs)
    else:
        x = linear_solve(S, rhs)
    return x[:n], x[n:]


def _gather_trace_load(assembly, traces_in, n, tab):
    """Interface data contribution to the volume rhs per mode.

    int_{I_n} L_beta (g, v)_Gamma dt = gram[beta] * G_{n,beta}, scattered
    to the interface dofs.
    """
    d = tab.gram.size - 1
    out = np.zeros((d + 1, assembly.n_dofs))
    for nb, trace in traces_in.items():
        nodes = assembly.iface[nb].nodes
        for beta in range(d + 1):
            out[beta, nodes] += tab.gram[beta] * trace.coeffs[n, beta]
    return out


def solve_window(assembly, traces_in, partition, u_init, loads, cache=None):
    """March one subdomain over a window (conforming-trace path).

    traces_in maps neighbor id -> InterfaceTrace on this subdomain's
    partition; loads is the per-interval array list from the assembly.
    """
    d = assembly.degree
    n_int = partition.n_intervals
    ndof = assembly.n_dofs
    coeffs = np.zeros((n_int, d + 1, ndof))
    u_prev = np.asarray(u_init, dtype=float)
    if cache is None:
        cache = FactorCache()
    bp = partition.breakpoints
    for n in range(n_int):
        k = float(bp[n + 1] - bp[n])
        tab = build_interval_basis(d, k)
        key = ("conf", d, k)
        factor = cache.get(
            key, lambda: dg_step_matrix(assembly.M_full, assembly.A_full, k, d)[0]
        )
        G = _gather_trace_load(assembly, traces_in, n, tab)
        F = loads[n] + G
        rhs = np.concatenate([
            ((-1.0) ** j) * (assembly.M_full @ u_prev) + F[j] for j in range(d + 1)
        ])
        x = factor.solve(rhs)
        _check_step_residual(cache, key,
                             lambda: dg_step_matrix(assembly.M_full, assembly.A_full, k, d)[0],
                             x, rhs, n)
        for j in range(d + 1):
            coeffs[n, j] = x[j * ndof : (j + 1) * ndof]
        u_prev = coeffs[n].sum(axis=0)
    return DGTrajectory(partition=partition, coeffs=coeffs, u_init=np.asarray(u_init, float).copy())


def _check_step_residual(cache, key, build, x, rhs, n):
    """Per-step solve contract: relative residual below 1e-12.

    The step matrix is kept alongside its factorization so the check is
    one sparse product per step."""
    mkey = ("matrix",) + key
    if mkey not in cache.factors:
        cache.factors[mkey] = build()
    S = cache.factors[mkey]
    nb = np.linalg.norm(rhs)
    rel = np.linalg.norm(S @ x - rhs) / nb if nb > 0 else np.linalg.norm(S @ x)
    if not np.isfinite(rel) or rel > RESIDUAL_TOL:
        raise SolverError(
            f"linear solve residual {rel:.3e} exceeds {RESIDUAL_TOL:.0e} at interval {n}"
        )


def solve_window_mortar(assembly, traces_in, partition, u_init, loads, cache=None):
    """March one subdomain over a window with flux unknowns Q on every
    mortar interface (nonmatching-grid path).

    Returns (DGTrajectory, MortarFlux)."""
    d = assembly.degree
    n_int = partition.n_intervals
    ndof = assembly.n_dofs
    nbs = assembly.mortar_neighbors
    sizes = [ndof] + [assembly.iface[nb].nodes.size for nb in nbs]
    offs = np.cumsum([0] + sizes)
    coeffs = np.zeros((n_int, d + 1, ndof))
    qmodes = {nb: np.zeros((n_int, d + 1, assembly.iface[nb].nodes.size)) for nb in nbs}
    u_prev = np.asarray(u_init, dtype=float)
    if cache is None:
        cache = FactorCache()
    bp = partition.breakpoints

    for n in range(n_int):
        k = float(bp[n + 1] - bp[n])
        tab = build_interval_basis(d, k)
        key = ("mortar", d, k)
        factor = cache.get(key, lambda: _mortar_step_matrix(assembly, k, d))
        rhs_modes = []
        for j in range(d + 1):
            sgn = (-1.0) ** j
            rv = sgn * (assembly.M_mortar_vol @ u_prev) + loads[n][j]
            parts = [rv]
            for nb in nbs:
                ia = assembly.iface[nb]
                ru_prev = u_prev[ia.nodes]
                rb = sgn * ia.q * (ia.M_gamma @ ru_prev)
                if nb in traces_in:
                    rb = rb + tab.gram[j] * traces_in[nb].coeffs[n, j]
                parts.append(rb)
            rhs_modes.append(np.concatenate(parts))
        rhs = np.concatenate(rhs_modes)
        x = factor.solve(rhs)
        _check_step_residual(cache, key, lambda: _mortar_step_matrix(assembly, k, d), x, rhs, n)
        blk = offs[-1]
        for j in range(d + 1):
            xj = x[j * blk : (j + 1) * blk]
            coeffs[n, j] = xj[: ndof]
            for inb, nb in enumerate(nbs):
                qmodes[nb][n, j] = xj[offs[inb + 1] : offs[inb + 2]]
        u_prev = coeffs[n].sum(axis=0)
    traj = DGTrajectory(partition=partition, coeffs=coeffs, u_init=np.asarray(u_init, float).copy())
    return traj, MortarFlux(partition=partition, coeffs=qmodes)


def _mortar_step_matrix(assembly, k, d):
    """Coupled (U, Q) step system.

    Volume line:    d/dt(I U) 'mass' with plain volume mass, plus
                    Aa_vol = atilde + exterior + (b.n/2) interface mass,
                    coupled to Q through -M_Gamma (scattered);
    interface line: q-weighted interface mass under the lift tables, plus
                    M_Gamma Q + ((p - b.n) mass + q B_r + K_s) U = data.
    """
    ndof = assembly.n_dofs
    nbs = assembly.mortar_neighbors
    tab = build_interval_basis(d, k)
    nblk = 1 + len(nbs)

    def mass_block(row, col):
        if row == 0 and col == 0:
            return assembly.M_mortar_vol
        if row >= 1 and col == 0:
            ia = assembly.iface[nbs[row - 1]]
            return ia.q * (ia.M_gamma @ ia.restrict)
        return None

    def stiff_block(row, col):
        if row == 0 and col == 0:
            return assembly.A_mortar_vol
        if row == 0 and col >= 1:
            ia = assembly.iface[nbs[col - 1]]
            return -(ia.restrict.T @ ia.M_gamma)
        if row >= 1 and col == row:
            ia = assembly.iface[nbs[row - 1]]
            return ia.M_gamma
        if row >= 1 and col == 0:
            ia = assembly.iface[nbs[row - 1]]
            return (ia.M_pbn_full + ia.q * ia.B_r + ia.K_s) @ ia.restrict
        return None

    blocks = [[None] * (nblk * (d + 1)) for _ in range(nblk * (d + 1))]
    for j in range(d + 1):
        for kk in range(d + 1):
            for r in range(nblk):
                for cidx in range(nblk):
                    B = None
                    mb = mass_block(r, cidx)
                    if mb is not None:
                        B = tab.A[kk, j] * mb
                    if kk == j:
                        ab = stiff_block(r, cidx)
                        if ab is not None:
                            B = tab.gram[j] * ab if B is None else B + tab.gram[j] * ab
                    blocks[j * nblk + r][kk * nblk + cidx] = B
    return sp.bmat(blocks, format="csc")


def trajectory_norm(traj, M):
    """Discrete L2(window; L2) norm with mass matrix M."""
    gram = traj.partition.lengths[:, None] / (
        2.0 * np.arange(traj.coeffs.shape[1])[None, :] + 1.0
    )
    total = 0.0
    for n in range(traj.partition.n_intervals):
        for j in range(traj.coeffs.shape[1]):
            v = traj.coeffs[n, j]
            total += gram[n, j] * float(v @ (M @ v))
    return np.sqrt(total)
