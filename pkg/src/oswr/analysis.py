"""Reference solves, error norms, convergence studies and parameter sweeps.

The monodomain reference assembles the same skew-symmetrized subdomain
forms element-group by element-group (one group per coefficient region),
plus the interface jump correction

    - int_Gamma ((b_i.n_i + b_j.n_j)/2) u v

that encodes continuity of the total flux (b u - nu grad u).n across a
coefficient discontinuity, and the same exterior Robin closure the
subdomain solves use.  With that, the converged OSWR iterate and the
monodomain solution coincide on conforming grids up to solver tolerance.

Error norms follow a nested-refinement discipline: every study grid is a
coarsening of the reference grid, so interpolating P1 fields onto the
reference mesh is exact and measured slopes carry no interpolation bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from oswr import femspace as fes
from oswr import problem as prb
from oswr.dgsolver import DGTrajectory, FactorCache, solve_window
from oswr.driver import (
    TrajectoryView,
    build_multidomain,
    initial_guess,
    iterate,
    run_windows,
)
from oswr.timebasis import TimePartition, gauss_radau
from oswr.timeproject import hat_cross_matrix

__all__ = [
    "RefGrid",
    "Reference",
    "ErrorReport",
    "StudyTable",
    "SweepTable",
    "solve_monodomain",
    "error_norms",
    "max_nodal_difference",
    "convergence_study",
    "sweep_parameters",
    "fit_slope",
]


@dataclass(frozen=True)
class RefGrid:
    """Reference grid sizes: per-subdomain cell counts and time steps."""

    nx: dict            # sid -> cells across the subdomain's x-extent
    ny: int | None      # common y grid lines (2D; bands in x)
    nt: int

    def scaled(self, factor):
        return RefGrid(
            nx={k: v * factor for k, v in self.nx.items()},
            ny=None if self.ny is None else self.ny * factor,
            nt=self.nt * factor,
        )


def _global_mesh(cfg, ref):
    """Tensor mesh of the global box whose restriction to every
    subdomain box refines that subdomain's own grid lines."""
    subs = sorted(cfg.subdomains, key=lambda s: s.box[0])
    if cfg.dim == 1:
        xs = [np.array([cfg.domain_box[0]])]
        for s in subs:
            xs.append(np.linspace(s.box[0], s.box[1], ref.nx[s.id] + 1)[1:])
        return fes.build_tensor_mesh(np.concatenate(xs))
    # bands in x are the supported reference layout; verify
    y0, y1 = cfg.domain_box[2], cfg.domain_box[3]
    for s in subs:
        if abs(s.box[2] - y0) > 1e-12 or abs(s.box[3] - y1) > 1e-12:
            raise ValueError("monodomain reference supports band decompositions in x only")
    xs = [np.array([cfg.domain_box[0]])]
    for s in subs:
        xs.append(np.linspace(s.box[0], s.box[1], ref.nx[s.id] + 1)[1:])
    ys = np.linspace(y0, y1, ref.ny + 1)
    return fes.build_tensor_mesh(np.concatenate(xs), ys)


def _owner_elems(cfg, mesh):
    """Element ids grouped by owning subdomain (centroid location)."""
    if mesh.dim == 1:
        cent = 0.5 * (mesh.coords[mesh.elems[:, 0]] + mesh.coords[mesh.elems[:, 1]])
        cx, cy = cent, None
    else:
        pts = mesh.coords[mesh.elems]
        cent = pts.mean(axis=1)
        cx, cy = cent[:, 0], cent[:, 1]
    groups = {}
    for s in cfg.subdomains:
        if mesh.dim == 1:
            m = (cx >= s.box[0]) & (cx <= s.box[1])
        else:
            m = (cx >= s.box[0]) & (cx <= s.box[1]) & (cy >= s.box[2]) & (cy <= s.box[3])
        groups[s.id] = np.nonzero(m)[0]
    counts = sum(g.size for g in groups.values())
    if counts != mesh.elems.shape[0]:
        raise ValueError("could not assign every element to a subdomain")
    return groups


def _interface_nodes(mesh, itf):
    tol = 1e-12 * max(1.0, abs(itf.position))
    if mesh.dim == 1:
        idx = np.nonzero(np.abs(mesh.coords - itf.position) <= tol)[0]
        return idx, None
    axis = itf.axis
    idx = np.nonzero(np.abs(mesh.coords[:, axis] - itf.position) <= tol)[0]
    along = mesh.coords[idx, 1 - axis]
    order = np.argsort(along)
    return idx[order], along[order]


@dataclass
class _GlobalAssembly:
    """Minimal assembly facade for the monodomain march."""

    M_full: sp.csr_matrix
    A_full: sp.csr_matrix
    degree: int
    n_dofs: int
    iface: dict = field(default_factory=dict)


@dataclass
class Reference:
    """Monodomain reference solution on the global conforming mesh."""

    mesh: fes.Mesh
    trajectory: DGTrajectory
    owners: dict
    cfg: prb.ExperimentConfig
    _norm_ops: dict = field(default_factory=dict)

    def view(self):
        return TrajectoryView([self.trajectory])

    def norm_ops(self, sid):
        """Restricted mass/stiffness of one subdomain region plus the
        participating node set."""
        if sid not in self._norm_ops:
            elems = self.owners[sid]
            nodes = np.unique(self.mesh.elems[elems])
            M = fes.assemble_mass(self.mesh, 1.0, elems=elems)
            K = fes.assemble_atilde(
                self.mesh, 1.0, (0.0, 0.0) if self.mesh.dim == 2 else (0.0,), 0.0, 0.0,
                elems=elems,
            )
            Msub = M[nodes][:, nodes].tocsr()
            Ksub = K[nodes][:, nodes].tocsr()
            self._norm_ops[sid] = (nodes, Msub, Ksub)
        return self._norm_ops[sid]


def solve_monodomain(cfg, ref, p_ext=1.0):
    """DG(d)-in-time, P1-in-space solve on the whole box, one window.

    The spatial operator is the sum of the subdomain skew forms, minus
    the interface correction gamma = (b_i.n_i + b_j.n_j)/2 (zero when b
    is continuous), plus the exterior Robin closure.
    """
    mesh = _global_mesh(cfg, ref)
    owners = _owner_elems(cfg, mesh)
    degree = cfg.subdomains[0].degree
    n = mesh.n_nodes

    M = sp.csr_matrix((n, n))
    A = sp.csr_matrix((n, n))
    by_id = {s.id: s for s in cfg.subdomains}
    for sid, elems in sorted(owners.items()):
        s = by_id[sid]
        M = M + fes.assemble_mass(mesh, s.omega, elems=elems)
        A = A + fes.assemble_atilde(mesh, s.nu, s.b, s.c, s.div_b(), elems=elems)

    # interface flux-jump correction
    for itf in cfg.interfaces():
        si, sj = by_id[itf.i], by_id[itf.j]
        nodes, along = _interface_nodes(mesh, itf)
        n_i = itf.normal_i

        def gamma(ssp, axis=itf.axis, pos=itf.position, n_i=n_i, si=si, sj=sj):
            if mesh.dim == 1:
                x, y = np.asarray(ssp, float) * 0 + pos, np.zeros_like(np.asarray(ssp, float))
            elif axis == 0:
                x, y = pos * np.ones_like(ssp), ssp
            else:
                x, y = ssp, pos * np.ones_like(ssp)
            bn_i = fes._eval_coeff(si.b[0], x, y, 0.0) * n_i[0]
            bn_j = -fes._eval_coeff(sj.b[0], x, y, 0.0) * n_i[0]
            if mesh.dim == 2:
                bn_i = bn_i + fes._eval_coeff(si.b[1], x, y, 0.0) * n_i[1]
                bn_j = bn_j - fes._eval_coeff(sj.b[1], x, y, 0.0) * n_i[1]
            return 0.5 * (bn_i + bn_j)

        if mesh.dim == 1:
            g = float(gamma(np.zeros(1))[0])
            A = A - sp.coo_matrix(([g], ([nodes[0]], [nodes[0]])), shape=(n, n)).tocsr()
        else:
            G = hat_cross_matrix(along, along, gamma, "mass")
            A = A - fes.scatter_matrix(G, nodes, nodes, n, n)

    # exterior closure with owner-dispatched advection
    sides = ("xmin", "xmax") if mesh.dim == 1 else ("xmin", "xmax", "ymin", "ymax")
    for side in sides:
        nodes = mesh.side_nodes(side)
        if mesh.dim == 1:
            x = mesh.coords[nodes[0]]
            s = next(s for s in cfg.subdomains if s.box[0] - 1e-12 <= x <= s.box[1] + 1e-12)
            nx_dir = -1.0 if side == "xmin" else 1.0
            bn = fes._eval_coeff(s.b[0], np.array([x]), np.zeros(1), 0.0)[0] * nx_dir
            A = A + sp.coo_matrix(
                ([p_ext - 0.5 * bn], ([nodes[0]], [nodes[0]])), shape=(n, n)
            ).tocsr()
            continue
        axis = 0 if side in ("xmin", "xmax") else 1
        normal = fes._SIDE_NORMALS_2D[side]
        pos = mesh.box[2 * axis] if side.endswith("min") else mesh.box[2 * axis + 1]
        along = mesh.coords[nodes, 1 - axis]

        def w(ssp, axis=axis, pos=pos, normal=normal):
            x = pos * np.ones_like(ssp) if axis == 0 else ssp
            y = ssp if axis == 0 else pos * np.ones_like(ssp)
            bn = np.zeros_like(ssp)
            for s in cfg.subdomains:
                inside = (x >= s.box[0]) & (x <= s.box[1]) & (y >= s.box[2]) & (y <= s.box[3])
                if np.any(inside):
                    bx = fes._eval_coeff(s.b[0], x, y, 0.0)
                    by_ = fes._eval_coeff(s.b[1], x, y, 0.0)
                    bn = np.where(inside, bx * normal[0] + by_ * normal[1], bn)
            return p_ext - 0.5 * bn

        B = hat_cross_matrix(along, along, w, "mass")
        A = A + fes.scatter_matrix(B, nodes, nodes, n, n)

    asm = _GlobalAssembly(M_full=M.tocsr(), A_full=A.tocsr(), degree=degree, n_dofs=n)
    part = TimePartition.uniform(0.0, cfg.T, ref.nt)
    bp = part.breakpoints
    loads = [
        fes.assemble_load(mesh, cfg.f, (bp[m], bp[m + 1] - bp[m]), degree)
        for m in range(ref.nt)
    ]
    u0 = fes.nodal_interpolate(mesh, cfg.u0, t=0.0)
    traj = solve_window(asm, {}, part, u0, loads, cache=FactorCache())
    return Reference(mesh=mesh, trajectory=traj, owners=owners, cfg=cfg)


# ---------------------------------------------------------------------------
# Error norms
# ---------------------------------------------------------------------------


@dataclass
class ErrorReport:
    """Per-subdomain error norms against the reference."""

    e_inf: dict
    e_l2: dict
    e_T_l2: dict
    e_T_h1: dict

    def row(self, sids):
        out = []
        for name in ("e_inf", "e_l2", "e_T_l2", "e_T_h1"):
            for sid in sids:
                out.append(getattr(self, name)[sid])
        return out


def _check_nested(coarse_n, fine_n, what):
    if fine_n % coarse_n != 0:
        raise ValueError(f"non-nested grids rejected: {what} ({fine_n} vs {coarse_n})")


_G2T = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


def error_norms(sol, reference, check_nesting=True):
    """Errors of a multidomain (or monodomain) solution vs the reference.

    Evaluates the solution at the reference time nodes (left limits at
    breakpoints, plus the interior Radau points for the sup norm),
    interpolates P1 fields onto the reference mesh (exact for nested
    meshes) and assembles the norms with reference-mesh operators.
    """
    cfg = reference.cfg
    ref_part = reference.trajectory.partition
    ref_view = reference.view()
    degree = reference.trajectory.degree
    radau = gauss_radau(degree).nodes[:-1]  # interior nodes only

    e_inf, e_l2, e_T_l2, e_T_h1 = {}, {}, {}, {}
    for s in cfg.subdomains:
        sid = s.id
        view = sol.view(sid) if hasattr(sol, "view") else sol[sid]
        nodes, M, K = reference.norm_ops(sid)
        pts = reference.mesh.coords[nodes]

        mesh_i = getattr(view, "mesh", None)
        if mesh_i is None:
            raise ValueError("solution view must carry its mesh (use bind_solution)")

        if check_nesting:
            for w in view.windows:
                _check_nested(
                    w.partition.n_intervals * len(view.windows),
                    ref_part.n_intervals,
                    f"time grid of subdomain {sid}",
                )

        def diff_at(t, left):
            u = mesh_i.eval_p1(view.value(t, left=left), pts)
            r = ref_view.value(t, left=left)[nodes]
            return u - r

        sup2 = 0.0
        bp = ref_part.breakpoints
        for t in bp:
            d = diff_at(t, True)
            sup2 = max(sup2, float(d @ (M @ d)))
        for n in range(ref_part.n_intervals):
            for tau in radau:
                t = bp[n] + tau * (bp[n + 1] - bp[n])
                d = diff_at(t, False)
                sup2 = max(sup2, float(d @ (M @ d)))
        e_inf[sid] = math.sqrt(sup2)

        acc = 0.0
        for n in range(ref_part.n_intervals):
            k = bp[n + 1] - bp[n]
            for gg in _G2T:
                t = bp[n] + gg * k
                d = diff_at(t, False)
                acc += 0.5 * k * float(d @ (M @ d))
        e_l2[sid] = math.sqrt(acc)

        dT = diff_at(ref_part.end, True)
        l2T = float(dT @ (M @ dT))
        e_T_l2[sid] = math.sqrt(l2T)
        e_T_h1[sid] = math.sqrt(l2T + float(dT @ (K @ dT)))
    return ErrorReport(e_inf=e_inf, e_l2=e_l2, e_T_l2=e_T_l2, e_T_h1=e_T_h1)


@dataclass
class SolutionViews:
    """Binds each subdomain's TrajectoryView to its mesh for evaluation."""

    views: dict

    def view(self, sid):
        return self.views[sid]


def bind_solution(solution, md):
    views = {}
    for sid, trajs in solution.trajectories.items():
        v = TrajectoryView(trajs)
        v.mesh = md.assemblies[sid].mesh
        views[sid] = v
    return SolutionViews(views=views)


def bind_reference_views(reference):
    v = reference.view()
    v.mesh = reference.mesh
    return SolutionViews(views={s.id: v for s in reference.cfg.subdomains})


def max_nodal_difference(solution, md, reference):
    """Max over subdomains, their nodes, and their time breakpoints of
    the pointwise difference to the reference trajectory."""
    ref_view = reference.view()
    out = 0.0
    for sid, trajs in solution.trajectories.items():
        mesh_i = md.assemblies[sid].mesh
        pts = mesh_i.coords
        view = TrajectoryView(trajs)
        ts = view.breakpoints()
        for t in ts:
            u = view.value(t, left=True)
            r = reference.mesh.eval_p1(ref_view.value(t, left=True), pts)
            out = max(out, float(np.max(np.abs(u - r))))
    return out


# ---------------------------------------------------------------------------
# Convergence studies
# ---------------------------------------------------------------------------


@dataclass
class StudyTable:
    axis: str
    rows: list        # dicts: level, h/k per subdomain, norms per subdomain
    slopes: dict      # (norm, sid) -> fitted slope
    sids: list

    NORMS = ("e_inf", "e_l2", "e_T_l2", "e_T_h1")


def fit_slope(sizes, errors):
    """Least-squares slope of log(error) against log(size)."""
    sizes = np.asarray(sizes, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if sizes.size < 3:
        raise ValueError("slope fit needs at least 3 rows")
    mask = errors > 0
    if mask.sum() < 3:
        raise ValueError("not enough positive errors to fit a slope")
    return float(np.polyfit(np.log(sizes[mask]), np.log(errors[mask]), 1)[0])


def _scaled_cfg(cfg, axis, factor):
    subs = []
    for s in cfg.subdomains:
        nx, ny, nt = s.nx, s.ny, s.nt
        if axis in ("space", "spacetime"):
            nx *= factor
            ny = None if ny is None else ny * factor
        if axis in ("time", "spacetime"):
            nt *= factor
        subs.append(prb.SubdomainSpec(
            id=s.id, box=s.box, nu=s.nu, b=s.b, c=s.c, omega=s.omega,
            nx=nx, ny=ny, nt=nt, degree=s.degree,
        ))
    out = prb.ExperimentConfig(
        domain_box=cfg.domain_box, T=cfg.T, subdomains=subs,
        transmission=cfg.transmission, u0=cfg.u0, f=cfg.f, windows=cfg.windows,
        tolerance=cfg.tolerance, max_iterations=cfg.max_iterations,
        initial_guess=cfg.initial_guess,
    )
    return out


def _lcm_list(vals):
    out = 1
    for v in vals:
        out = math.lcm(out, int(v))
    return out


def reference_grid(cfg, axis, levels, refine_ratio=2, min_factor=4):
    """Reference grid obeying the nesting discipline: at least min_factor
    finer than the finest level along the refined axis, an exact common
    refinement of every level's grids, and equal to the study grids along
    unrefined axes (so unrefined-axis discretization error cancels)."""
    fine = refine_ratio ** (levels - 1)
    subs = cfg.subdomains
    if axis in ("time", "spacetime"):
        nts = [s.nt * fine for s in subs]
        lcm_nt = _lcm_list(nts)
        mult = max(1, math.ceil(min_factor * max(nts) / lcm_nt))
        ref_nt = mult * lcm_nt * cfg.windows
    else:
        # time grids stay at base level; the reference only needs to nest them
        ref_nt = _lcm_list([s.nt for s in subs]) * cfg.windows

    if cfg.dim == 1:
        if axis in ("space", "spacetime"):
            nx = {s.id: s.nx * fine * min_factor for s in subs}
        else:
            nx = {s.id: s.nx for s in subs}
        return RefGrid(nx=nx, ny=None, nt=ref_nt)

    if axis == "time":
        # space grids must already conform across the interfaces
        nys = {s.ny for s in subs}
        if len(nys) != 1:
            raise ValueError("time studies need trace-conforming space grids")
        return RefGrid(nx={s.id: s.nx for s in subs}, ny=subs[0].ny, nt=ref_nt)
    nys = [s.ny * fine for s in subs]
    lcm_ny = _lcm_list(nys)
    mult = max(1, math.ceil(min_factor * max(nys) / lcm_ny))
    ref_ny = mult * lcm_ny
    nx = {s.id: s.nx * fine * min_factor for s in subs}
    return RefGrid(nx=nx, ny=ref_ny, nt=ref_nt)


def convergence_study(cfg, axis, levels, refine_ratio=2, tol=1e-10, budget=None,
                      reference=None, verbose=False):
    """Refine `levels` times along the given axis, run OSWR to a tight
    tolerance per level, and fit log-log slopes of the error norms."""
    if levels < 3:
        raise ValueError("a study needs at least 3 levels")
    if axis not in ("time", "space", "spacetime"):
        raise ValueError(f"unknown study axis {axis!r}")
    if reference is None:
        reference = solve_monodomain(cfg, reference_grid(cfg, axis, levels, refine_ratio))
    sids = [s.id for s in cfg.subdomains]
    rows = []
    for lev in range(levels):
        cl = _scaled_cfg(cfg, axis, refine_ratio**lev)
        md = build_multidomain(cl)
        solution = run_windows(
            cl, md=md, tol=tol, budget=budget or cl.max_iterations
        )
        rep = error_norms(bind_solution(solution, md), reference)
        row = {"level": lev}
        for s in cl.subdomains:
            ext = s.box[1] - s.box[0]
            row[("h", s.id)] = ext / s.nx
            row[("k", s.id)] = cfg.T / cfg.windows / s.nt
            for name in StudyTable.NORMS:
                row[(name, s.id)] = getattr(rep, name)[s.id]
        rows.append(row)
        if verbose:
            print(f"level {lev}: " + " ".join(
                f"{name}[{sid}]={row[(name, sid)]:.3e}"
                for name in StudyTable.NORMS for sid in sids
            ))
    size_key = "k" if axis == "time" else "h"
    slopes = {}
    for name in StudyTable.NORMS:
        for sid in sids:
            slopes[(name, sid)] = fit_slope(
                [r[(size_key, sid)] for r in rows], [r[(name, sid)] for r in rows]
            )
    return StudyTable(axis=axis, rows=rows, slopes=slopes, sids=sids)


# ---------------------------------------------------------------------------
# Transmission-parameter sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepTable:
    rows: list       # dicts: p, q, iterations, converged
    best: int | None


def _error_mode_cfg(cfg):
    zero = prb.const_expr(0.0)
    return prb.ExperimentConfig(
        domain_box=cfg.domain_box, T=cfg.T, subdomains=cfg.subdomains,
        transmission=cfg.transmission, u0=zero, f=zero, windows=1,
        tolerance=cfg.tolerance, max_iterations=cfg.max_iterations,
        initial_guess="zero",
    )


def sweep_parameters(cfg, p_values, q_values, target_residual, mode="error",
                     seed=0, budget=None, verbose=False):
    """Iteration counts to a target residual over a (p, q) grid.

    mode='error' runs the homogeneous problem (f = u0 = 0) with a seeded
    random initial guess; mode='full' runs the configured problem with
    its configured initial-guess strategy.  Budget exhaustion is recorded
    as saturation (converged=False), not a failure.
    """
    if not p_values:
        raise ValueError("empty p list")
    q_values = list(q_values) or [0.0]
    budget = budget or cfg.max_iterations
    base = _error_mode_cfg(cfg) if mode == "error" else cfg
    rows = []
    for p in p_values:
        for q in q_values:
            trans = {
                key: prb.TransmissionParams(p=float(p), q=float(q), r=tp.r, s=tp.s)
                for key, tp in base.transmission.items()
            }
            c = prb.ExperimentConfig(
                domain_box=base.domain_box, T=base.T, subdomains=base.subdomains,
                transmission=trans, u0=base.u0, f=base.f, windows=1,
                tolerance=base.tolerance, max_iterations=budget,
                initial_guess=base.initial_guess,
            )
            md = build_multidomain(c)
            u_init = {
                sid: fes.nodal_interpolate(asm.mesh, c.u0, t=0.0)
                for sid, asm in md.assemblies.items()
            }
            traces = None
            if mode == "error":
                md.set_window(0.0, c.T)
                rng = np.random.default_rng(seed)
                traces = {}
                for sid in sorted(md.assemblies):
                    for nb, tr in initial_guess("zero", md, sid, u_init[sid]).items():
                        tr.coeffs[...] = rng.standard_normal(tr.coeffs.shape)
                        traces[(sid, nb)] = tr
            _, _, _, hist = iterate(
                md, (0.0, c.T), u_init, budget, target_residual,
                guess=c.initial_guess, traces=traces,
            )
            rows.append({
                "p": float(p), "q": float(q),
                "iterations": hist.iterations, "converged": hist.converged,
            })
            if verbose:
                print(f"p={p} q={q}: {hist.iterations} iterations, converged={hist.converged}")
    conv = [i for i, r in enumerate(rows) if r["converged"]]
    pool = conv if conv else range(len(rows))
    best = min(pool, key=lambda i: rows[i]["iterations"]) if rows else None
    return SweepTable(rows=rows, best=best)
