"""Command-line front end.

Subcommands:

* ``oswr run <config> [--out DIR] [--times LIST] [--force-mortar]``
  runs the windowed OSWR solver; writes per-subdomain solution
  snapshots, the residual history and a run manifest.
* ``oswr study <config> --axis time|space|spacetime --levels N``
  convergence-order study; writes a study table CSV with a slopes
  footer row and optionally a gnuplot script.
* ``oswr sweep <config> --p LIST --q LIST [--seed S]``
  iteration counts over a transmission-parameter grid.

Exit codes: 0 success, 2 configuration/validation error, 3 solver
failure.  All outputs are deterministic for fixed config and flags; the
manifest embeds the resolved config so a run can be reproduced
bit-identically from it.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from oswr import analysis as ana
from oswr import problem as prb
from oswr.dgsolver import SolverError
from oswr.driver import DivergenceError, TrajectoryView, build_multidomain, run_windows

__all__ = ["main", "cmd_run", "cmd_study", "cmd_sweep"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _fmt(v):
    return f"{float(v):.17g}"


def _read_config(path):
    """Read a config file, or extract the embedded config of a manifest."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(text)
        if "config" not in doc:
            raise prb.ConfigError("manifest file has no embedded config")
        text = doc["config"]
    return prb.parse_config(text), text


def _validate_or_fail(cfg):
    diags = prb.validate_problem(cfg)
    for d in diags:
        if d.severity == "warning":
            print(f"warning: {d.message}", file=sys.stderr)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        for d in errors:
            print(f"error: {d.message}", file=sys.stderr)
        raise prb.ConfigError("validation failed")
    return diags


def _write_manifest(outdir, command, cfg, outputs, wall, residuals):
    doc = {
        "command": command,
        "config": prb.serialize_config(cfg),
        "outputs": sorted(outputs),
        "wall_time_s": wall,
        "residual_history": residuals,
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def cmd_run(args):
    cfg, _ = _read_config(args.config)
    _validate_or_fail(cfg)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    md = build_multidomain(cfg, force_mortar=args.force_mortar)
    sol = run_windows(cfg, md=md, force_mortar=args.force_mortar)
    wall = time.perf_counter() - t0

    times = [cfg.T] if not args.times else [float(t) for t in args.times.split(",")]
    outputs = []
    for sid in sorted(sol.trajectories):
        mesh = md.assemblies[sid].mesh
        view = TrajectoryView(sol.trajectories[sid])
        cols = ["x"] + (["y"] if mesh.dim == 2 else [])
        cols += [f"u_t{_fmt(t)}" for t in times]
        rows = []
        vals = [view.value(t, left=True) for t in times]
        for n in range(mesh.n_nodes):
            if mesh.dim == 1:
                row = [mesh.coords[n]]
            else:
                row = [mesh.coords[n, 0], mesh.coords[n, 1]]
            row += [v[n] for v in vals]
            rows.append(",".join(_fmt(v) for v in row))
        path = outdir / f"solution_{sid}.csv"
        path.write_text(",".join(cols) + "\n" + "\n".join(rows) + "\n")
        outputs.append(path.name)

    res_rows = ["window,iteration,residual"]
    residuals = []
    for w, hist in enumerate(sol.histories):
        for it, r in enumerate(hist.residuals, start=1):
            res_rows.append(f"{w},{it},{_fmt(r)}")
            residuals.append(r)
    rpath = outdir / "residuals.csv"
    rpath.write_text("\n".join(res_rows) + "\n")
    outputs.append(rpath.name)
    _write_manifest(outdir, "run", cfg, outputs, wall, residuals)
    return EXIT_OK


def _study_csv(table):
    sids = table.sids
    header = ["level"]
    for sid in sids:
        header += [f"h_{sid}", f"k_{sid}"]
    for name in table.NORMS:
        for sid in sids:
            header.append(f"{name}_{sid}")
    lines = [",".join(header)]
    for row in table.rows:
        vals = [str(row["level"])]
        for sid in sids:
            vals += [_fmt(row[("h", sid)]), _fmt(row[("k", sid)])]
        for name in table.NORMS:
            for sid in sids:
                vals.append(_fmt(row[(name, sid)]))
        lines.append(",".join(vals))
    foot = ["slopes"] + ["" for _ in sids for _ in range(2)]
    for name in table.NORMS:
        for sid in sids:
            foot.append(_fmt(table.slopes[(name, sid)]))
    lines.append(",".join(foot))
    return "\n".join(lines) + "\n"


_GNUPLOT = """set logscale xy
set key left top
set xlabel "{xlabel}"
set ylabel "error"
set datafile separator ","
plot \\
{plots}
"""


def cmd_study(args):
    cfg, _ = _read_config(args.config)
    _validate_or_fail(cfg)
    if args.levels < 3:
        print("error: a study needs at least 3 levels (slope fit)", file=sys.stderr)
        return EXIT_CONFIG
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    axis = {"spacetime": "spacetime", "time": "time", "space": "space"}[args.axis]
    table = ana.convergence_study(cfg, axis, args.levels, tol=args.tol)
    wall = time.perf_counter() - t0
    path = outdir / "study.csv"
    path.write_text(_study_csv(table))
    outputs = [path.name]
    if args.plot:
        sids = table.sids
        xcol = 2 if axis == "time" else 1  # 1-based: k_1 or h_1
        plots = []
        col = 1 + 2 * len(sids) + 1
        for name in table.NORMS:
            for sid in sids:
                plots.append(
                    f"  'study.csv' every ::1::{len(table.rows)} using {xcol}:{col}"
                    f" with linespoints title '{name}_{sid}'"
                )
                col += 1
        gp = outdir / "study.gp"
        gp.write_text(_GNUPLOT.format(
            xlabel="k" if axis == "time" else "h", plots=", \\\n".join(plots)
        ))
        outputs.append(gp.name)
    _write_manifest(outdir, f"study --axis {args.axis} --levels {args.levels}",
                    cfg, outputs, wall, [])
    return EXIT_OK


def cmd_sweep(args):
    cfg, _ = _read_config(args.config)
    _validate_or_fail(cfg)
    p_values = [float(v) for v in args.p.split(",") if v.strip()]
    q_values = [float(v) for v in args.q.split(",") if v.strip()] if args.q else [0.0]
    if not p_values or any(p <= 0 for p in p_values):
        print("error: --p needs a list of positive reals", file=sys.stderr)
        return EXIT_CONFIG
    if any(q < 0 for q in q_values):
        print("error: --q values must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    table = ana.sweep_parameters(
        cfg, p_values, q_values, args.target, mode=args.mode, seed=args.seed
    )
    wall = time.perf_counter() - t0
    lines = ["p,q,iterations,converged,best"]
    for i, row in enumerate(table.rows):
        lines.append(
            f"{_fmt(row['p'])},{_fmt(row['q'])},{row['iterations']},"
            f"{int(row['converged'])},{int(i == table.best)}"
        )
    path = outdir / "sweep.csv"
    path.write_text("\n".join(lines) + "\n")
    _write_manifest(outdir, f"sweep --p {args.p} --q {args.q} --seed {args.seed}",
                    cfg, [path.name], wall, [])
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="oswr",
        description="Optimized Schwarz waveform relaxation with DG time stepping",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the windowed OSWR solver")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=".")
    p_run.add_argument("--times", default="", help="comma-separated snapshot times")
    p_run.add_argument("--force-mortar", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_st = sub.add_parser("study", help="convergence-order study")
    p_st.add_argument("config")
    p_st.add_argument("--axis", required=True, choices=["time", "space", "spacetime"])
    p_st.add_argument("--levels", type=int, required=True)
    p_st.add_argument("--tol", type=float, default=1e-10)
    p_st.add_argument("--out", default=".")
    p_st.add_argument("--plot", action="store_true", help="emit a gnuplot script")
    p_st.set_defaults(func=cmd_study)

    p_sw = sub.add_parser("sweep", help="transmission-parameter sweep")
    p_sw.add_argument("config")
    p_sw.add_argument("--p", required=True, help="comma-separated p values")
    p_sw.add_argument("--q", default="0", help="comma-separated q values")
    p_sw.add_argument("--seed", type=int, default=0)
    p_sw.add_argument("--target", type=float, default=1e-6)
    p_sw.add_argument("--mode", choices=["error", "full"], default="error")
    p_sw.add_argument("--out", default=".")
    p_sw.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except prb.ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, DivergenceError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
