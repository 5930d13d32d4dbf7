"""Command-line interface: scenarios in, manifest + CSV reports out.

Exit codes: 0 success, 2 usage error (argparse), 3 scenario/validation
problem, 4 numerical solver failure, 5 output I/O failure. On any failure a
single machine-readable JSON error record is printed to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, kernels
from .adjoint import (
    duration_gradient,
    evaluate_cost,
    finite_difference_gradient,
    solve_adjoint,
)
from .avfleet import simulate_coupled
from .control import SwitchSchedule
from .errors import CFLError, SolverError, TrafficFlowError, ValidationError
from .forward import ForwardProblem, SolverConfig, simulate_forward
from .optimizer import multi_start, sweep_single_switch
from .scenario import parse_scenario

EXIT_VALIDATION = 3
EXIT_SOLVER = 4
EXIT_IO = 5

FLOAT_FMT = "%.12g"


@dataclass
class RunManifest:
    """Provenance record written to the output directory before any data."""

    command: str
    scenario: str
    config: dict
    seed: int | None
    version: str
    timestamp: str
    outputs: list = field(default_factory=list)

    def write(self, out_dir: str):
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _fmt(x) -> str:
    return FLOAT_FMT % float(x)


def _write_csv(path: str, comment: str, header: list[str], rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def write_trajectory_csv(path: str, scn, traj, adj=None, stride: int = 1):
    """Field export: one row per cell per recorded node (thinned by stride)."""
    header = ["edge_id", "t", "x_center", "m", "v"]
    if adj is not None:
        header.append("lambda")

    def rows():
        nodes = list(range(0, traj.n_nodes, stride))
        if nodes[-1] != traj.n_nodes - 1:
            nodes.append(traj.n_nodes - 1)
        for n in nodes:
            t = traj.times[n]
            for g in traj.grids:
                name = scn.network.edges[g.edge].name
                m = traj.density[g.edge][n]
                v = traj.speed[g.edge][n]
                lam = adj.lam[g.edge][n] if adj is not None else None
                for i, x in enumerate(g.centers):
                    row = [name, _fmt(t), _fmt(x), _fmt(m[i]), _fmt(v[i])]
                    if lam is not None:
                        row.append(_fmt(lam[i]))
                    yield row

    _write_csv(path, "columns: " + ",".join(header), header, rows())


def write_snapshot_csv(path: str, scn, traj, t_request: float):
    """Single-time frame at the recorded node nearest to the requested time."""
    n = int(np.argmin(np.abs(traj.times - t_request)))
    header = ["edge_id", "t", "x_center", "m", "v"]

    def rows():
        for g in traj.grids:
            name = scn.network.edges[g.edge].name
            for i, x in enumerate(g.centers):
                yield [name, _fmt(traj.times[n]), _fmt(x),
                       _fmt(traj.density[g.edge][n][i]),
                       _fmt(traj.speed[g.edge][n][i])]

    _write_csv(path, f"snapshot requested t={_fmt(t_request)} "
                     f"recorded t={_fmt(traj.times[n])}", header, rows())
    return float(traj.times[n])


def write_sweep_csv(path: str, sweep):
    _write_csv(
        path, "columns: tau,J,vbar", ["tau", "J", "vbar"],
        ([_fmt(t), _fmt(j), _fmt(v)]
         for t, j, v in zip(sweep.taus, sweep.costs, sweep.vbars)),
    )


def write_descent_csv(path: str, reports):
    n_dur = reports[0].iterates[0][0].size if reports and reports[0].iterates else 0
    header = ["start", "iter", "J", *[f"s_{i+1}" for i in range(n_dur)], "beta"]

    def rows():
        for rep in reports:
            for it, ((s, cost), beta) in enumerate(zip(rep.iterates, rep.betas)):
                yield [rep.start_index, it, _fmt(cost),
                       *[_fmt(v) for v in s], _fmt(beta)]

    _write_csv(path, "columns: " + ",".join(header), header, rows())


def write_gradcheck_csv(path: str, analytic, fd):
    def rows():
        for i, (a, f) in enumerate(zip(analytic, fd)):
            denom = max(abs(f), 1e-12)
            yield [i + 1, _fmt(a), _fmt(f), _fmt(abs(a - f) / denom)]

    _write_csv(path, "columns: component,analytic,finite_diff,rel_err",
               ["component", "analytic", "finite_diff", "rel_err"], rows())


def _solver_config(args) -> SolverConfig:
    return SolverConfig(cfl_number=args.cfl, limiter=args.limiter,
                        record_stride=args.stride)


def _schedule_override(args, scn) -> SwitchSchedule | None:
    if args.durations is None and args.u0 is None:
        return None
    if args.durations is None or args.u0 is None:
        raise ValidationError("--u0 and --durations must be given together")
    try:
        durations = np.array([float(tok) for tok in args.durations.split(",")])
    except ValueError:
        raise ValidationError(f"cannot parse --durations {args.durations!r}")
    template = scn.light.schedule if scn.light is not None else None
    t_green = template.t_green if template is not None else None
    t_red = template.t_red if template is not None else None
    return SwitchSchedule(int(args.u0), durations, t_green, t_red)


def _prepare_out_dir(args) -> str:
    out_dir = args.out_dir or os.environ.get("TRAFFICFLOW_OUT_DIR", "out")
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _manifest(args, command: str, extra_config=None, seed=None) -> RunManifest:
    config = {
        "cfl": args.cfl, "limiter": args.limiter, "stride": args.stride,
        "kernel_backend": kernels.BACKEND,
    }
    config.update(extra_config or {})
    return RunManifest(
        command=command, scenario=os.path.abspath(args.scenario), config=config,
        seed=seed, version=__version__,
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )


def cmd_simulate(args) -> int:
    scn = parse_scenario(args.scenario)
    out_dir = _prepare_out_dir(args)
    try:
        snaps = [float(t) for t in args.snap.split(",")] if args.snap else []
    except ValueError:
        raise ValidationError(f"cannot parse --snap {args.snap!r}")
    manifest = _manifest(args, "simulate", {"snap": snaps})
    manifest.outputs = ["trajectory.csv"] + [
        f"snapshot_{i}.csv" for i in range(len(snaps))
    ]
    manifest.write(out_dir)

    traj = simulate_forward(scn, _schedule_override(args, scn), _solver_config(args))
    write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), scn, traj,
                         stride=args.stride)
    for i, t_req in enumerate(snaps):
        write_snapshot_csv(os.path.join(out_dir, f"snapshot_{i}.csv"), scn, traj, t_req)
    cb = evaluate_cost(traj, normalize=traj.mass_at(0) > 0)
    print(f"simulate: J={_fmt(cb.total)} "
          f"vbar={_fmt(cb.normalized_mean_velocity) if cb.normalized_mean_velocity is not None else 'n/a'} "
          f"nodes={traj.n_nodes} outputs in {out_dir}")
    return 0


def cmd_avsim(args) -> int:
    scn = parse_scenario(args.scenario)
    out_dir = _prepare_out_dir(args)
    manifest = _manifest(args, "avsim")
    manifest.outputs = ["trajectory.csv", "fleet_trajectory.csv"]
    manifest.write(out_dir)

    traj, fleet_traj = simulate_coupled(scn, _schedule_override(args, scn),
                                        _solver_config(args))
    write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), scn, traj,
                         stride=args.stride)
    write_trajectory_csv(os.path.join(out_dir, "fleet_trajectory.csv"), scn,
                         fleet_traj, stride=args.stride)
    print(f"avsim: driver mass {_fmt(traj.mass_at(traj.n_nodes - 1))}, "
          f"fleet mass {_fmt(fleet_traj.mass_at(fleet_traj.n_nodes - 1))}, "
          f"outputs in {out_dir}")
    return 0


def cmd_sweep(args) -> int:
    scn = parse_scenario(args.scenario)
    out_dir = _prepare_out_dir(args)
    manifest = _manifest(args, "sweep", {"samples": args.samples})
    manifest.outputs = ["sweep.csv"]
    manifest.write(out_dir)

    sweep = sweep_single_switch(scn, args.samples, _solver_config(args))
    write_sweep_csv(os.path.join(out_dir, "sweep.csv"), sweep)
    best = int(sweep.argmax_indices[0])
    plateau = sweep.plateau_indices().tolist()
    print(f"sweep: max vbar={_fmt(sweep.vbars.max())} at tau={_fmt(sweep.taus[best])}, "
          f"plateau samples {plateau}, outputs in {out_dir}")
    return 0


def cmd_optimize(args) -> int:
    scn = parse_scenario(args.scenario)
    out_dir = _prepare_out_dir(args)
    manifest = _manifest(
        args, "optimize",
        {"starts": args.starts, "eps": args.eps, "beta0": args.beta0,
         "max_iter": args.max_iter},
        seed=args.seed,
    )
    manifest.outputs = ["descent.csv", "best_schedule.json"]
    manifest.write(out_dir)

    result = multi_start(scn, args.starts, args.seed, eps=args.eps,
                         beta0=args.beta0, max_iter=args.max_iter,
                         cfg=_solver_config(args))
    write_descent_csv(os.path.join(out_dir, "descent.csv"), result.reports)
    best = result.best
    record = {
        "J": best.best_cost,
        "u0": best.u0,
        "durations": [float(v) for v in best.best_durations],
        "start_index": best.start_index,
        "termination": best.termination,
        "clamp_warnings": best.clamp_warnings[:5],
    }
    with open(os.path.join(out_dir, "best_schedule.json"), "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")
    print(f"optimize: best J={_fmt(best.best_cost)} from start {best.start_index} "
          f"({best.termination}), durations="
          f"{','.join(_fmt(v) for v in best.best_durations)}, outputs in {out_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    scn = parse_scenario(args.scenario)
    out_dir = _prepare_out_dir(args)
    manifest = _manifest(args, "gradcheck", {"fd_steps": args.fd_steps})
    manifest.outputs = ["gradcheck.csv"]
    manifest.write(out_dir)

    sched = _schedule_override(args, scn)
    if sched is None:
        if scn.light is None or scn.light.schedule is None:
            raise ValidationError("gradcheck needs a schedule (scenario or flags)")
        sched = scn.light.schedule
    cfg = _solver_config(args)
    problem = ForwardProblem(scn)
    traj = simulate_forward(scn, sched, cfg, problem=problem)
    adj = solve_adjoint(scn, traj, problem=problem)
    analytic = duration_gradient(scn, traj, adj, sched, problem=problem)
    dt = float(np.min(np.diff(traj.times)))
    fd = finite_difference_gradient(scn, sched, args.fd_steps * dt, cfg, problem)
    write_gradcheck_csv(os.path.join(out_dir, "gradcheck.csv"), analytic, fd)
    for i, (a, f) in enumerate(zip(analytic, fd)):
        print(f"component {i + 1}: analytic={_fmt(a)} fd={_fmt(f)}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "avsim": cmd_avsim,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trafficflow",
        description="Traffic flow on road networks: nonlocal transport with "
                    "junction coupling and switching-light optimization.",
        epilog="exit codes: 0 ok, 2 usage, 3 invalid scenario/arguments, "
               "4 solver failure, 5 output I/O failure",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario file path")
        p.add_argument("--out-dir", default=None,
                       help="output directory (default $TRAFFICFLOW_OUT_DIR or ./out)")
        p.add_argument("--cfl", type=float, default=0.99, help="CFL number (0,1]")
        p.add_argument("--limiter", default="superbee",
                       choices=["superbee", "minmod", "none"])
        p.add_argument("--stride", type=int, default=1,
                       help="record every n-th time node in CSV output")

    p = sub.add_parser("simulate", help="forward transport solve")
    common(p)
    p.add_argument("--u0", type=int, choices=[0, 1], default=None,
                   help="override initial light state")
    p.add_argument("--durations", default=None,
                   help="override phase durations, comma separated")
    p.add_argument("--snap", default=None,
                   help="comma-separated times for snapshot CSVs")

    p = sub.add_parser("avsim", help="driver/fleet co-simulation")
    common(p)
    p.add_argument("--u0", type=int, choices=[0, 1], default=None)
    p.add_argument("--durations", default=None)

    p = sub.add_parser("sweep", help="exhaustive single-switch search")
    common(p)
    p.add_argument("--samples", type=int, default=50)

    p = sub.add_parser("optimize", help="projected gradient descent, multi-start")
    common(p)
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--beta0", type=float, default=1.0)
    p.add_argument("--max-iter", type=int, default=200)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradient")
    common(p)
    p.add_argument("--u0", type=int, choices=[0, 1], default=None)
    p.add_argument("--durations", default=None)
    p.add_argument("--fd-steps", type=float, default=2.0,
                   help="finite-difference half width in time steps")

    return parser


def run_command(argv) -> int:
    """Parse argv and execute; returns the process exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (TrafficFlowError, OSError) as exc:
        if isinstance(exc, (SolverError, CFLError)):
            code = EXIT_SOLVER
        elif isinstance(exc, OSError):
            code = EXIT_IO
        else:
            code = EXIT_VALIDATION
        record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        print(json.dumps(record), file=sys.stderr)
        return code


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
