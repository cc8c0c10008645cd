"""Command-line interface.

Subcommands: ``fluid`` (solve and export), ``simulate`` (one event log),
``sweep`` (full replication sweep with convergence report), ``diagnose``
(compensated-count diagnostics) and ``wait`` (virtual waiting-time table).
Exit codes: 0 success, 2 configuration error, 3 numerical failure,
64 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ScenarioConfig
from .errors import ConfigError, DomainError, HorizonExceeded, MassExceeded, NoConvergence
from .fluid import fluid_virtual_wait, solve
from .harness import WAIT_MARGIN, martingale_report, resolve_jobs, run_replication, run_sweep
from .simulator import virtual_wait

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", required=True, help="scenario JSON file")
    sub.add_argument("--out", default=None, help="output directory (overrides the scenario)")
    sub.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sub.add_argument("--grid-dt", type=float, default=None, help="override the fluid grid step")
    sub.add_argument("--horizon", type=float, default=None, help="override the horizon")
    sub.add_argument("--jobs", type=int, default=1, help="parallel replications (RENEGE_FLUID_JOBS overrides)")
    sub.add_argument("--snapshot", default=None, help="comma-separated snapshot/probe times")


def build_parser() -> _Parser:
    parser = _Parser(prog="renegefluid", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("fluid", "solve the fluid model and export fluid.csv"),
        ("simulate", "run one replication and export the event log"),
        ("sweep", "replication sweep with convergence report"),
        ("diagnose", "compensated-count (martingale) diagnostics"),
        ("wait", "virtual waiting-time comparison table"),
    ):
        _add_common(subs.add_parser(name, help=helptext))
    return parser


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.from_file(args.config)
    data = cfg.to_json()
    if args.out is not None:
        data["output_dir"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    if args.grid_dt is not None:
        data["grid_dt"] = args.grid_dt
    if args.horizon is not None:
        data["horizon"] = args.horizon
    if args.snapshot is not None:
        data["snapshot_times"] = [float(x) for x in args.snapshot.split(",") if x.strip()]
    return ScenarioConfig.from_json(data)


def _cmd_fluid(cfg: ScenarioConfig, args) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    sol = solve(cfg.fluid_inputs(), cfg.horizon, cfg.grid_dt)
    sol.to_csv(out / "fluid.csv")
    if cfg.snapshot_times:
        snaps = {
            "times": list(cfg.snapshot_times),
            "eta": [sol.eta_measure(s).materialize(cfg.grid_dt).to_json() for s in cfg.snapshot_times],
            "nu": [sol.nu_measure(s).materialize(cfg.grid_dt).to_json() for s in cfg.snapshot_times],
        }
        (out / "fluid-snapshots.json").write_text(json.dumps(snaps) + "\n")
    print(f"fluid solution on [0, {cfg.horizon}] written to {out / 'fluid.csv'}")
    return EXIT_OK


def _cmd_simulate(cfg: ScenarioConfig, args) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    N = cfg.N_list[0]
    sim = run_replication(cfg, N, 0)
    events = out / f"events-{N}-{sim.seed}.csv"
    sim.to_csv(events)
    payload = {
        "N": N,
        "seed": sim.seed,
        "times": list(cfg.snapshot_times),
        "eta": [sim.snapshots[s]["eta"].to_json() for s in cfg.snapshot_times],
        "nu": [sim.snapshots[s]["nu"].to_json() for s in cfg.snapshot_times],
    }
    (out / f"snapshots-{N}-{sim.seed}.json").write_text(json.dumps(payload) + "\n")
    print(f"{len(sim)} events written to {events}")
    return EXIT_OK


def _cmd_sweep(cfg: ScenarioConfig, args) -> int:
    report = run_sweep(cfg, jobs=resolve_jobs(args.jobs))
    out = Path(cfg.output_dir)
    for N in cfg.N_list:
        agg = report.aggregates[str(N)]["sup_err_mean"]
        line = ", ".join(f"{k}={v:.4f}" for k, v in agg.items())
        print(f"N={N}: mean sup errors {line}")
    print(f"report written to {out / 'report.json'}")
    return EXIT_OK


def _cmd_diagnose(cfg: ScenarioConfig, args) -> int:
    rows = martingale_report(cfg, jobs=resolve_jobs(args.jobs))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "martingales.json").write_text(json.dumps(rows, indent=2) + "\n")
    print(f"{'N':>6} {'proc':>4} {'t':>8} {'mean':>12} {'rms':>12}")
    for r in rows:
        print(f"{r['N']:>6} {r['process']:>4} {r['t']:>8g} {r['mean']:>12.5f} {r['rms']:>12.5f}")
    return EXIT_OK


def _cmd_wait(cfg: ScenarioConfig, args) -> int:
    probes = cfg.snapshot_times or [cfg.horizon / 2.0]
    sol = solve(cfg.fluid_inputs(), cfg.horizon + WAIT_MARGIN, cfg.grid_dt)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["t,N,rep,W_sim,W_fluid,abs_err"]
    print(f"{'t':>8} {'N':>6} {'W_fluid':>10} {'mean W_sim':>12} {'mean |err|':>12}")
    for tp in probes:
        wf = fluid_virtual_wait(sol, tp)
        for N in cfg.N_list:
            sims, errs = [], []
            for rep in range(cfg.replications):
                sim = run_replication(cfg, N, rep, horizon=cfg.horizon + WAIT_MARGIN)
                try:
                    w = virtual_wait(sim, tp)
                except HorizonExceeded:
                    w = float("nan")
                sims.append(w)
                errs.append(abs(w - wf))
                lines.append(f"{float(tp)!r},{N},{rep},{float(w)!r},{float(wf)!r},{float(abs(w - wf))!r}")
            mean_w = sum(sims) / len(sims)
            mean_e = sum(errs) / len(errs)
            print(f"{tp:>8g} {N:>6} {wf:>10.4f} {mean_w:>12.4f} {mean_e:>12.4f}")
    (out / "wait.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


_COMMANDS = {
    "fluid": _cmd_fluid,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "diagnose": _cmd_diagnose,
    "wait": _cmd_wait,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoConvergence, HorizonExceeded, MassExceeded, DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
