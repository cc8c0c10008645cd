"""Replication sweeps and convergence reports.

A sweep solves the fluid model once, then for each system size N and
replication builds an initial population, simulates the N-server system
with N-fold accelerated arrivals, scales the paths by 1/N, and compares
them with the fluid solution: sup-norm path errors on the solver grid,
Kolmogorov-Smirnov distances of the scaled measure snapshots, virtual
waiting times at probe times, and the scaled compensator differences that
should vanish as N grows.

Replications fan out over a process pool; per-run outputs are keyed by
(N, seed) so results and files are identical whatever the worker count.
"""

from __future__ import annotations

import json

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .errors import HorizonExceeded
from .fluid import FluidSolution, fluid_virtual_wait, solve
from .measures import ks_distance
from .simulator import (
    RenewalArrivals,
    SimRun,
    build_initial_state,
    compensators_at,
    run,
    virtual_wait,
)

__all__ = [
    "replication_seed",
    "run_replication",
    "run_metrics",
    "ConvergenceReport",
    "run_sweep",
    "martingale_report",
    "resolve_jobs",
]

JOBS_ENV_VAR = "RENEGE_FLUID_JOBS"
PATH_NAMES = ("X", "Q", "K", "R")
WAIT_MARGIN = 3.0


def resolve_jobs(jobs: int | None) -> int:
    """Worker count: the RENEGE_FLUID_JOBS variable overrides the flag."""
    env = os.environ.get(JOBS_ENV_VAR)
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            pass
    return max(int(jobs or 1), 1)


def replication_seed(base_seed: int, N: int, rep: int) -> int:
    """Deterministic per-replication seed derived from (base, N, rep)."""
    ss = np.random.SeedSequence([int(base_seed), int(N), int(rep)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_replication(cfg: ScenarioConfig, N: int, rep: int, horizon: float | None = None) -> SimRun:
    """Simulate one (N, rep) realization of the scenario."""
    seed = replication_seed(cfg.seed, N, rep)
    rng = np.random.default_rng(seed)
    state = build_initial_state(N, cfg.x0, cfg.nu0, cfg.eta0, cfg.service, cfg.patience, rng)
    arrivals = RenewalArrivals(cfg.interarrival, scale=N)
    return run(
        state,
        arrivals,
        horizon=horizon if horizon is not None else cfg.horizon,
        snapshot_times=cfg.snapshot_times,
        rng=rng,
        service=cfg.service,
        patience=cfg.patience,
        seed=seed,
    )


def _scaled_path(sim: SimRun, name: str, grid: np.ndarray) -> np.ndarray:
    return np.asarray(sim.value_at(name, grid), dtype=float) / sim.N


def run_metrics(
    sim: SimRun,
    sol: FluidSolution,
    cfg: ScenarioConfig,
    probe_times,
    grid_limit: float,
    with_martingales: bool = True,
) -> dict:
    """Comparison metrics of one scaled run against the fluid solution."""
    keep = sol.t <= grid_limit + 1e-12
    grid = sol.t[keep]
    sup_err = {}
    for name in PATH_NAMES:
        scaled = _scaled_path(sim, name, grid)
        sup_err[name] = float(np.max(np.abs(scaled - getattr(sol, name)[keep])))
    ks = {"eta": {}, "nu": {}}
    for s in cfg.snapshot_times:
        snap = sim.snapshots[s]
        ks["eta"][f"{s:g}"] = float(ks_distance(snap["eta"].scaled(1.0 / sim.N), sol.eta_measure(s)))
        ks["nu"][f"{s:g}"] = float(ks_distance(snap["nu"].scaled(1.0 / sim.N), sol.nu_measure(s)))
    waits = {}
    for tp in probe_times:
        try:
            w_sim = virtual_wait(sim, tp)
        except HorizonExceeded:
            w_sim = None
        w_fluid = fluid_virtual_wait(sol, tp)
        waits[f"{tp:g}"] = {
            "sim": w_sim,
            "fluid": w_fluid,
            "abs_err": abs(w_sim - w_fluid) if w_sim is not None else None,
        }
    out = {"sup_err": sup_err, "ks": ks, "virtual_wait": waits}
    if with_martingales:
        comps = compensators_at(sim, cfg.service, cfg.patience, probe_times)
        counts = {name: np.asarray(sim.value_at(name, np.asarray(probe_times)), dtype=float) for name in ("D", "S", "R")}
        out["martingale"] = {
            name: {f"{tp:g}": float((counts[name][i] - comps[name][i]) / sim.N) for i, tp in enumerate(probe_times)}
            for name in ("D", "S", "R")
        }
    return out


def _sweep_task(args):
    cfg, sol, N, rep, probe_times, out_dir, write = args
    sim_horizon = sol.horizon
    sim = run_replication(cfg, N, rep, horizon=sim_horizon)
    metrics = run_metrics(sim, sol, cfg, probe_times, grid_limit=cfg.horizon)
    metrics["N"] = N
    metrics["rep"] = rep
    metrics["seed"] = sim.seed
    if write:
        events = Path(out_dir) / f"events-{N}-{sim.seed}.csv"
        sim.to_csv(events)
        snaps = Path(out_dir) / f"snapshots-{N}-{sim.seed}.json"
        payload = {
            "N": N,
            "seed": sim.seed,
            "times": list(cfg.snapshot_times),
            "eta": [sim.snapshots[s]["eta"].to_json() for s in cfg.snapshot_times],
            "nu": [sim.snapshots[s]["nu"].to_json() for s in cfg.snapshot_times],
        }
        snaps.write_text(json.dumps(payload) + "\n")
        metrics["events_csv"] = events.name
        metrics["snapshots_json"] = snaps.name
    return (N, rep), metrics


@dataclass
class ConvergenceReport:
    scenario: dict
    probe_times: list
    runs: list
    aggregates: dict
    slopes: dict

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "probe_times": self.probe_times,
            "runs": self.runs,
            "aggregates": self.aggregates,
            "slopes": self.slopes,
        }

    def mean_sup_err(self, N: int, name: str) -> float:
        return self.aggregates[str(N)]["sup_err_mean"][name]

    def mean_ks(self, N: int, which: str, t: float) -> float:
        return self.aggregates[str(N)]["ks_mean"][which][f"{t:g}"]

    def mean_wait_err(self, N: int, t: float) -> float:
        return self.aggregates[str(N)]["wait_abs_err_mean"][f"{t:g}"]


def run_sweep(
    cfg: ScenarioConfig,
    jobs: int = 1,
    probe_times=None,
    write: bool = True,
    wait_margin: float = WAIT_MARGIN,
    fluid_solution: FluidSolution | None = None,
) -> ConvergenceReport:
    """Fluid solve plus the full replication sweep and aggregation.

    The fluid model and the simulations run to horizon + wait_margin so
    virtual waits probed near the horizon can resolve; all path comparisons
    are restricted to [0, horizon].
    """
    jobs = resolve_jobs(jobs)
    probe_times = list(probe_times if probe_times is not None else cfg.snapshot_times)
    out_dir = Path(cfg.output_dir)
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
    sol = fluid_solution
    if sol is None:
        sol = solve(cfg.fluid_inputs(), cfg.horizon + wait_margin, cfg.grid_dt)
    if write:
        _write_fluid_csv(sol, cfg, out_dir / "fluid.csv")

    tasks = [
        (cfg, sol, N, rep, probe_times, str(out_dir), write)
        for N in cfg.N_list
        for rep in range(cfg.replications)
    ]
    results: dict = {}
    if jobs <= 1 or len(tasks) <= 1:
        for task in tasks:
            key, metrics = _sweep_task(task)
            results[key] = metrics
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, metrics in pool.map(_sweep_task, tasks, chunksize=1):
                results[key] = metrics

    runs = [results[(N, rep)] for N in cfg.N_list for rep in range(cfg.replications)]
    aggregates = {}
    for N in cfg.N_list:
        group = [r for r in runs if r["N"] == N]
        agg = {
            "sup_err_mean": {
                name: float(np.mean([r["sup_err"][name] for r in group])) for name in PATH_NAMES
            },
            "ks_mean": {
                which: {
                    f"{s:g}": float(np.mean([r["ks"][which][f"{s:g}"] for r in group]))
                    for s in cfg.snapshot_times
                }
                for which in ("eta", "nu")
            },
            "wait_abs_err_mean": {},
            "martingale_mean": {},
            "martingale_rms": {},
        }
        for tp in probe_times:
            errs = [r["virtual_wait"][f"{tp:g}"]["abs_err"] for r in group]
            errs = [e for e in errs if e is not None]
            agg["wait_abs_err_mean"][f"{tp:g}"] = float(np.mean(errs)) if errs else None
        for name in ("D", "S", "R"):
            vals = {f"{tp:g}": np.array([r["martingale"][name][f"{tp:g}"] for r in group]) for tp in probe_times}
            agg["martingale_mean"][name] = {k: float(v.mean()) for k, v in vals.items()}
            agg["martingale_rms"][name] = {k: float(np.sqrt(np.mean(v**2))) for k, v in vals.items()}
        aggregates[str(N)] = agg

    slopes = {}
    if len(cfg.N_list) >= 2:
        logn = np.log(np.array(cfg.N_list, dtype=float))
        for name in PATH_NAMES:
            loge = np.log([max(aggregates[str(N)]["sup_err_mean"][name], 1e-300) for N in cfg.N_list])
            slopes[name] = float(np.polyfit(logn, loge, 1)[0])

    report = ConvergenceReport(
        scenario=cfg.to_json(),
        probe_times=probe_times,
        runs=runs,
        aggregates=aggregates,
        slopes=slopes,
    )
    if write:
        (out_dir / "report.json").write_text(json.dumps(report.to_json(), indent=2) + "\n")
    return report


def _write_fluid_csv(sol: FluidSolution, cfg: ScenarioConfig, path: Path):
    sol.to_csv(path, t_max=cfg.horizon)


def _martingale_task(args):
    cfg, N, rep, probe_times = args
    sim = run_replication(cfg, N, rep)
    comps = compensators_at(sim, cfg.service, cfg.patience, probe_times)
    counts = {name: np.asarray(sim.value_at(name, np.asarray(probe_times)), dtype=float) for name in ("D", "S", "R")}
    return (N, rep), {
        name: [(counts[name][i] - comps[name][i]) / N for i in range(len(probe_times))]
        for name in ("D", "S", "R")
    }


def martingale_report(cfg: ScenarioConfig, jobs: int = 1, probe_times=None) -> list[dict]:
    """Scaled compensated-count diagnostics per system size and probe time.

    Each row reports the mean (near zero) and root-mean-square (shrinking
    in N) of (D - A_D)/N, (S - A_S)/N and (R - A_R)/N over replications.
    """
    jobs = resolve_jobs(jobs)
    probe_times = list(probe_times if probe_times is not None else cfg.snapshot_times)
    if not probe_times:
        probe_times = [cfg.horizon]
    tasks = [(cfg, N, rep, probe_times) for N in cfg.N_list for rep in range(cfg.replications)]
    results = {}
    if jobs <= 1 or len(tasks) <= 1:
        for task in tasks:
            key, val = _martingale_task(task)
            results[key] = val
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, val in pool.map(_martingale_task, tasks, chunksize=1):
                results[key] = val
    rows = []
    for N in cfg.N_list:
        per = [results[(N, rep)] for rep in range(cfg.replications)]
        for name in ("D", "S", "R"):
            for i, tp in enumerate(probe_times):
                vals = np.array([p[name][i] for p in per])
                rows.append(
                    {
                        "N": N,
                        "process": name,
                        "t": tp,
                        "mean": float(vals.mean()),
                        "rms": float(np.sqrt(np.mean(vals**2))),
                        "replications": len(per),
                    }
                )
    return rows
