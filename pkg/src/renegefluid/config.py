"""Scenario configuration: the shared JSON schema for all entry points.

A scenario fixes the arrival, service and patience laws, the initial data,
the list of system sizes with replication counts and seeds, the horizon and
solver grid, and where outputs go.  The N-th system runs the same renewal
arrival stream with interarrival times divided by N, so its arrival process
scaled by 1/N converges to the deterministic rate 1/mean(interarrival) that
feeds the fluid solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dists import DistributionModel, parse_distribution
from .errors import ConfigError
from .fluid import FluidInputs
from .measures import InitialMeasure, parse_measure

__all__ = ["ScenarioConfig"]


@dataclass
class ScenarioConfig:
    name: str
    interarrival: DistributionModel
    service: DistributionModel
    patience: DistributionModel
    x0: float
    nu0: InitialMeasure
    eta0: InitialMeasure
    N_list: list[int]
    replications: int
    seed: int
    horizon: float
    grid_dt: float
    snapshot_times: list[float] = field(default_factory=list)
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    @property
    def arrival_rate(self) -> float:
        return 1.0 / self.interarrival.mean()

    def fluid_inputs(self) -> FluidInputs:
        return FluidInputs(
            arrival_rate=self.arrival_rate,
            x0=self.x0,
            nu0=self.nu0,
            eta0=self.eta0,
            service=self.service,
            patience=self.patience,
        )

    def validate(self):
        if self.interarrival.mass_at_infinity > 0.0:
            raise ConfigError("interarrival law cannot place mass at infinity")
        if self.service.mass_at_infinity > 0.0:
            raise ConfigError("service law cannot place mass at infinity")
        if not (self.interarrival.mean() < float("inf")):
            raise ConfigError("interarrival law must have a finite mean")
        if not self.N_list or any(int(n) <= 0 or int(n) != n for n in self.N_list):
            raise ConfigError("N_list must hold positive integers")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.horizon <= 0.0 or self.grid_dt <= 0.0:
            raise ConfigError("horizon and grid_dt must be positive")
        steps = self.horizon / self.grid_dt
        if abs(steps - round(steps)) > 1e-6:
            raise ConfigError("grid_dt must divide the horizon")
        if any(t < 0.0 or t > self.horizon + 1e-12 for t in self.snapshot_times):
            raise ConfigError("snapshot times must lie within [0, horizon]")
        # the same nonidling/queue-bound constraints the fluid inputs enforce
        self.fluid_inputs().validate()

    @classmethod
    def from_json(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a JSON object")
        known = {
            "name",
            "arrival",
            "service",
            "patience",
            "initial",
            "N_list",
            "replications",
            "seed",
            "horizon",
            "grid_dt",
            "snapshot_times",
            "output_dir",
        }
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown scenario keys {sorted(extra)}")
        try:
            arrival = data["arrival"]
            if "interarrival" not in arrival:
                raise ConfigError("arrival spec needs an 'interarrival' distribution")
            initial = data.get("initial") or {}
            return cls(
                name=str(data.get("name", "scenario")),
                interarrival=parse_distribution(arrival["interarrival"]),
                service=parse_distribution(data["service"]),
                patience=parse_distribution(data["patience"]),
                x0=float(initial.get("x0", 0.0)),
                nu0=parse_measure(initial.get("nu0")),
                eta0=parse_measure(initial.get("eta0")),
                N_list=[int(n) for n in data["N_list"]],
                replications=int(data.get("replications", 1)),
                seed=int(data.get("seed", 0)),
                horizon=float(data["horizon"]),
                grid_dt=float(data["grid_dt"]),
                snapshot_times=[float(t) for t in data.get("snapshot_times", [])],
                output_dir=str(data.get("output_dir", "out")),
            )
        except KeyError as exc:
            raise ConfigError(f"scenario is missing required key {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario value: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario file {path} is not valid JSON: {exc}") from exc
        return cls.from_json(data)

    def to_json(self) -> dict:
        initial: dict = {"x0": self.x0}
        if not self.nu0.is_empty:
            initial["nu0"] = self.nu0.to_json()
        if not self.eta0.is_empty:
            initial["eta0"] = self.eta0.to_json()
        return {
            "name": self.name,
            "arrival": {"interarrival": self.interarrival.to_json()},
            "service": self.service.to_json(),
            "patience": self.patience.to_json(),
            "initial": initial,
            "N_list": list(self.N_list),
            "replications": self.replications,
            "seed": self.seed,
            "horizon": self.horizon,
            "grid_dt": self.grid_dt,
            "snapshot_times": list(self.snapshot_times),
            "output_dir": self.output_dir,
        }

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")
