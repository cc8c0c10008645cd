"""Many-server FCFS queues with reneging: exact simulation, the fluid
(law-of-large-numbers) model, and the convergence harness tying them
together."""

from .config import ScenarioConfig
from .dists import (
    DistributionModel,
    Exponential,
    Hyperexponential,
    Lognormal,
    Pareto,
    Uniform,
    Weibull,
    parse_distribution,
)
from .errors import (
    ConfigError,
    DomainError,
    HorizonExceeded,
    MassExceeded,
    NoConvergence,
    RenegeFluidError,
)
from .fluid import (
    FluidInputs,
    FluidSolution,
    eta_bar,
    fluid_virtual_wait,
    kbar_renewal_check,
    nu_bar,
    reneging_rate,
    shift_consistency,
    solve,
)
from .harness import ConvergenceReport, martingale_report, run_replication, run_sweep
from .measures import (
    AtomMeasure,
    FluidMeasure,
    InitialMeasure,
    PiecewiseDensity,
    ks_distance,
    parse_measure,
)
from .simulator import (
    RenewalArrivals,
    ScheduleArrivals,
    SimRun,
    SimState,
    build_initial_state,
    compensator_paths,
    run,
    virtual_wait,
)

__version__ = "0.1.0"
