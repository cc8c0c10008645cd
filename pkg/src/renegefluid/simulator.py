"""Event-driven simulation of the N-server FCFS queue with reneging.

The state advances from jump to jump; the next jump is the earliest of the
next arrival, the earliest service completion and the earliest patience
expiry.  A patience expiry of a customer still in queue is an actual renege
(counted in R and S); the expiry of a customer already in service or
departed only leaves the potential-queue measure (counted in S alone).
Every customer therefore keeps its patience clock in the calendar from
system entry until the clock runs out, regardless of service status.

Each logged event row carries the full post-transition counter state, so the
conservation identities between E, K, D, R, S, Q, X and the measure masses
hold row by row in exact integer arithmetic.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dists import DistributionModel
from .errors import ConfigError, HorizonExceeded
from .measures import AtomMeasure, InitialMeasure

__all__ = [
    "Customer",
    "SimState",
    "SimRun",
    "RenewalArrivals",
    "ScheduleArrivals",
    "build_initial_state",
    "run",
    "virtual_wait",
    "compensator_paths",
    "CompensatorPaths",
]

ARRIVAL, SERVICE_START, DEPARTURE, RENEGE, POTENTIAL_RENEGE = range(5)
KIND_NAMES = ("arrival", "service_start", "departure", "renege", "potential_renege")


class Customer:
    """Bookkeeping record for one customer (or pre-time-0 population member)."""

    __slots__ = (
        "idx",
        "arrive",
        "patience",
        "expiry",
        "service",
        "service_start",
        "departure",
        "renege",
        "queue_entry",
        "queue_exit",
        "in_queue",
    )

    def __init__(self, idx: int, arrive: float, patience: float, service: float | None):
        self.idx = idx
        self.arrive = arrive
        self.patience = patience
        self.expiry = arrive + patience if math.isfinite(patience) else math.inf
        self.service = service
        self.service_start: float | None = None
        self.departure: float | None = None
        self.renege: float | None = None
        self.queue_entry: float | None = None
        self.queue_exit: float | None = None
        self.in_queue = False


@dataclass
class SimState:
    """Mutable simulation state at time 0, produced by build_initial_state."""

    N: int
    customers: list = field(default_factory=list)
    queue: deque = field(default_factory=deque)
    busy: int = 0
    X: int = 0
    eta_alive: int = 0
    dep_heap: list = field(default_factory=list)
    expiry_heap: list = field(default_factory=list)
    seq: int = 0

    def push_departure(self, c: Customer):
        self.seq += 1
        heapq.heappush(self.dep_heap, (c.departure, self.seq, c))

    def push_expiry(self, c: Customer):
        if math.isfinite(c.expiry):
            self.seq += 1
            heapq.heappush(self.expiry_heap, (c.expiry, self.seq, c))

    def live_head(self) -> Customer | None:
        q = self.queue
        while q and q[0].renege is not None:
            q.popleft()
        return q[0] if q else None


class RenewalArrivals:
    """Renewal arrival stream; interarrival samples are divided by scale.

    With scale = N the N-server system sees N-fold accelerated arrivals, so
    the arrival process scaled by 1/N converges to rate 1/mean(interarrival).
    """

    def __init__(self, interarrival: DistributionModel, scale: int = 1):
        if interarrival.mass_at_infinity > 0.0:
            raise ConfigError("interarrival law cannot have mass at infinity")
        self.interarrival = interarrival
        self.scale = int(scale)

    def events(self, rng, service: DistributionModel, patience: DistributionModel):
        t = 0.0
        while True:
            t = t + self.interarrival.sample(rng) / self.scale
            yield t, service.sample(rng), patience.sample(rng)


class ScheduleArrivals:
    """Explicit arrival times, optionally with scripted service/patience values."""

    def __init__(self, times, services=None, patiences=None):
        self.times = [float(t) for t in times]
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("scheduled arrival times must be nondecreasing")
        self.services = list(services) if services is not None else None
        self.patiences = list(patiences) if patiences is not None else None

    def events(self, rng, service: DistributionModel, patience: DistributionModel):
        for i, t in enumerate(self.times):
            v = self.services[i] if self.services is not None else service.sample(rng)
            r = self.patiences[i] if self.patiences is not None else patience.sample(rng)
            yield t, float(v), float(r)


class SimRun:
    """Event log and state paths of one realization.

    Row arrays are aligned: row i describes the state right after the i-th
    logged transition.  ``prev_chi`` holds the left limit of the head-of-line
    waiting time at the row's timestamp and ``dK`` the jump of K there; both
    feed the pathwise identity checks.
    """

    def __init__(self, N, horizon, initial, rows, customers, snapshots, seed=None):
        self.N = N
        self.horizon = horizon
        self.initial = initial
        self.customers = customers
        self.snapshots = snapshots
        self.seed = seed
        self.times = np.array(rows["time"], dtype=float)
        self.kinds = np.array(rows["kind"], dtype=np.int8)
        self.cust = np.array(rows["cust"], dtype=np.int64)
        for name in ("E", "K", "D", "R", "S", "Q", "X", "eta_n", "nu_n", "dK"):
            setattr(self, name, np.array(rows[name], dtype=np.int64))
        self.chi = np.array(rows["chi"], dtype=float)
        self.prev_chi = np.array(rows["prev_chi"], dtype=float)

    def __len__(self):
        return self.times.size

    def value_at(self, name: str, t) -> np.ndarray:
        """Right-continuous step value of a counter path at times t."""
        arr = getattr(self, name)
        init = self.initial[name]
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        padded = np.concatenate(([init], arr))
        out = padded[idx + 1]
        return out if out.ndim else out[()]

    def chi_value(self, t: float) -> float:
        """Head-of-line waiting time at t; grows at unit rate between events."""
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        if idx < 0:
            q0, chi0, t0 = self.initial["Q"], self.initial["chi"], 0.0
        else:
            q0, chi0, t0 = self.Q[idx], self.chi[idx], self.times[idx]
        return chi0 + (t - t0) if q0 > 0 else 0.0

    def eta_measure(self, t: float) -> AtomMeasure:
        """Waiting-time measure at time t: atoms at time-in-system of every
        customer whose elapsed time has not reached its patience."""
        locs = [
            t - c.arrive
            for c in self.customers
            if c.arrive <= t and t - c.arrive < c.patience
        ]
        return AtomMeasure(np.array(locs)) if locs else AtomMeasure.empty()

    def nu_measure(self, t: float) -> AtomMeasure:
        """Age-in-service measure at time t."""
        locs = [
            t - c.service_start
            for c in self.customers
            if c.service_start is not None
            and c.service_start <= t
            and (c.departure is None or c.departure > t)
        ]
        return AtomMeasure(np.array(locs)) if locs else AtomMeasure.empty()

    def to_csv(self, path):
        """Event log with the counter columns, one row per transition."""
        with open(path, "w") as fh:
            fh.write(f"# renegefluid events N={self.N} seed={self.seed}\n")
            fh.write("time,kind,customer,E,K,D,R,S,Q,X,chi\n")
            for i in range(len(self)):
                fh.write(
                    f"{float(self.times[i])!r},{KIND_NAMES[self.kinds[i]]},{self.cust[i]},"
                    f"{self.E[i]},{self.K[i]},{self.D[i]},{self.R[i]},{self.S[i]},"
                    f"{self.Q[i]},{self.X[i]},{float(self.chi[i])!r}\n"
                )


def _as_initial(measure) -> InitialMeasure:
    if measure is None:
        return InitialMeasure()
    if isinstance(measure, InitialMeasure):
        return measure
    if isinstance(measure, AtomMeasure):
        return InitialMeasure(atoms=measure)
    return InitialMeasure(density=measure)


def build_initial_state(
    N: int,
    x0_frac: float,
    nu0,
    eta0,
    service: DistributionModel,
    patience: DistributionModel,
    rng: np.random.Generator,
) -> SimState:
    """Realize an initial population compatible with the scaled data.

    round(N * nu0-mass) customers are placed in service with ages drawn from
    the normalized age measure and residual services conditioned on those
    ages.  round(N * eta0-mass) customers carry waiting-time clocks drawn
    from the normalized waiting measure with residual patience; the
    Q(0) = [X(0) - N]+ smallest waits among them form the FCFS queue (under
    FCFS the longer-waiting members of that population are exactly the ones
    already in service or departed), the rest carry patience clocks only.
    """
    if N <= 0:
        raise ConfigError("N must be a positive integer")
    nu0 = _as_initial(nu0)
    eta0 = _as_initial(eta0)
    x0 = float(x0_frac)
    if x0 < 0.0:
        raise ConfigError("initial fraction in system must be nonnegative")
    mass_nu = nu0.total_mass
    gap = abs((1.0 - mass_nu) - max(1.0 - x0, 0.0))
    if gap > 1.0 / N + 1e-9:
        raise ConfigError(
            f"initial data violates the nonidling constraint: 1 - <1,nu0> = {1.0 - mass_nu:.6g} "
            f"but [1 - x0]+ = {max(1.0 - x0, 0.0):.6g}"
        )
    total = int(round(N * x0))
    n_serv = min(total, N)
    if abs(n_serv - N * mass_nu) > 1.0 + 1e-6:
        raise ConfigError("rounded service population is inconsistent with the age-measure mass")
    n_queue = total - n_serv
    n_eta = int(round(N * eta0.total_mass))
    if n_queue > n_eta:
        raise ConfigError(
            f"initial queue of {n_queue} exceeds the waiting-time population {n_eta}"
        )

    state = SimState(N=N)
    state.X = total
    state.busy = n_serv
    state.eta_alive = n_eta

    records: list[Customer] = []
    if n_eta:
        waits = eta0.sample(n_eta, rng)
        residuals = np.array([patience.sample_residual(w, rng) for w in waits])
        order = np.argsort(waits, kind="stable")
        for rank, i in enumerate(order):
            w0 = float(waits[i])
            r = w0 + float(residuals[i]) if math.isfinite(residuals[i]) else math.inf
            # queue members have not begun service, so they carry a fresh
            # service requirement for when they reach a server
            v = service.sample(rng) if rank < n_queue else None
            c = Customer(idx=0, arrive=-w0, patience=r, service=v)
            if rank < n_queue:
                c.in_queue = True
                c.queue_entry = 0.0
            records.append(c)
    if n_serv:
        ages = nu0.sample(n_serv, rng)
        for a in ages:
            a = float(a)
            resid = service.sample_residual(a, rng)
            c = Customer(idx=0, arrive=-a, patience=0.0, service=a + resid)
            c.service_start = -a
            c.departure = resid
            records.append(c)

    records.sort(key=lambda c: c.arrive)
    for pos, c in enumerate(records):
        c.idx = -(len(records) - 1 - pos)
        state.customers.append(c)
        if c.in_queue:
            pass
        if c.service_start is not None:
            state.push_departure(c)
        elif c.patience > 0.0:
            state.push_expiry(c)
    for c in sorted((c for c in records if c.in_queue), key=lambda c: c.arrive):
        c.queue_exit = None
        state.queue.append(c)
    return state


def run(
    state: SimState,
    arrivals,
    horizon: float,
    snapshot_times=(),
    rng: np.random.Generator | None = None,
    service: DistributionModel | None = None,
    patience: DistributionModel | None = None,
    seed=None,
) -> SimRun:
    """Advance the state from jump to jump up to the horizon.

    Ties at equal timestamps are processed departures first, then patience
    expiries, then arrivals; a departure that pulls the head of the line
    into service and an arrival that enters service immediately are logged
    as one atomic transition (two rows with identical counters).
    """
    if horizon <= 0.0:
        raise ConfigError("horizon must be positive")
    snaps = sorted(float(s) for s in snapshot_times)
    if snaps and (snaps[0] < 0.0 or snaps[-1] > horizon + 1e-12):
        raise ConfigError("snapshot times must lie within [0, horizon]")

    rows = {
        k: []
        for k in ("time", "kind", "cust", "E", "K", "D", "R", "S", "Q", "X", "eta_n", "nu_n", "chi", "prev_chi", "dK")
    }
    E = K = D = R = S = 0
    N = state.N
    customers = state.customers
    queue = state.queue
    dep_heap, expiry_heap = state.dep_heap, state.expiry_heap
    busy, X, eta_alive = state.busy, state.X, state.eta_alive
    initial = {
        "E": 0,
        "K": 0,
        "D": 0,
        "R": 0,
        "S": 0,
        "Q": X - busy,
        "X": X,
        "eta_n": eta_alive,
        "nu_n": busy,
    }
    head0 = state.live_head()
    initial["chi"] = -head0.arrive if head0 is not None else 0.0

    arr_iter = arrivals.events(rng, service, patience) if hasattr(arrivals, "events") else iter(arrivals)
    pending = next(arr_iter, None)
    next_idx = 1

    def chi_at(t: float) -> float:
        head = state.live_head()
        return t - head.arrive if head is not None else 0.0

    def log(t, kind, cust_idx, prev_chi, dK):
        rows["time"].append(t)
        rows["kind"].append(kind)
        rows["cust"].append(cust_idx)
        rows["E"].append(E)
        rows["K"].append(K)
        rows["D"].append(D)
        rows["R"].append(R)
        rows["S"].append(S)
        rows["Q"].append(X - busy)
        rows["X"].append(X)
        rows["eta_n"].append(eta_alive)
        rows["nu_n"].append(busy)
        rows["chi"].append(chi_at(t))
        rows["prev_chi"].append(prev_chi)
        rows["dK"].append(dK)

    while True:
        t_dep = dep_heap[0][0] if dep_heap else math.inf
        t_exp = expiry_heap[0][0] if expiry_heap else math.inf
        t_arr = pending[0] if pending is not None else math.inf
        t_next = min(t_dep, t_exp, t_arr)
        if t_next > horizon or t_next == math.inf:
            break
        prev_chi = chi_at(t_next)

        if t_dep <= t_exp and t_dep <= t_arr:
            _, _, c = heapq.heappop(dep_heap)
            D += 1
            X -= 1
            busy -= 1
            head = state.live_head()
            dK = 0
            if head is not None:
                queue.popleft()
                head.in_queue = False
                head.queue_exit = t_next
                head.service_start = t_next
                head.departure = t_next + head.service
                state.push_departure(head)
                K += 1
                busy += 1
                dK = 1
            log(t_next, DEPARTURE, c.idx, prev_chi, dK)
            if dK:
                log(t_next, SERVICE_START, head.idx, prev_chi, dK)
        elif t_exp <= t_arr:
            _, _, c = heapq.heappop(expiry_heap)
            S += 1
            eta_alive -= 1
            if c.in_queue:
                c.in_queue = False
                c.renege = t_next
                c.queue_exit = t_next
                R += 1
                X -= 1
                log(t_next, RENEGE, c.idx, prev_chi, 0)
            else:
                log(t_next, POTENTIAL_RENEGE, c.idx, prev_chi, 0)
        else:
            t, v, r = pending
            pending = next(arr_iter, None)
            c = Customer(idx=next_idx, arrive=t, patience=r, service=v)
            next_idx += 1
            customers.append(c)
            E += 1
            X += 1
            eta_alive += 1
            state.push_expiry(c)
            if busy < N:
                c.service_start = t
                c.departure = t + v
                state.push_departure(c)
                K += 1
                busy += 1
                log(t, ARRIVAL, c.idx, prev_chi, 1)
                log(t, SERVICE_START, c.idx, prev_chi, 1)
            else:
                c.in_queue = True
                c.queue_entry = t
                queue.append(c)
                log(t, ARRIVAL, c.idx, prev_chi, 0)

    run_obj = SimRun(
        N=N,
        horizon=horizon,
        initial=initial,
        rows=rows,
        customers=customers,
        snapshots={},
        seed=seed,
    )
    measured = {}
    for s in snaps:
        measured[s] = {
            "eta": run_obj.eta_measure(s),
            "nu": run_obj.nu_measure(s),
            "Q": int(run_obj.value_at("Q", s)),
            "X": int(run_obj.value_at("X", s)),
            "chi": run_obj.chi_value(s),
        }
    run_obj.snapshots = measured
    return run_obj


def virtual_wait(sim: SimRun, t: float) -> float:
    """Delay an infinitely patient arrival at t would see before service.

    Counts, after t, departures of anyone plus queue reneges of customers
    who arrived by t, and returns the first elapsed time at which that count
    strictly exceeds the queue length at t.  A queue-empty state with an
    idle server admits the virtual customer immediately.
    """
    if t < 0.0 or t > sim.horizon:
        raise HorizonExceeded(f"probe time {t} outside the simulated horizon")
    Q_t = int(sim.value_at("Q", t))
    busy_t = int(sim.value_at("nu_n", t))
    if Q_t == 0 and busy_t < sim.N:
        return 0.0
    idx = np.nonzero(sim.times > t)[0]
    count = 0
    for i in idx:
        kind = sim.kinds[i]
        if kind == DEPARTURE:
            count += 1
        elif kind == RENEGE:
            c = _customer_by_idx(sim, int(sim.cust[i]))
            if c.arrive <= t:
                count += 1
        if count > Q_t:
            return float(sim.times[i] - t)
    raise HorizonExceeded(f"virtual waiting time at t={t} not resolved by the horizon")


def _customer_by_idx(sim: SimRun, idx: int) -> Customer:
    table = getattr(sim, "_cust_table", None)
    if table is None:
        table = {c.idx: c for c in sim.customers}
        sim._cust_table = table
    return table[idx]


@dataclass
class CompensatorPaths:
    """Compensators of D, S and R on an output grid, with the counting paths."""

    times: np.ndarray
    A_D: np.ndarray
    A_S: np.ndarray
    A_R: np.ndarray
    D: np.ndarray
    S: np.ndarray
    R: np.ndarray


def _segment_integral(law: DistributionModel, anchors, starts, ends, ts) -> np.ndarray:
    """sum over segments of the hazard integral along age s - anchor.

    Each segment contributes Lambda(min(t, end) - anchor) -
    Lambda(start - anchor) where Lambda is the law's integrated hazard, the
    exact log-survivor difference.
    """
    anchors = np.asarray(anchors, dtype=float)
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    out = np.zeros(len(ts))
    if anchors.size == 0:
        return out
    base = law.integrated_hazard(starts - anchors)
    for i, t in enumerate(ts):
        hi = np.clip(t, starts, ends)
        out[i] = float(np.sum(law.integrated_hazard(hi - anchors) - base))
    return out


def collect_segments(sim: SimRun) -> dict[str, tuple]:
    """Unit-rate age segments of each tracked population.

    ``service``: in-service ages from entry to departure; ``eta``: times in
    system until the patience clock fires; ``queue``: actual in-queue spans.
    Each is (anchors, starts, ends) clipped to [0, horizon].
    """
    T = sim.horizon
    srv_anchor, srv_start, srv_end = [], [], []
    eta_anchor, eta_start, eta_end = [], [], []
    q_anchor, q_start, q_end = [], [], []
    for c in sim.customers:
        if c.service_start is not None:
            end = c.departure if c.departure is not None else T
            srv_anchor.append(c.service_start)
            srv_start.append(max(c.service_start, 0.0))
            srv_end.append(min(end, T))
        if c.patience > 0.0:
            end = c.expiry if math.isfinite(c.expiry) else T
            eta_anchor.append(c.arrive)
            eta_start.append(max(c.arrive, 0.0))
            eta_end.append(min(end, T))
        if c.queue_entry is not None:
            end = c.queue_exit if c.queue_exit is not None else T
            q_anchor.append(c.arrive)
            q_start.append(max(c.queue_entry, 0.0))
            q_end.append(min(end, T))
    return {
        "service": (srv_anchor, srv_start, srv_end),
        "eta": (eta_anchor, eta_start, eta_end),
        "queue": (q_anchor, q_start, q_end),
    }


def compensators_at(
    sim: SimRun,
    service: DistributionModel,
    patience: DistributionModel,
    times,
) -> dict[str, np.ndarray]:
    """Compensator values of the D, S and R counts at the given times."""
    ts = np.asarray(times, dtype=float)
    segs = collect_segments(sim)
    return {
        "D": _segment_integral(service, *segs["service"], ts),
        "S": _segment_integral(patience, *segs["eta"], ts),
        "R": _segment_integral(patience, *segs["queue"], ts),
    }


def compensator_paths(
    sim: SimRun,
    service: DistributionModel,
    patience: DistributionModel,
    quad_dt: float,
) -> CompensatorPaths:
    """Compensators of the departure, potential-reneging and reneging counts.

    Between jumps every tracked age or waiting time advances at unit rate,
    so each customer's contribution over a segment is an exact log-survivor
    difference; quad_dt only sets the output grid resolution.
    """
    if quad_dt <= 0.0:
        raise ConfigError("quad_dt must be positive")
    T = sim.horizon
    n = int(math.floor(T / quad_dt + 1e-9))
    ts = np.arange(n + 1) * quad_dt
    if ts[-1] < T - 1e-12:
        ts = np.append(ts, T)
    comps = compensators_at(sim, service, patience, ts)
    return CompensatorPaths(
        times=ts,
        A_D=comps["D"],
        A_S=comps["S"],
        A_R=comps["R"],
        D=np.asarray(sim.value_at("D", ts), dtype=float),
        S=np.asarray(sim.value_at("S", ts), dtype=float),
        R=np.asarray(sim.value_at("R", ts), dtype=float),
    )
