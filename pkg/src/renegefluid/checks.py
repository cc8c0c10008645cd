"""Pathwise identity checks on simulation runs.

The event log carries enough state to re-verify, in exact integer
arithmetic, the conservation identities coupling the counting processes and
the measure masses, plus the quantile identities tying the queue length to
the waiting-time measure.  One boundary case needs care: when an arrival
enters service immediately, its waiting-time atom sits exactly at the
head-of-line level 0 while the queue stays empty, so the raw count
``eta[0, chi]`` exceeds Q by one there.  The entry indicator ``iota`` (the
jump of K at the event) accounts for such service entries; with it both
identities below are exact at every event time, including entries pulled
from the queue by a departure.
"""

from __future__ import annotations

import numpy as np

from .simulator import ARRIVAL, SERVICE_START, SimRun

__all__ = [
    "counter_identity_gaps",
    "verify_counter_identities",
    "queue_measure_rows",
    "verify_queue_quantile_identity",
    "verify_change_of_variables",
]


def counter_identity_gaps(sim: SimRun) -> dict[str, int]:
    """Max absolute violation of each integer conservation identity.

    All six are pure counter identities; a correct run returns all zeros.
    """
    E, K, D, R, S = sim.E, sim.K, sim.D, sim.R, sim.S
    Q, X, eta_n, nu_n = sim.Q, sim.X, sim.eta_n, sim.nu_n
    init = sim.initial
    N = sim.N

    def gap(a):
        return int(np.max(np.abs(a))) if a.size else 0

    return {
        "mass_balance_X": gap(X - (init["X"] + E - D - R)),
        "mass_balance_eta": gap((init["eta_n"] + E) - (eta_n + S)),
        "mass_balance_nu": gap((init["nu_n"] + K) - (nu_n + D)),
        "X_split": gap(X - (nu_n + Q)),
        "queue_positive_part": gap(Q - np.maximum(X - N, 0)),
        "nonidling": gap((N - nu_n) - np.maximum(N - X, 0)),
    }


def verify_counter_identities(sim: SimRun) -> None:
    gaps = counter_identity_gaps(sim)
    bad = {k: v for k, v in gaps.items() if v != 0}
    if bad:
        raise AssertionError(f"counter identities violated: {bad}")


def _alive_tracker(sim: SimRun):
    """Arrival-sorted waiting-time population with per-row alive masks.

    Yields, for each event row i, the arrays (arrive_sorted, alive_mask)
    valid right after the row's transition, plus the position of the row's
    customer in arrival order.
    """
    cust = sorted((c for c in sim.customers if c.patience > 0.0), key=lambda c: c.arrive)
    pos = {c.idx: k for k, c in enumerate(cust)}
    arrive = np.array([c.arrive for c in cust])
    alive = arrive <= 0.0  # initial members are present from time 0
    return pos, arrive, alive


def queue_measure_rows(sim: SimRun):
    """Iterate event rows with the post-transition waiting-time atom data.

    Yields (i, t, waits_ascending, Q, chi, prev_chi, iota) where
    waits_ascending are the atom locations of the waiting-time measure right
    after row i.  Rows of one atomic transition (equal timestamps from one
    physical event) repeat the same state.
    """
    from .simulator import POTENTIAL_RENEGE, RENEGE

    pos, arrive, alive = _alive_tracker(sim)
    for i in range(len(sim)):
        t = sim.times[i]
        kind = sim.kinds[i]
        if kind == ARRIVAL:
            alive[pos[int(sim.cust[i])]] = True
        elif kind in (RENEGE, POTENTIAL_RENEGE):
            alive[pos[int(sim.cust[i])]] = False
        waits = (t - arrive[alive])[::-1]  # arrival order reversed = ascending waits
        yield i, t, waits, int(sim.Q[i]), float(sim.chi[i]), float(sim.prev_chi[i]), int(sim.dK[i])


def verify_queue_quantile_identity(sim: SimRun) -> int:
    """Check Q = eta[0, chi] with the service-entry correction at arrivals.

    Returns the number of rows where the raw identity needed the correction
    (immediate service entries); raises on any true violation.
    """
    corrected = 0
    for i, t, waits, Q, chi, _prev, _iota in queue_measure_rows(sim):
        below = int(np.searchsorted(waits, chi, side="right"))
        kind = sim.kinds[i]
        entered_at_arrival = kind in (ARRIVAL, SERVICE_START) and sim.dK[i] == 1
        if below == Q:
            continue
        if entered_at_arrival and below == Q + 1:
            corrected += 1
            continue
        raise AssertionError(
            f"queue/quantile identity violated at row {i} (t={t}): eta[0,chi]={below}, Q={Q}"
        )
    return corrected


def verify_change_of_variables(sim: SimRun, patience) -> None:
    """Exact identity between the hazard sum over atoms below the left limit
    of the head-of-line level and the mass-parametrised quantile integral up
    to Q + iota, at every event row."""
    from .measures import AtomMeasure

    def h(x):
        return np.asarray(patience.pdf(x)) / np.asarray(patience.sf(x))

    for i, t, waits, Q, _chi, prev_chi, iota in queue_measure_rows(sim):
        m = AtomMeasure(waits)
        lhs = m.sum_below(h, prev_chi)
        rhs = m.h_mass_integral(h, 0.0, min(Q + iota, m.total_mass))
        if lhs != rhs:
            raise AssertionError(
                f"change-of-variables identity violated at row {i} (t={t}): {lhs!r} != {rhs!r}"
            )
