"""Deterministic fluid model of the many-server queue with reneging.

The solver time-marches the coupled system on a uniform grid.  The
waiting-time measure is available in closed form from the arrival rate and
the initial data, so each step only has to find the service-entry increment:
a short fixed-point iteration jointly updates the reneging rate (a hazard
integral over the queued mass), the entry process K via the queue
conservation law, the age measure mass and departure rate fed by K, and the
total mass in system.  All measure integrals use density forms (input rate
times survivor, hazard times survivor collapsed to the density), so hazard
blowups at the right end of a support never appear in the arithmetic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .dists import DistributionModel
from .errors import ConfigError, HorizonExceeded, MassExceeded, NoConvergence
from .measures import FluidMeasure, InitialMeasure, _Blocks

__all__ = [
    "FluidInputs",
    "FluidSolution",
    "eta_bar",
    "nu_bar",
    "reneging_rate",
    "solve",
    "kbar_renewal_check",
    "shift_consistency",
    "fluid_virtual_wait",
]


@dataclass
class FluidInputs:
    """Input data of the fluid model.

    ``arrival_rate`` is the density of the cumulative arrival function: a
    constant, a vectorised callable of time, or an array on the solve grid.
    Initial data must satisfy the nonidling constraint
    ``1 - <1, nu0> = [1 - x0]+`` and the queue bound ``[x0 - 1]+ <= <1, eta0>``.
    """

    arrival_rate: object
    x0: float
    nu0: InitialMeasure
    eta0: InitialMeasure
    service: DistributionModel
    patience: DistributionModel

    def __post_init__(self):
        if not isinstance(self.nu0, InitialMeasure):
            self.nu0 = InitialMeasure(atoms=self.nu0) if self.nu0 is not None else InitialMeasure()
        if not isinstance(self.eta0, InitialMeasure):
            self.eta0 = InitialMeasure(atoms=self.eta0) if self.eta0 is not None else InitialMeasure()
        self.x0 = float(self.x0)

    def rate_on(self, t_grid: np.ndarray) -> np.ndarray:
        lam = self.arrival_rate
        if callable(lam):
            values = np.asarray(lam(t_grid), dtype=float)
            if values.shape != t_grid.shape:
                values = np.broadcast_to(values, t_grid.shape).astype(float)
        elif np.ndim(lam) == 0:
            values = np.full_like(t_grid, float(lam))
        else:
            values = np.asarray(lam, dtype=float)
            if values.shape != t_grid.shape:
                raise ConfigError("arrival rate array does not match the solve grid")
        if np.any(~np.isfinite(values)) or np.any(values < 0.0):
            raise ConfigError("arrival rate must be finite and nonnegative on the grid")
        return values

    def rate_at(self, t):
        lam = self.arrival_rate
        if callable(lam):
            return np.asarray(lam(np.asarray(t, dtype=float)), dtype=float)
        if np.ndim(lam) == 0:
            return np.full(np.shape(t), float(lam)) if np.ndim(t) else float(lam)
        raise ConfigError("grid-array arrival rates cannot be evaluated off the grid")

    @property
    def constant_rate(self) -> float | None:
        lam = self.arrival_rate
        return float(lam) if np.ndim(lam) == 0 and not callable(lam) else None

    def validate(self, tol: float = 1e-6):
        mass_nu = self.nu0.total_mass
        if mass_nu > 1.0 + tol:
            raise ConfigError(f"initial age measure mass {mass_nu} exceeds 1")
        if abs((1.0 - mass_nu) - max(1.0 - self.x0, 0.0)) > tol:
            raise ConfigError(
                f"initial data violates nonidling: 1 - <1,nu0> = {1.0 - mass_nu:.6g}, "
                f"[1 - x0]+ = {max(1.0 - self.x0, 0.0):.6g}"
            )
        q0 = max(self.x0 - 1.0, 0.0)
        if q0 > self.eta0.total_mass + tol:
            raise ConfigError(
                f"initial queue {q0:.6g} exceeds the waiting-time measure mass {self.eta0.total_mass:.6g}"
            )


def eta_bar(inputs: FluidInputs, t: float, dt: float) -> FluidMeasure:
    """Waiting-time measure at time t, decoupled from service dynamics."""
    n = max(int(round(t / dt)), 0)
    if abs(n * dt - t) > 1e-9 * max(1.0, t):
        raise ConfigError("t must be a multiple of the grid step")
    grid = np.arange(n + 1) * dt
    lam = inputs.rate_on(grid)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (lam[1:] + lam[:-1]) * dt))) if n else None
    if n == 0:
        return FluidMeasure(inputs.patience, 0.0, initial=inputs.eta0)
    return FluidMeasure(inputs.patience, t, initial=inputs.eta0, boundary_times=grid, boundary_cum=cum)


def nu_bar(inputs: FluidInputs, entry_times, entry_cum, t: float) -> FluidMeasure:
    """Age measure at time t driven by a nondecreasing entry process."""
    entry_times = np.asarray(entry_times, dtype=float)
    entry_cum = np.asarray(entry_cum, dtype=float)
    if t <= 0.0 or entry_times.size < 2:
        return FluidMeasure(inputs.service, max(t, 0.0), initial=inputs.nu0)
    k = int(np.searchsorted(entry_times, t + 1e-12, side="right")) - 1
    return FluidMeasure(
        inputs.service,
        t,
        initial=inputs.nu0,
        boundary_times=entry_times[: k + 1],
        boundary_cum=entry_cum[: k + 1],
    )


def reneging_rate(eta_measure: FluidMeasure, queue_mass: float) -> float:
    """Hazard integral over the queued mass: int_0^Q h((F^eta)^{-1}(y)) dy."""
    return eta_measure.hazard_mass_integral(0.0, queue_mass)


def _transported_grid(initial: InitialMeasure, dist: DistributionModel, t_grid: np.ndarray):
    """Total mass and hazard pairing of the transported initial measure on a
    time grid, as (mass_k, hazard_k); both use the same per-piece rules as
    the lazy measure blocks so the two views agree."""
    M = t_grid.size
    mass = np.zeros(M)
    haz = np.zeros(M)
    if initial.is_empty:
        return mass, haz

    def accumulate(loc, w, d0=None, width=None):
        sf0 = np.asarray(dist.sf(loc))
        for i0 in range(0, loc.size, 256):
            sl = slice(i0, min(i0 + 256, loc.size))
            shifted = t_grid[:, None] + loc[None, sl]
            sf_shift = np.asarray(dist.sf(shifted))
            pdf_shift = np.asarray(dist.pdf(shifted))
            mass[:] += (w[None, sl] * sf_shift / sf0[None, sl]).sum(axis=1)
            haz[:] += (w[None, sl] * pdf_shift / sf_shift.clip(1e-300) * (sf_shift / sf0[None, sl])).sum(axis=1)

    if initial.atoms is not None:
        accumulate(initial.atoms.locations, initial.atoms.weights)
    if initial.density is not None:
        lo, hi, m = initial.density.cells()
        accumulate(0.5 * (lo + hi), m)
    return mass, haz


@dataclass
class FluidSolution:
    """Grid paths of the fluid model plus lazy measure evaluators."""

    inputs: FluidInputs
    dt: float
    horizon: float
    t: np.ndarray
    X: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    R: np.ndarray
    S: np.ndarray
    E: np.ndarray
    dep_rate: np.ndarray
    ren_rate: np.ndarray
    chi: np.ndarray
    eta_mass: np.ndarray
    nu_mass: np.ndarray
    eta_haz: np.ndarray
    nu0_mass: np.ndarray = field(repr=False, default=None)
    picard_iterations: int = 0

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if not 0 <= k < self.t.size or abs(self.t[k] - t) > 1e-9 * max(1.0, t):
            raise ConfigError(f"time {t} is not on the solution grid")
        return k

    def interp(self, name: str, t):
        return np.interp(t, self.t, getattr(self, name))

    def eta_measure(self, t: float) -> FluidMeasure:
        k = self.index_of(t)
        if k == 0:
            return FluidMeasure(self.inputs.patience, 0.0, initial=self.inputs.eta0)
        return FluidMeasure(
            self.inputs.patience,
            self.t[k],
            initial=self.inputs.eta0,
            boundary_times=self.t[: k + 1],
            boundary_cum=self.E[: k + 1],
        )

    def nu_measure(self, t: float) -> FluidMeasure:
        k = self.index_of(t)
        if k == 0:
            return FluidMeasure(self.inputs.service, 0.0, initial=self.inputs.nu0)
        return FluidMeasure(
            self.inputs.service,
            self.t[k],
            initial=self.inputs.nu0,
            boundary_times=self.t[: k + 1],
            boundary_cum=self.K[: k + 1],
        )

    def to_csv(self, path, t_max: float | None = None):
        limit = self.t.size if t_max is None else int(np.searchsorted(self.t, t_max + 1e-12, side="right"))
        with open(path, "w") as fh:
            fh.write("t,X,Q,K,R,S,dep_rate,ren_rate\n")
            for i in range(limit):
                row = (self.t[i], self.X[i], self.Q[i], self.K[i], self.R[i], self.S[i], self.dep_rate[i], self.ren_rate[i])
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def solve(
    inputs: FluidInputs,
    horizon: float,
    dt: float,
    picard_init: str = "arrival",
    picard_tol: float = 1e-10,
    picard_max: int = 50,
) -> FluidSolution:
    """March the fluid system over [0, horizon] with grid step dt.

    Within each step a fixed-point iteration (at most ``picard_max`` rounds,
    tolerance ``picard_tol`` on the entry increment) reconciles the reneging
    rate, the entry process, the departure rate and the mass in system.
    ``picard_init`` chooses the initial guess of the entry increment:
    "arrival" (the arrival increment), "zero", or "previous".
    """
    if picard_init not in ("arrival", "zero", "previous"):
        raise ConfigError(f"unknown picard_init {picard_init!r}")
    inputs.validate()
    if dt <= 0.0 or horizon <= 0.0:
        raise ConfigError("horizon and dt must be positive")
    M = int(round(horizon / dt))
    if M < 1 or abs(M * dt - horizon) > 1e-9 * horizon:
        raise ConfigError("dt must divide the horizon")

    t_grid = np.arange(M + 1) * dt
    lam = inputs.rate_on(t_grid)
    dE = 0.5 * (lam[1:] + lam[:-1]) * dt
    E = np.concatenate(([0.0], np.cumsum(dE)))

    patience, service = inputs.patience, inputs.service
    Gr = np.asarray(patience.cdf(t_grid))
    Gs = np.asarray(service.cdf(t_grid))
    dGr, dGs = np.diff(Gr), np.diff(Gs)
    half = (np.arange(M) + 0.5) * dt
    Sr_half = np.asarray(patience.sf(half))
    Ss_half = np.asarray(service.sf(half))

    eta0_mass, eta0_haz = _transported_grid(inputs.eta0, patience, t_grid)
    nu0_mass, nu0_haz = _transported_grid(inputs.nu0, service, t_grid)

    X = np.zeros(M + 1)
    Q = np.zeros(M + 1)
    K = np.zeros(M + 1)
    R = np.zeros(M + 1)
    S = np.zeros(M + 1)
    dep = np.zeros(M + 1)
    ren = np.zeros(M + 1)
    chi = np.zeros(M + 1)
    eta_mass = np.zeros(M + 1)
    nu_mass = np.zeros(M + 1)
    eta_haz = np.zeros(M + 1)
    dK = np.zeros(M)

    X[0] = inputs.x0
    Q0 = max(inputs.x0 - 1.0, 0.0)
    Q[0] = Q0
    eta_mass[0] = eta0_mass[0]
    nu_mass[0] = nu0_mass[0]
    eta_haz[0] = eta0_haz[0]
    dep[0] = nu0_haz[0]
    blocks0 = _Blocks.from_parts(patience, 0.0, initial=inputs.eta0)
    try:
        ren[0] = blocks0.hazard_mass_integral(0.0, Q0)
    except MassExceeded as exc:
        raise ConfigError(str(exc)) from exc
    chi[0] = blocks0.quantile(min(Q0, blocks0.total_mass))

    total_picard = 0
    for n in range(1, M + 1):
        k = n - 1
        e_rev = dE[:n][::-1]
        b_mass = e_rev * Sr_half[:n]
        b_cum = np.cumsum(b_mass)
        b_haz = e_rev * dGr[:n] / dt
        b_hazcum = np.cumsum(b_haz)
        bnd_mass = b_cum[-1]
        eta_mass[n] = bnd_mass + eta0_mass[n]
        eta_haz[n] = b_hazcum[-1] + eta0_haz[n]
        S[n] = S[k] + 0.5 * dt * (eta_haz[k] + eta_haz[n])

        trans_cache: list = [None]

        def trans_blocks():
            if trans_cache[0] is None:
                trans_cache[0] = _Blocks.from_parts(patience, n * dt, initial=inputs.eta0)
            return trans_cache[0]

        def ren_and_chi(q, want_chi=False):
            if q <= 0.0:
                return 0.0, 0.0
            if q > eta_mass[n] + 1e-9 * max(1.0, eta_mass[n]):
                raise MassExceeded(
                    f"queue mass {q} exceeds waiting measure mass {eta_mass[n]} at t={n * dt}"
                )
            if q <= bnd_mass:
                i = int(np.searchsorted(b_cum, q, side="left"))
                before = b_cum[i] - b_mass[i]
                full = b_hazcum[i - 1] if i > 0 else 0.0
                if b_mass[i] <= 0.0:
                    return full + b_haz[i], i * dt
                f = min(max((q - before) / b_mass[i], 0.0), 1.0)
                age = (i + f) * dt
                partial = (e_rev[i] / dt) * (float(patience.cdf(age)) - Gr[i])
                return full + partial, age
            rem = min(q - bnd_mass, trans_blocks().total_mass)
            value = (b_hazcum[-1] if n else 0.0) + trans_blocks().hazard_mass_integral(0.0, rem)
            x = trans_blocks().quantile(rem) if want_chi else 0.0
            return value, x

        if n == 1:
            dep_frozen = nu0_haz[n]
            nu_frozen = nu0_mass[n]
        else:
            k_rev = dK[: n - 1][::-1]
            dep_frozen = float(np.dot(k_rev, dGs[1:n])) / dt + nu0_haz[n]
            nu_frozen = float(np.dot(k_rev, Ss_half[1:n])) + nu0_mass[n]

        if picard_init == "arrival":
            dk_g = dE[k]
        elif picard_init == "zero":
            dk_g = 0.0
        else:
            dk_g = dK[k - 1] if k > 0 else dE[k]
        ren_g = ren[k]

        converged = False
        for _ in range(picard_max):
            total_picard += 1
            dep_n = dep_frozen + dk_g * dGs[0] / dt
            X_n = X[k] + dE[k] - 0.5 * dt * (dep[k] + dep_n) - 0.5 * dt * (ren[k] + ren_g)
            Q_n = max(X_n - 1.0, 0.0)
            ren_new, _ = ren_and_chi(Q_n)
            R_n = R[k] + 0.5 * dt * (ren[k] + ren_new)
            K_n = max(Q0 - Q_n + E[n] - R_n, K[k])
            dk_new = K_n - K[k]
            if abs(dk_new - dk_g) <= picard_tol and abs(ren_new - ren_g) <= max(picard_tol, 1e-10):
                dk_g, ren_g = dk_new, ren_new
                converged = True
                break
            dk_g, ren_g = dk_new, ren_new
        if not converged:
            raise NoConvergence(f"fixed point did not converge at step {n} (t={n * dt:.6g})")

        dK[k] = dk_g
        K[n] = K[k] + dk_g
        dep[n] = dep_frozen + dk_g * dGs[0] / dt
        X[n] = X[k] + dE[k] - 0.5 * dt * (dep[k] + dep[n]) - 0.5 * dt * (ren[k] + ren_g)
        Q[n] = max(X[n] - 1.0, 0.0)
        ren[n], chi[n] = ren_and_chi(Q[n], want_chi=True)
        R[n] = R[k] + 0.5 * dt * (ren[k] + ren[n])
        nu_mass[n] = nu_frozen + dk_g * Ss_half[0]

    return FluidSolution(
        inputs=inputs,
        dt=dt,
        horizon=horizon,
        t=t_grid,
        X=X,
        Q=Q,
        K=K,
        R=R,
        S=S,
        E=E,
        dep_rate=dep,
        ren_rate=ren,
        chi=chi,
        eta_mass=eta_mass,
        nu_mass=nu_mass,
        eta_haz=eta_haz,
        nu0_mass=nu0_mass,
        picard_iterations=total_picard,
    )


def kbar_renewal_check(sol: FluidSolution) -> float:
    """Residual of the renewal form of the entry process.

    K should equal the served-mass turnover plus the convolution of the
    service density with K itself; returns the sup-norm residual on the
    grid (convolution by trapezoid).
    """
    dt = sol.dt
    g = np.asarray(sol.inputs.service.pdf(sol.t))
    conv = fftconvolve(g, sol.K)[: sol.t.size] * dt
    conv -= 0.5 * dt * (g * sol.K[0] + g[0] * sol.K)
    rhs = sol.nu_mass - sol.nu0_mass + conv
    return float(np.max(np.abs(sol.K - rhs)))


def shift_consistency(sol: FluidSolution, t: float, picard_init: str = "arrival") -> float:
    """Re-solve from the state at time t and compare with the tail of sol.

    The measures at t are frozen onto grid cells, the arrival input is
    shifted, and the discrepancy is the sup over the tail grid of the
    differences in X, Q and the shifted increments of K and R.
    """
    kt = sol.index_of(t)
    if kt == sol.t.size - 1:
        return 0.0
    eta_t = sol.eta_measure(t).materialize(sol.dt)
    nu_t = sol.nu_measure(t).materialize(sol.dt)
    base = sol.inputs
    if base.constant_rate is not None:
        lam2 = base.constant_rate
    elif callable(base.arrival_rate):
        lam2 = (lambda s, _t=t, _f=base.arrival_rate: _f(np.asarray(s, dtype=float) + _t))
    else:
        lam2 = np.asarray(base.arrival_rate, dtype=float)[kt:]
    inputs2 = FluidInputs(
        arrival_rate=lam2,
        x0=float(sol.X[kt]),
        nu0=nu_t,
        eta0=eta_t,
        service=base.service,
        patience=base.patience,
    )
    sol2 = solve(inputs2, sol.horizon - t, sol.dt, picard_init=picard_init)
    m = sol2.t.size
    gaps = [
        np.abs(sol2.X - sol.X[kt : kt + m]),
        np.abs(sol2.Q - sol.Q[kt : kt + m]),
        np.abs(sol2.K - (sol.K[kt : kt + m] - sol.K[kt])),
        np.abs(sol2.R - (sol.R[kt : kt + m] - sol.R[kt])),
    ]
    return float(max(np.max(g) for g in gaps))


def fluid_virtual_wait(sol: FluidSolution, t: float, refine: int = 1, rate_floor: float = 1e-12) -> float:
    """Virtual waiting time of the fluid model at time t.

    Accumulates, from t onward, the departure mass plus the reneging of
    pre-t queued mass, and returns the first elapsed time at which the sum
    reaches the queue mass at t, linearly interpolated within the final
    step.  ``refine`` subdivides the solver grid for the integrals.
    """
    kt = sol.index_of(t)
    Q_t = float(sol.Q[kt])
    if Q_t <= 0.0:
        return 0.0
    du = sol.dt / int(refine)
    u = np.arange(0.0, sol.horizon - t + 0.5 * du, du)
    v = t + u
    dep = np.interp(v, sol.t, sol.dep_rate)
    if np.any(dep[:-1] <= rate_floor):
        warnings.warn(
            "departure-mass integral is not strictly increasing along the probe; "
            "the waiting level may never be reached",
            RuntimeWarning,
            stacklevel=2,
        )
    dep_int = np.concatenate(([0.0], np.cumsum(0.5 * (dep[1:] + dep[:-1]) * du)))

    ren_v = np.interp(v, sol.t, sol.ren_rate)
    chi_v = np.interp(v, sol.t, sol.chi)
    cap = np.minimum(u, chi_v)
    lam0 = sol.inputs.constant_rate
    patience = sol.inputs.patience
    if lam0 is not None:
        young = lam0 * np.asarray(patience.cdf(cap))
    else:
        young = np.empty_like(u)
        for i in range(u.size):
            w = cap[i]
            if w <= 0.0:
                young[i] = 0.0
                continue
            xs = np.linspace(0.0, w, max(int(math.ceil(w / du)), 2) + 1)
            integrand = np.asarray(sol.inputs.rate_at(v[i] - xs)) * np.asarray(patience.pdf(xs))
            young[i] = float(np.trapezoid(integrand, xs))
    inner = np.clip(ren_v - young, 0.0, None)
    t_int = np.concatenate(([0.0], np.cumsum(0.5 * (inner[1:] + inner[:-1]) * du)))

    lhs = dep_int + t_int
    hit = np.nonzero(lhs >= Q_t)[0]
    if hit.size == 0:
        raise HorizonExceeded(f"waiting level {Q_t:.6g} not reached by the horizon from t={t}")
    m = int(hit[0])
    if m == 0:
        return 0.0
    frac = (Q_t - lhs[m - 1]) / (lhs[m] - lhs[m - 1])
    return float(u[m - 1] + frac * du)
