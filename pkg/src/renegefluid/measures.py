"""Finite measures on the nonnegative half line.

Two concrete kinds are used throughout:

* ``AtomMeasure`` - a finite sum of point masses, the state snapshots of the
  stochastic simulation (unit weights there) and atom-valued initial data.
* ``FluidMeasure`` - a lazy view of a fluid-model measure at time t, made of
  the initial measure transported by aging (each piece carried to ``x + t``
  and thinned by the conditional survivor) plus a boundary layer fed by an
  absolutely continuous input process (arrivals or service entries): mass
  that entered at time s sits at age ``t - s`` thinned by the survivor.

Both expose the same generalized-inverse quantile
``quantile(y) = inf{x >= 0 : F(x) >= y}`` and a mass-parametrised hazard
integral ``int_{y_lo}^{y_hi} h(quantile(y)) dy`` evaluated blockwise, which
is the engine behind the fluid reneging rate.  Hazard values for continuous
blocks are always formed from density ratios so that no hazard singularity
at the right end of a support is ever evaluated.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np

from .dists import DistributionModel
from .errors import ConfigError, MassExceeded

__all__ = [
    "AtomMeasure",
    "PiecewiseDensity",
    "InitialMeasure",
    "FluidMeasure",
    "ks_distance",
    "parse_measure",
]

_MASS_TOL = 1e-9


class AtomMeasure:
    """Finite nonnegative measure given by sorted atoms with positive weights.

    Atoms at identical locations are merged by adding weights.
    """

    def __init__(self, locations, weights=None, presorted: bool = False):
        locs = np.asarray(locations, dtype=float)
        if weights is None:
            w = np.ones_like(locs)
        else:
            w = np.asarray(weights, dtype=float)
        if locs.shape != w.shape or locs.ndim != 1:
            raise ConfigError("locations and weights must be 1-d arrays of equal length")
        if locs.size and (np.any(locs < 0.0) or not np.all(np.isfinite(locs))):
            raise ConfigError("atom locations must be finite and nonnegative")
        if np.any(w <= 0.0):
            raise ConfigError("atom weights must be positive")
        if not presorted and locs.size:
            order = np.argsort(locs, kind="stable")
            locs, w = locs[order], w[order]
        if locs.size:
            uniq, inverse = np.unique(locs, return_inverse=True)
            if uniq.size != locs.size:
                merged = np.zeros_like(uniq)
                np.add.at(merged, inverse, w)
                locs, w = uniq, merged
        self.locations = locs
        self.weights = w
        self._cum = np.cumsum(w)

    @classmethod
    def empty(cls) -> "AtomMeasure":
        return cls(np.empty(0), np.empty(0), presorted=True)

    @classmethod
    def from_pairs(cls, pairs) -> "AtomMeasure":
        if not pairs:
            return cls.empty()
        arr = np.asarray(pairs, dtype=float)
        return cls(arr[:, 0], arr[:, 1])

    def __len__(self):
        return self.locations.size

    @property
    def total_mass(self) -> float:
        return float(self._cum[-1]) if len(self) else 0.0

    def cdf_at(self, x):
        """F(x) = mass on [0, x]."""
        idx = np.searchsorted(self.locations, x, side="right")
        cum = np.concatenate(([0.0], self._cum))
        out = cum[idx]
        return out if np.ndim(x) else float(out)

    def cdf_left(self, x):
        """Mass on [0, x), the left limit of the cdf."""
        idx = np.searchsorted(self.locations, x, side="left")
        cum = np.concatenate(([0.0], self._cum))
        out = cum[idx]
        return out if np.ndim(x) else float(out)

    def quantile(self, y: float) -> float:
        """inf{x >= 0 : F(x) >= y}; 0.0 for y <= 0."""
        y = float(y)
        if y <= 0.0:
            return 0.0
        total = self.total_mass
        if y > total:
            if y > total + _MASS_TOL * max(1.0, total):
                raise MassExceeded(f"quantile at mass {y} exceeds total mass {total}")
            y = total
        idx = int(np.searchsorted(self._cum, y, side="left"))
        return float(self.locations[idx])

    def integrate(self, f) -> float:
        """<f, measure> as the exact atom sum."""
        if not len(self):
            return 0.0
        return float(np.sum(np.asarray(f(self.locations), dtype=float) * self.weights))

    def sum_below(self, f, threshold: float) -> float:
        """Sum of f(x) * w over atoms with x <= threshold, in location order."""
        idx = int(np.searchsorted(self.locations, threshold, side="right"))
        if idx == 0:
            return 0.0
        return float(np.sum(np.asarray(f(self.locations[:idx]), dtype=float) * self.weights[:idx]))

    def h_mass_integral(self, h, y_lo: float = 0.0, y_hi: float | None = None) -> float:
        """int_{y_lo}^{y_hi} h(quantile(y)) dy via exact atom blocks.

        A fully included atom contributes exactly h(x) * w; the boundary
        atoms contribute their overlapping mass, so when the limits align
        with the cdf the result is bit-identical to the direct atom sum.
        """
        total = self.total_mass
        if y_hi is None:
            y_hi = total
        if y_hi > total + _MASS_TOL * max(1.0, total):
            raise MassExceeded(f"mass integral to {y_hi} exceeds total mass {total}")
        y_hi = min(float(y_hi), total)
        y_lo = max(float(y_lo), 0.0)
        if y_hi <= y_lo or not len(self):
            return 0.0
        prev = np.concatenate(([0.0], self._cum[:-1]))
        i0 = int(np.searchsorted(self._cum, y_lo, side="right"))
        i1 = int(np.searchsorted(prev, y_hi, side="left"))
        if i1 <= i0:
            return 0.0
        cum, before = self._cum[i0:i1], prev[i0:i1]
        full = (cum <= y_hi) & (before >= y_lo)
        contrib = np.where(
            full,
            self.weights[i0:i1],
            np.clip(np.minimum(cum, y_hi) - np.maximum(before, y_lo), 0.0, None),
        )
        return float(np.sum(np.asarray(h(self.locations[i0:i1]), dtype=float) * contrib))

    def scaled(self, factor: float) -> "AtomMeasure":
        return AtomMeasure(self.locations, self.weights * float(factor), presorted=True)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n draws from the normalized measure, one uniform per draw."""
        total = self.total_mass
        return np.array([self.quantile(rng.random() * total) for _ in range(n)])

    def to_json(self) -> dict:
        return {"atoms": [[float(x), float(w)] for x, w in zip(self.locations, self.weights)]}

    def __repr__(self):
        return f"AtomMeasure(n={len(self)}, mass={self.total_mass:.6g})"


class PiecewiseDensity:
    """Piecewise-constant density on uniform cells [i*dx, (i+1)*dx)."""

    def __init__(self, dx: float, values):
        self.dx = float(dx)
        self.values = np.asarray(values, dtype=float)
        if self.dx <= 0.0 or self.values.ndim != 1:
            raise ConfigError("piecewise density needs dx > 0 and a 1-d value array")
        if np.any(self.values < 0.0) or not np.all(np.isfinite(self.values)):
            raise ConfigError("density values must be finite and nonnegative")

    @property
    def total_mass(self) -> float:
        return float(self.values.sum() * self.dx)

    def cells(self):
        """(lo, hi, mass) arrays of the nonempty cells."""
        n = self.values.size
        lo = np.arange(n) * self.dx
        hi = lo + self.dx
        mass = self.values * self.dx
        keep = mass > 0.0
        return lo[keep], hi[keep], mass[keep]

    def to_json(self) -> dict:
        return {"grid": {"dx": self.dx, "density": [float(v) for v in self.values]}}


class InitialMeasure:
    """Initial data: optional atoms plus an optional piecewise density."""

    def __init__(self, atoms: AtomMeasure | None = None, density: PiecewiseDensity | None = None):
        self.atoms = atoms if (atoms is not None and len(atoms)) else None
        self.density = density if (density is not None and density.total_mass > 0.0) else None

    @property
    def total_mass(self) -> float:
        mass = 0.0
        if self.atoms is not None:
            mass += self.atoms.total_mass
        if self.density is not None:
            mass += self.density.total_mass
        return mass

    @property
    def is_empty(self) -> bool:
        return self.atoms is None and self.density is None

    def support_upper(self) -> float:
        hi = 0.0
        if self.atoms is not None:
            hi = max(hi, float(self.atoms.locations[-1]))
        if self.density is not None:
            nz = np.nonzero(self.density.values)[0]
            if nz.size:
                hi = max(hi, float((nz[-1] + 1) * self.density.dx))
        return hi

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n draws from the normalized measure, one uniform per draw."""
        blocks = _Blocks.from_initial(self, dist=None, t=0.0)
        total = blocks.total_mass
        return np.array([blocks.quantile(rng.random() * total) for _ in range(n)])

    def to_json(self) -> dict:
        out: dict = {}
        if self.density is not None:
            out.update(self.density.to_json())
        out.update((self.atoms or AtomMeasure.empty()).to_json())
        return out


def parse_measure(spec) -> InitialMeasure:
    """Parse ``{"atoms": [[x, w], ...]}`` and/or ``{"grid": {...}}``."""
    if spec is None:
        return InitialMeasure()
    if not isinstance(spec, dict):
        raise ConfigError(f"measure spec must be a dict, got {spec!r}")
    extra = set(spec) - {"atoms", "grid"}
    if extra:
        raise ConfigError(f"unexpected measure keys {sorted(extra)}")
    atoms = AtomMeasure.from_pairs(spec.get("atoms") or [])
    density = None
    if "grid" in spec and spec["grid"] is not None:
        grid = spec["grid"]
        if "dx" not in grid or "density" not in grid:
            raise ConfigError("grid measure spec needs 'dx' and 'density'")
        density = PiecewiseDensity(grid["dx"], grid["density"])
    return InitialMeasure(atoms, density)


class _Blocks:
    """Sorted mass blocks: linear-cdf intervals and point atoms.

    kind 0: boundary-layer interval; aux holds the input rate, so the
            hazard integral over an age span [a, b] is rate * (G(b) - G(a)).
    kind 1: transported density cell; aux holds the source density, and the
            hazard integrand is d * g(x) / sf(x - t) at the span midpoint.
    kind 2: atom; hazard contribution h(loc) * mass.
    """

    def __init__(self, kind, lo, hi, mass, aux, dist: DistributionModel | None, t: float):
        keep = mass > 0.0
        self.kind = kind[keep]
        self.lo = lo[keep]
        self.hi = hi[keep]
        self.mass = mass[keep]
        self.aux = aux[keep]
        order = np.argsort(self.lo, kind="stable")
        for name in ("kind", "lo", "hi", "mass", "aux"):
            setattr(self, name, getattr(self, name)[order])
        self.cum = np.cumsum(self.mass)
        self.dist = dist
        self.t = float(t)

    @classmethod
    def from_parts(
        cls,
        dist: DistributionModel | None,
        t: float,
        boundary_lo=None,
        boundary_hi=None,
        boundary_mass=None,
        boundary_rate=None,
        initial: InitialMeasure | None = None,
    ) -> "_Blocks":
        kinds, los, his, masses, auxs = [], [], [], [], []
        if boundary_lo is not None and len(boundary_lo):
            kinds.append(np.zeros(len(boundary_lo), dtype=np.int8))
            los.append(np.asarray(boundary_lo, dtype=float))
            his.append(np.asarray(boundary_hi, dtype=float))
            masses.append(np.asarray(boundary_mass, dtype=float))
            auxs.append(np.asarray(boundary_rate, dtype=float))
        if initial is not None and not initial.is_empty:
            if initial.density is not None:
                clo, chi, cmass = initial.density.cells()
                mid = 0.5 * (clo + chi)
                d0 = cmass / (chi - clo)
                if dist is not None and t > 0.0:
                    cmass = cmass * dist.survival_ratio(mid, t)
                kinds.append(np.ones(clo.size, dtype=np.int8))
                los.append(clo + t)
                his.append(chi + t)
                masses.append(cmass)
                auxs.append(d0)
            if initial.atoms is not None:
                loc = initial.atoms.locations
                w = initial.atoms.weights
                if dist is not None and t > 0.0:
                    w = w * dist.survival_ratio(loc, t)
                kinds.append(np.full(loc.size, 2, dtype=np.int8))
                los.append(loc + t)
                his.append(loc + t)
                masses.append(np.asarray(w, dtype=float))
                auxs.append(np.zeros(loc.size))
        if not kinds:
            z = np.empty(0)
            return cls(np.empty(0, dtype=np.int8), z, z, z, z, dist, t)
        return cls(
            np.concatenate(kinds),
            np.concatenate(los),
            np.concatenate(his),
            np.concatenate(masses),
            np.concatenate(auxs),
            dist,
            t,
        )

    @classmethod
    def from_initial(cls, initial: InitialMeasure, dist, t: float) -> "_Blocks":
        return cls.from_parts(dist, t, initial=initial)

    @property
    def total_mass(self) -> float:
        return float(self.cum[-1]) if self.mass.size else 0.0

    def cdf(self, x):
        """Mass on [0, x]; vectorised over x."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        intervals = self.kind != 2
        if np.any(intervals):
            lo, hi, m = self.lo[intervals], self.hi[intervals], self.mass[intervals]
            knot_x = np.column_stack((lo, hi)).ravel()
            cumm = np.cumsum(m)
            knot_f = np.column_stack((cumm - m, cumm)).ravel()
            out = out + np.interp(x, knot_x, knot_f, left=0.0, right=float(cumm[-1]))
        atoms = self.kind == 2
        if np.any(atoms):
            aloc, am = self.lo[atoms], self.mass[atoms]
            acum = np.concatenate(([0.0], np.cumsum(am)))
            out = out + acum[np.searchsorted(aloc, x, side="right")]
        return out if out.ndim else float(out)

    def cdf_left(self, x):
        """Mass on [0, x)."""
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.cdf(x)).copy()
        atoms = self.kind == 2
        if np.any(atoms):
            aloc, am = self.lo[atoms], self.mass[atoms]
            hit = np.searchsorted(aloc, x, side="left") != np.searchsorted(aloc, x, side="right")
            at_mass = am[np.clip(np.searchsorted(aloc, x, side="left"), 0, am.size - 1)]
            out = out - np.where(hit, at_mass, 0.0)
        return out if out.ndim else float(out)

    def quantile(self, y: float) -> float:
        """inf{x >= 0 : cdf(x) >= y}, exact on the block structure."""
        y = float(y)
        if y <= 0.0:
            return 0.0
        total = self.total_mass
        if y > total:
            if y > total + _MASS_TOL * max(1.0, total):
                raise MassExceeded(f"quantile at mass {y} exceeds total mass {total}")
            y = total
        i = int(np.searchsorted(self.cum, y, side="left"))
        before = self.cum[i] - self.mass[i]
        if self.kind[i] == 2 or self.hi[i] <= self.lo[i]:
            return float(self.lo[i])
        frac = (y - before) / self.mass[i]
        return float(self.lo[i] + frac * (self.hi[i] - self.lo[i]))

    def integrate(self, f) -> float:
        """<f, measure>: midpoint rule on intervals, exact on atoms."""
        if not self.mass.size:
            return 0.0
        mid = np.where(self.kind == 2, self.lo, 0.5 * (self.lo + self.hi))
        return float(np.sum(np.asarray(f(mid), dtype=float) * self.mass))

    def _block_hazard(self, i: int, a: float, b: float, part_mass: float) -> float:
        """Hazard-in-mass integral of block i restricted to ages [a, b]."""
        dist = self.dist
        kind = self.kind[i]
        if kind == 2:
            return float(dist.hazard(self.lo[i])) * part_mass
        if kind == 0:
            return float(self.aux[i]) * float(dist.cdf(b) - dist.cdf(a))
        mid = 0.5 * (a + b)
        return float(self.aux[i]) * float(dist.pdf(mid) / dist.sf(mid - self.t)) * (b - a)

    def hazard_mass_integral(self, y_lo: float, y_hi: float) -> float:
        """int_{y_lo}^{y_hi} h(quantile(y)) dy in density form per block."""
        if self.dist is None:
            raise ConfigError("hazard integral needs a distribution attached to the measure")
        total = self.total_mass
        if y_hi > total + _MASS_TOL * max(1.0, total):
            raise MassExceeded(f"mass integral to {y_hi} exceeds total mass {total}")
        y_hi = min(float(y_hi), total)
        y_lo = max(float(y_lo), 0.0)
        if y_hi <= y_lo or not self.mass.size:
            return 0.0
        prev = self.cum - self.mass
        i0 = int(np.searchsorted(self.cum, y_lo, side="right"))
        i1 = int(np.searchsorted(prev, y_hi, side="left"))
        acc = 0.0
        full0, full1 = i0, i1
        if i0 < i1 and not (prev[i0] >= y_lo and self.cum[i0] <= y_hi):
            a = self.lo[i0] + (self.hi[i0] - self.lo[i0]) * np.clip((y_lo - prev[i0]) / self.mass[i0], 0.0, 1.0)
            b = self.lo[i0] + (self.hi[i0] - self.lo[i0]) * np.clip((y_hi - prev[i0]) / self.mass[i0], 0.0, 1.0)
            acc += self._block_hazard(i0, a, b, min(self.cum[i0], y_hi) - max(prev[i0], y_lo))
            full0 = i0 + 1
        if full0 < i1 and not (self.cum[i1 - 1] <= y_hi):
            i = i1 - 1
            b = self.lo[i] + (self.hi[i] - self.lo[i]) * np.clip((y_hi - prev[i]) / self.mass[i], 0.0, 1.0)
            acc += self._block_hazard(i, self.lo[i], b, y_hi - prev[i])
            full1 = i
        acc += self._full_hazard_sum(full0, full1)
        return acc

    def _full_hazard_sum(self, i0: int, i1: int) -> float:
        if i1 <= i0:
            return 0.0
        return float(np.sum(self.full_hazard[i0:i1]))

    @cached_property
    def full_hazard(self) -> np.ndarray:
        """Per-block hazard integral over the whole block, in density form."""
        dist = self.dist
        out = np.zeros(self.mass.size)
        b = self.kind == 0
        if np.any(b):
            out[b] = self.aux[b] * (np.asarray(dist.cdf(self.hi[b])) - np.asarray(dist.cdf(self.lo[b])))
        c = self.kind == 1
        if np.any(c):
            mid = 0.5 * (self.lo[c] + self.hi[c])
            out[c] = self.aux[c] * np.asarray(dist.pdf(mid)) / np.asarray(dist.sf(mid - self.t)) * (self.hi[c] - self.lo[c])
        a = self.kind == 2
        if np.any(a):
            out[a] = np.asarray(dist.pdf(self.lo[a])) / np.asarray(dist.sf(self.lo[a])) * self.mass[a]
        return out

    def materialize(self, dx: float) -> InitialMeasure:
        """Bin interval blocks onto uniform dx cells; keep atoms as atoms."""
        atoms_loc, atoms_w = [], []
        nbins = 0
        intervals = self.kind != 2
        if np.any(intervals):
            nbins = int(math.ceil(float(self.hi[intervals].max()) / dx - 1e-12))
        masses = np.zeros(max(nbins, 1))
        for i in np.nonzero(intervals)[0]:
            lo, hi, m = float(self.lo[i]), float(self.hi[i]), float(self.mass[i])
            b0 = int(math.floor(lo / dx + 1e-12))
            b1 = int(math.ceil(hi / dx - 1e-12))
            width = hi - lo
            for b in range(b0, max(b1, b0 + 1)):
                seg = min(hi, (b + 1) * dx) - max(lo, b * dx)
                if seg > 0.0:
                    masses[b] += m * seg / width
        for i in np.nonzero(self.kind == 2)[0]:
            atoms_loc.append(float(self.lo[i]))
            atoms_w.append(float(self.mass[i]))
        atoms = AtomMeasure(np.array(atoms_loc), np.array(atoms_w)) if atoms_loc else None
        density = PiecewiseDensity(dx, masses / dx) if masses.any() else None
        return InitialMeasure(atoms, density)


class FluidMeasure:
    """Lazy fluid-model measure: transported initial data plus boundary layer.

    ``boundary_times`` is a uniform grid from 0 to t and ``boundary_cum`` the
    cumulative input (arrivals or service entries) on it; the input over
    ``(s_j, s_{j+1})`` sits at ages ``[t - s_{j+1}, t - s_j]`` weighted by the
    survivor at the midpoint age.
    """

    def __init__(
        self,
        dist: DistributionModel,
        t: float,
        initial: InitialMeasure | None = None,
        boundary_times=None,
        boundary_cum=None,
    ):
        self.dist = dist
        self.t = float(t)
        self.initial = initial if initial is not None else InitialMeasure()
        if self.initial.support_upper() > dist.support_end + 1e-12:
            raise ConfigError("initial measure has mass at or beyond the support end")
        if self.initial.atoms is not None and np.any(
            np.asarray(self.dist.sf(self.initial.atoms.locations)) <= 0.0
        ):
            raise ConfigError("initial atoms sit where the survivor vanishes")
        if boundary_times is None:
            self.boundary_times = None
            self.boundary_cum = None
        else:
            bt = np.asarray(boundary_times, dtype=float)
            bc = np.asarray(boundary_cum, dtype=float)
            if bt.shape != bc.shape or bt.ndim != 1 or bt.size < 2:
                raise ConfigError("boundary grid and cumulative input must match and have >= 2 points")
            if abs(bt[0]) > 1e-12 or abs(bt[-1] - self.t) > 1e-9 * max(1.0, self.t):
                raise ConfigError("boundary grid must run from 0 to t")
            if np.any(np.diff(bc) < -1e-12):
                raise ConfigError("cumulative boundary input must be nondecreasing")
            self.boundary_times = bt
            self.boundary_cum = bc

    @cached_property
    def _blocks(self) -> _Blocks:
        if self.boundary_times is None:
            return _Blocks.from_parts(self.dist, self.t, initial=self.initial)
        st, sc = self.boundary_times, self.boundary_cum
        dz = np.diff(sc)
        ages_hi = self.t - st[:-1]
        ages_lo = self.t - st[1:]
        mid = 0.5 * (ages_lo + ages_hi)
        width = ages_hi - ages_lo
        mass = dz * np.asarray(self.dist.sf(mid))
        rate = np.where(width > 0.0, dz / np.where(width > 0.0, width, 1.0), 0.0)
        return _Blocks.from_parts(
            self.dist,
            self.t,
            boundary_lo=ages_lo[::-1],
            boundary_hi=ages_hi[::-1],
            boundary_mass=mass[::-1],
            boundary_rate=rate[::-1],
            initial=self.initial,
        )

    @property
    def total_mass(self) -> float:
        return self._blocks.total_mass

    def cdf_at(self, x):
        return self._blocks.cdf(x)

    def cdf_left(self, x):
        return self._blocks.cdf_left(x)

    def quantile(self, y: float) -> float:
        return self._blocks.quantile(y)

    def integrate(self, f) -> float:
        return self._blocks.integrate(f)

    def hazard_mass_integral(self, y_lo: float, y_hi: float) -> float:
        """int_{y_lo}^{y_hi} h(quantile(y)) dy with h the attached hazard."""
        return self._blocks.hazard_mass_integral(y_lo, y_hi)

    def materialize(self, dx: float) -> InitialMeasure:
        """Freeze into atoms plus a piecewise density on dx cells."""
        return self._blocks.materialize(dx)

    def __repr__(self):
        return f"FluidMeasure(t={self.t:.6g}, mass={self.total_mass:.6g})"


def cdf_at(measure, x):
    """F(x) of any supported measure kind."""
    return measure.cdf_at(x)


def quantile(measure, y):
    """Generalized inverse of the cdf of any supported measure kind."""
    return measure.quantile(y)


def integrate(measure, f):
    """<f, measure> for any supported measure kind."""
    return measure.integrate(f)


def ks_distance(a, b) -> float:
    """sup over a merged grid of |F^a - F^b|, plus the total-mass gap.

    Evaluation points are the atoms of ``a`` together with the block edges
    of ``b``; both the cdf values and their left limits are compared so that
    jumps on either side are seen from both directions.
    """
    pts = [np.asarray([0.0])]
    if isinstance(a, AtomMeasure):
        pts.append(a.locations)
    else:
        pts.append(a._blocks.lo)
        pts.append(a._blocks.hi)
    if isinstance(b, AtomMeasure):
        pts.append(b.locations)
    else:
        pts.append(b._blocks.lo)
        pts.append(b._blocks.hi)
    grid = np.unique(np.concatenate(pts))
    fa, fb = np.asarray(a.cdf_at(grid)), np.asarray(b.cdf_at(grid))
    fal, fbl = np.asarray(a.cdf_left(grid)), np.asarray(b.cdf_left(grid))
    gap = float(np.max(np.abs(fa - fb))) if grid.size else 0.0
    gap = max(gap, float(np.max(np.abs(fal - fbl))) if grid.size else 0.0)
    return max(gap, abs(a.total_mass - b.total_mass))
