"""Service, patience and interarrival time distributions.

Every law here has a density on [0, H) where H is the right end of the
support.  Patience laws may additionally place mass at infinity (customers
that never abandon); that mass is kept in the survivor function, so the
hazard rate g/(1-G) of such a law is globally integrable.

All models are immutable after construction and safe to share between
concurrent replications.  Random draws consume exactly one uniform from the
supplied generator so that runs are reproducible from the seed alone.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from .errors import ConfigError, DomainError

__all__ = [
    "DistributionModel",
    "Exponential",
    "Weibull",
    "Lognormal",
    "Hyperexponential",
    "Uniform",
    "Pareto",
    "parse_distribution",
]

_BISECT_TOL = 1e-12


class DistributionModel:
    """A lifetime law with density, hazard, sampling and residual sampling.

    Subclasses implement the base (proper) distribution; this class layers
    the optional mass at infinity on top:  cdf/pdf are scaled by
    ``1 - mass_at_infinity`` and the survivor keeps the defect.
    """

    family = "abstract"

    def __init__(self, mass_at_infinity: float = 0.0):
        p = float(mass_at_infinity)
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"mass_at_infinity must be in [0, 1), got {p}")
        self.mass_at_infinity = p

    # -- base law, to be provided by subclasses (vectorised) -------------

    def _base_cdf(self, x):
        raise NotImplementedError

    def _base_pdf(self, x):
        raise NotImplementedError

    def _base_log_sf(self, x):
        # fallback; subclasses override with closed forms where they exist
        with np.errstate(divide="ignore"):
            return np.log1p(-np.minimum(self._base_cdf(x), 1.0))

    def _base_quantile(self, q):
        """Generalized inverse of the base cdf; default bisection."""
        return _bisect_quantile(self._base_cdf, q, self.support_end)

    @property
    def support_end(self) -> float:
        """Right end H of the support of the density (may be inf)."""
        return math.inf

    def mean(self) -> float:
        """Mean of the law; infinite when there is mass at infinity."""
        if self.mass_at_infinity > 0.0:
            return math.inf
        return self._base_mean()

    def _base_mean(self) -> float:
        raise NotImplementedError

    # -- public law ------------------------------------------------------

    def cdf(self, x):
        """Mass on [0, x]; excludes the mass at infinity."""
        x = np.asarray(x, dtype=float)
        out = (1.0 - self.mass_at_infinity) * self._base_cdf(np.maximum(x, 0.0))
        return out if out.ndim else float(out)

    def pdf(self, x):
        """Density g(x) on [0, H); scaled by 1 - mass_at_infinity."""
        x = np.asarray(x, dtype=float)
        out = (1.0 - self.mass_at_infinity) * self._base_pdf(x)
        return out if out.ndim else float(out)

    def sf(self, x):
        """Survivor 1 - cdf(x); at least mass_at_infinity everywhere."""
        x = np.asarray(x, dtype=float)
        p = self.mass_at_infinity
        if p == 0.0:
            out = np.exp(self._base_log_sf(np.maximum(x, 0.0)))
        else:
            out = p + (1.0 - p) * np.exp(self._base_log_sf(np.maximum(x, 0.0)))
        return out if out.ndim else float(out)

    def log_sf(self, x):
        """log of the survivor; the integrated hazard is its negation."""
        x = np.asarray(x, dtype=float)
        p = self.mass_at_infinity
        base = self._base_log_sf(np.maximum(x, 0.0))
        if p == 0.0:
            out = base
        else:
            out = np.log(p + (1.0 - p) * np.exp(base))
        return out if out.ndim else float(out)

    def integrated_hazard(self, x):
        """Integral of the hazard over [0, x]; equals -log sf(x)."""
        out = -np.asarray(self.log_sf(x))
        return out if out.ndim else float(out)

    def hazard(self, x):
        """Hazard rate g(x) / (1 - G(x)) for x strictly inside [0, H)."""
        arr = np.asarray(x, dtype=float)
        H = self.support_end
        sf = np.asarray(self.sf(arr))
        if np.any(arr >= H) or np.any(sf <= 0.0):
            raise DomainError(f"hazard undefined at x={x!r} (H={H}, survivor<=0)")
        out = np.asarray(self.pdf(arr)) / sf
        return out if out.ndim else float(out)

    def survival_ratio(self, x, t):
        """P(lifetime > x + t | lifetime > x) = sf(x+t) / sf(x)."""
        sx = np.asarray(self.sf(x), dtype=float)
        if np.any(sx <= 0.0):
            raise DomainError(f"survivor is zero at age {x!r}")
        out = np.asarray(self.sf(np.asarray(x, dtype=float) + np.asarray(t, dtype=float))) / sx
        return out if out.ndim else float(out)

    # -- sampling ----------------------------------------------------------

    def sample(self, rng: np.random.Generator) -> float:
        """One draw; returns math.inf with probability mass_at_infinity."""
        u = rng.random()
        p = self.mass_at_infinity
        if u >= 1.0 - p:
            return math.inf
        return self._finite_quantile(u / (1.0 - p))

    def sample_n(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Vector of n draws, consuming n uniforms in order."""
        return np.array([self.sample(rng) for _ in range(n)], dtype=float)

    def sample_residual(self, age: float, rng: np.random.Generator) -> float:
        """Draw T with P(T > t) = survival_ratio(age, t).

        ``age + T`` is then distributed as the law conditioned on exceeding
        ``age``; used to equip sampled initial customers with residual
        lifetimes.
        """
        age = float(age)
        s = self.sf(age)
        if s <= 0.0:
            raise DomainError(f"cannot condition on age {age}: survivor is zero")
        u = rng.random()
        p = self.mass_at_infinity
        target = self.cdf(age) + u * s
        if target >= 1.0 - p:
            return math.inf
        x = self._finite_quantile(target / (1.0 - p))
        return max(x - age, 0.0)

    def _finite_quantile(self, q: float) -> float:
        x = float(self._base_quantile(q))
        H = self.support_end
        if math.isfinite(H) and x >= H:
            x = np.nextafter(H, 0.0)
        return max(x, 0.0)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        d = {"family": self.family}
        d.update(self._params())
        if self.mass_at_infinity:
            d["mass_at_infinity"] = self.mass_at_infinity
        return d

    def _params(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self._params().items())
        if self.mass_at_infinity:
            inner += f", mass_at_infinity={self.mass_at_infinity!r}"
        return f"{type(self).__name__}({inner})"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_json() == other.to_json()


def _bisect_quantile(cdf, q, support_end):
    """inf{x >= 0 : cdf(x) >= q} by interval bisection to 1e-12."""
    q = float(q)
    if q <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    if math.isfinite(support_end):
        hi = support_end
    else:
        while cdf(hi) < q and hi < 1e18:
            hi *= 2.0
    for _ in range(200):
        if hi - lo <= _BISECT_TOL * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if cdf(mid) >= q:
            hi = mid
        else:
            lo = mid
    return hi


def _require_positive(name, value):
    value = float(value)
    if not (value > 0.0 and math.isfinite(value)):
        raise ConfigError(f"{name} must be a positive finite number, got {value}")
    return value


class Exponential(DistributionModel):
    family = "exponential"

    def __init__(self, rate: float, mass_at_infinity: float = 0.0):
        super().__init__(mass_at_infinity)
        self.rate = _require_positive("rate", rate)

    def _base_cdf(self, x):
        return -np.expm1(-self.rate * np.maximum(x, 0.0))

    def _base_pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0.0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def _base_log_sf(self, x):
        return -self.rate * np.maximum(x, 0.0)

    def _base_quantile(self, q):
        return -np.log1p(-np.asarray(q, dtype=float)) / self.rate

    def _base_mean(self):
        return 1.0 / self.rate

    def _params(self):
        return {"rate": self.rate}


class Weibull(DistributionModel):
    family = "weibull"

    def __init__(self, shape: float, scale: float, mass_at_infinity: float = 0.0):
        super().__init__(mass_at_infinity)
        self.shape = _require_positive("shape", shape)
        self.scale = _require_positive("scale", scale)

    def _base_cdf(self, x):
        z = np.maximum(x, 0.0) / self.scale
        return -np.expm1(-(z ** self.shape))

    def _base_pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = np.maximum(x, 0.0) / self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (self.shape / self.scale) * z ** (self.shape - 1.0) * np.exp(-(z ** self.shape))
        return np.where(x >= 0.0, np.nan_to_num(out, posinf=np.inf), 0.0)

    def _base_log_sf(self, x):
        z = np.maximum(x, 0.0) / self.scale
        return -(z ** self.shape)

    def _base_quantile(self, q):
        return self.scale * (-np.log1p(-np.asarray(q, dtype=float))) ** (1.0 / self.shape)

    def _base_mean(self):
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    def _params(self):
        return {"shape": self.shape, "scale": self.scale}


class Lognormal(DistributionModel):
    family = "lognormal"

    def __init__(self, mu: float, sigma: float, mass_at_infinity: float = 0.0):
        super().__init__(mass_at_infinity)
        self.mu = float(mu)
        self.sigma = _require_positive("sigma", sigma)

    def _z(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        with np.errstate(divide="ignore"):
            return (np.log(x) - self.mu) / self.sigma

    def _base_cdf(self, x):
        return ndtr(self._z(x))

    def _base_pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(np.where(x > 0.0, x, 1.0)) - self.mu) / self.sigma
            out = np.exp(-0.5 * z * z) / (np.where(x > 0.0, x, 1.0) * self.sigma * math.sqrt(2.0 * math.pi))
        return np.where(x > 0.0, out, 0.0)

    def _base_log_sf(self, x):
        return log_ndtr(-self._z(x))

    def _base_quantile(self, q):
        return np.exp(self.mu + self.sigma * ndtri(np.asarray(q, dtype=float)))

    def _base_mean(self):
        return math.exp(self.mu + 0.5 * self.sigma ** 2)

    def _params(self):
        return {"mu": self.mu, "sigma": self.sigma}


class Hyperexponential(DistributionModel):
    """Mixture of exponentials; quantiles found by bisection on the cdf."""

    family = "hyperexponential"

    def __init__(self, weights, rates, mass_at_infinity: float = 0.0):
        super().__init__(mass_at_infinity)
        w = np.asarray(weights, dtype=float)
        r = np.asarray(rates, dtype=float)
        if w.ndim != 1 or w.shape != r.shape or w.size == 0:
            raise ConfigError("weights and rates must be 1-d arrays of equal length")
        if np.any(w <= 0.0) or np.any(r <= 0.0):
            raise ConfigError("hyperexponential weights and rates must be positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"hyperexponential weights must sum to 1, got {w.sum()}")
        self.weights = w / w.sum()
        self.rates = r

    def _base_cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return 1.0 - np.exp(self._base_log_sf(x))

    def _base_pdf(self, x):
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, 0.0)
        out = np.tensordot(self.weights * self.rates, np.exp(-np.multiply.outer(self.rates, xs)), axes=1)
        return np.where(x >= 0.0, out, 0.0)

    def _base_log_sf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        # logsumexp over mixture components, stable for large x
        a = np.log(self.weights)[(...,) + (None,) * x.ndim] - np.multiply.outer(self.rates, x)
        amax = a.max(axis=0)
        return amax + np.log(np.exp(a - amax).sum(axis=0))

    def _base_mean(self):
        return float(np.sum(self.weights / self.rates))

    def _params(self):
        return {"weights": [float(w) for w in self.weights], "rates": [float(r) for r in self.rates]}


class Uniform(DistributionModel):
    """Uniform on [a, b) with 0 <= a < b; the support end H equals b."""

    family = "uniform"

    def __init__(self, a: float, b: float, mass_at_infinity: float = 0.0):
        super().__init__(mass_at_infinity)
        self.a = float(a)
        self.b = float(b)
        if self.a < 0.0 or not math.isfinite(self.b):
            raise ConfigError("uniform endpoints must satisfy 0 <= a < b < inf")
        if not self.a < self.b:
            raise ConfigError(
                f"degenerate uniform [a, b] with a={self.a}, b={self.b}: laws without a density are not supported"
            )

    @property
    def support_end(self):
        return self.b

    def _base_cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def _base_pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x < self.b), 1.0 / (self.b - self.a), 0.0)

    def _base_log_sf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x <= self.a, 0.0, np.log(np.clip((self.b - x) / (self.b - self.a), 0.0, 1.0)))

    def _base_quantile(self, q):
        return self.a + np.asarray(q, dtype=float) * (self.b - self.a)

    def _base_mean(self):
        return 0.5 * (self.a + self.b)

    def _params(self):
        return {"a": self.a, "b": self.b}


class Pareto(DistributionModel):
    """Classic Pareto with survivor (scale/x)^shape for x >= scale."""

    family = "pareto"

    def __init__(self, shape: float, scale: float, mass_at_infinity: float = 0.0):
        super().__init__(mass_at_infinity)
        self.shape = _require_positive("shape", shape)
        self.scale = _require_positive("scale", scale)

    def _base_cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = 1.0 - (self.scale / np.maximum(x, self.scale)) ** self.shape
        return np.where(x >= self.scale, out, 0.0)

    def _base_pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = self.shape * self.scale ** self.shape / np.maximum(x, self.scale) ** (self.shape + 1.0)
        return np.where(x >= self.scale, out, 0.0)

    def _base_log_sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.scale, 0.0, -self.shape * np.log(np.maximum(x, self.scale) / self.scale))

    def _base_quantile(self, q):
        return self.scale * (1.0 - np.asarray(q, dtype=float)) ** (-1.0 / self.shape)

    def _base_mean(self):
        if self.shape <= 1.0:
            return math.inf
        return self.shape * self.scale / (self.shape - 1.0)

    def _params(self):
        return {"shape": self.shape, "scale": self.scale}


_FAMILIES = {
    "exponential": (Exponential, ("rate",)),
    "weibull": (Weibull, ("shape", "scale")),
    "lognormal": (Lognormal, ("mu", "sigma")),
    "hyperexponential": (Hyperexponential, ("weights", "rates")),
    "uniform": (Uniform, ("a", "b")),
    "pareto": (Pareto, ("shape", "scale")),
}


def parse_distribution(spec: dict) -> DistributionModel:
    """Build a DistributionModel from its JSON form.

    Example: ``{"family": "weibull", "shape": 2.0, "scale": 1.0,
    "mass_at_infinity": 0.0}``.
    """
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError(f"distribution spec must be a dict with a 'family' key, got {spec!r}")
    family = str(spec["family"]).lower()
    if family not in _FAMILIES:
        raise ConfigError(f"unknown distribution family {family!r}")
    cls, keys = _FAMILIES[family]
    kwargs = {}
    for key in keys:
        if key not in spec:
            raise ConfigError(f"distribution family {family!r} requires parameter {key!r}")
        kwargs[key] = spec[key]
    kwargs["mass_at_infinity"] = spec.get("mass_at_infinity", 0.0)
    extra = set(spec) - set(keys) - {"family", "mass_at_infinity"}
    if extra:
        raise ConfigError(f"unexpected distribution parameters {sorted(extra)} for family {family!r}")
    return cls(**kwargs)
