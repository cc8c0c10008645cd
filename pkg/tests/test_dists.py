"""Distribution layer: closed forms, hazards, sampling, conditioning."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from renegefluid.dists import (
    Exponential,
    Hyperexponential,
    Lognormal,
    Pareto,
    Uniform,
    Weibull,
    parse_distribution,
)
from renegefluid.errors import ConfigError, DomainError

# one representative of each family, used by the property sweeps
FAMILIES = [
    Exponential(1.3),
    Weibull(2.0, 1.0),
    Weibull(0.8, 2.0),
    Lognormal(0.0, 0.5),
    Hyperexponential([0.3, 0.7], [0.5, 2.0]),
    Uniform(0.0, 2.0),
    Uniform(0.5, 1.5),
    Pareto(2.5, 1.0),
    Exponential(1.0, mass_at_infinity=0.3),
    Lognormal(0.2, 0.7, mass_at_infinity=0.15),
]


def interior_points(d, n, rng):
    """Points strictly inside the support, away from density kinks."""
    hi = d.support_end if math.isfinite(d.support_end) else 8.0
    lo = 0.0
    if isinstance(d, Uniform):
        lo = d.a
    if isinstance(d, Pareto):
        lo = d.scale
    margin = 1e-3 * (hi - lo)
    return lo + margin + (hi - lo - 2 * margin) * rng.random(n)


class TestClosedForms:
    def test_cdf_at_zero(self):
        assert Exponential(1.0).cdf(0.0) == 0.0

    def test_total_finite_mass_excludes_mass_at_infinity(self):
        d = Exponential(1.0, mass_at_infinity=0.3)
        assert d.cdf(1e9) == pytest.approx(0.7, abs=1e-12)

    def test_weibull_cdf_frozen(self):
        # oracle: closed-form Weibull cdf 1 - exp(-(x/scale)^shape) at x=1
        assert Weibull(2.0, 1.0).cdf(1.0) == pytest.approx(0.6321205588285577, abs=1e-12)

    def test_support_mass_identity(self):
        # the cdf is continuous, so its value at H equals the limit from below
        for d in FAMILIES:
            probe = d.support_end if math.isfinite(d.support_end) else 1e7
            assert d.cdf(probe) + d.mass_at_infinity == pytest.approx(1.0, abs=1e-12)

    def test_exponential_hazard_constant(self):
        d = Exponential(2.0)
        for x in (0.0, 0.3, 5.0):
            assert d.hazard(x) == pytest.approx(2.0, abs=1e-12)

    def test_weibull_hazard(self):
        assert Weibull(2.0, 1.0).hazard(0.5) == pytest.approx(1.0, abs=1e-12)

    def test_hazard_with_mass_at_infinity(self):
        d = Exponential(1.0, mass_at_infinity=0.5)
        assert d.hazard(0.0) == pytest.approx(0.5, abs=1e-12)
        # numerical cross-check: finite difference of the cdf over the survivor
        h = 1e-6
        fd = (d.cdf(h) - d.cdf(0.0)) / h / d.sf(0.0)
        assert d.hazard(0.0) == pytest.approx(fd, abs=1e-5)

    def test_hazard_domain_errors(self):
        with pytest.raises(DomainError):
            Uniform(0.0, 1.0).hazard(1.0)
        with pytest.raises(DomainError):
            Uniform(0.0, 1.0).hazard(2.0)

    def test_survival_ratio_identity_at_zero(self):
        for d in FAMILIES:
            assert d.survival_ratio(0.7, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_survival_ratio_memoryless(self):
        assert Exponential(1.0).survival_ratio(3.0, 2.0) == pytest.approx(math.exp(-2.0), rel=1e-12)

    def test_survival_ratio_weibull_vs_quadrature(self):
        d = Weibull(2.0, 1.0)
        got = d.survival_ratio(1.0, 1.0)
        assert got == pytest.approx(math.exp(-3.0), rel=1e-12)
        # oracle: integrate the density on [2, inf) over the survivor at 1
        tail2, _ = quad(d.pdf, 2.0, np.inf)
        tail1, _ = quad(d.pdf, 1.0, np.inf)
        assert got == pytest.approx(tail2 / tail1, rel=1e-8)

    def test_degenerate_uniform_rejected(self):
        # laws without a density are excluded at construction
        with pytest.raises(ConfigError):
            Uniform(2.0, 2.0)


class TestProperties:
    @pytest.mark.parametrize("d", FAMILIES, ids=lambda d: repr(d))
    def test_hazard_times_survivor_is_density(self, d):
        rng = np.random.default_rng(5)
        xs = interior_points(d, 1000, rng)
        step = 1e-6
        fd = (np.asarray(d.cdf(xs + step)) - np.asarray(d.cdf(xs - step))) / (2 * step)
        hs = np.asarray(d.hazard(xs)) * np.asarray(d.sf(xs))
        assert np.max(np.abs(hs - fd)) < 1e-5

    @pytest.mark.parametrize("d", FAMILIES, ids=lambda d: repr(d))
    def test_survival_ratio_semigroup(self, d):
        rng = np.random.default_rng(6)
        xs = interior_points(d, 200, rng)
        hi = d.support_end if math.isfinite(d.support_end) else 10.0
        s = rng.random(200) * (hi - xs) * 0.5
        t = rng.random(200) * (hi - xs - s) * 0.5
        lhs = np.asarray(d.survival_ratio(xs, s + t))
        rhs = np.asarray(d.survival_ratio(xs, s)) * np.asarray(d.survival_ratio(xs + s, t))
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    @pytest.mark.parametrize("d", FAMILIES, ids=lambda d: repr(d))
    def test_cdf_monotone_hazard_nonnegative_locally_integrable(self, d):
        rng = np.random.default_rng(7)
        xs = np.sort(interior_points(d, 500, rng))
        cdf = np.asarray(d.cdf(xs))
        assert np.all(np.diff(cdf) >= -1e-15)
        assert np.all(np.asarray(d.hazard(xs)) >= 0.0)
        a = xs[-1]
        assert np.isfinite(d.integrated_hazard(a))

    @pytest.mark.parametrize("d", FAMILIES, ids=lambda d: repr(d))
    def test_sampling_ks_against_cdf(self, d):
        # inverse-transform draws, Kolmogorov-Smirnov distance below 0.01
        rng = np.random.default_rng(11)
        n = 100_000
        u = rng.random(n)
        p = d.mass_at_infinity
        finite = u < 1.0 - p
        draws = np.sort(np.asarray(d._base_quantile(u[finite] / (1.0 - p))))
        k = draws.size
        grid_cdf = np.asarray(d.cdf(draws))
        emp_hi = (np.arange(1, k + 1)) / n
        emp_lo = np.arange(k) / n
        ks = max(np.max(np.abs(emp_hi - grid_cdf)), np.max(np.abs(emp_lo - grid_cdf)))
        assert ks < 0.01


class TestSampling:
    def test_law_of_large_numbers_mean(self):
        d = Exponential(1.0)
        rng = np.random.default_rng(12)
        u = rng.random(1_000_000)
        draws = np.asarray(d._base_quantile(u))  # same transform sample() applies
        assert abs(draws.mean() - 1.0) < 0.01

    def test_mass_at_infinity_fraction(self):
        d = Exponential(1.0, mass_at_infinity=0.3)
        rng = np.random.default_rng(13)
        draws = [d.sample(rng) for _ in range(100_000)]
        frac = np.mean([x == math.inf for x in draws])
        assert abs(frac - 0.3) < 0.01

    def test_sample_reproducible(self):
        d = Lognormal(0.0, 0.5)
        a = [d.sample(np.random.default_rng(99)) for _ in range(5)]
        b = [d.sample(np.random.default_rng(99)) for _ in range(5)]
        assert a == b

    def test_residual_at_age_zero_matches_plain_sampling(self):
        d = Weibull(2.0, 1.0)
        s1 = [d.sample(np.random.default_rng(1)) for _ in range(2000)]
        s2 = [d.sample_residual(0.0, np.random.default_rng(1)) for _ in range(2000)]
        assert np.allclose(s1, s2)

    def test_residual_memoryless(self):
        d = Exponential(1.0)
        rng = np.random.default_rng(21)
        draws = np.array([d.sample_residual(3.7, rng) for _ in range(20_000)])
        assert abs(draws.mean() - 1.0) < 0.03
        assert abs(np.mean(draws > 1.0) - math.exp(-1.0)) < 0.01

    def test_residual_weibull_survivor(self):
        d = Weibull(2.0, 1.0)
        rng = np.random.default_rng(22)
        draws = np.array([d.sample_residual(1.0, rng) for _ in range(100_000)])
        assert abs(np.mean(draws > 1.0) - math.exp(-3.0)) < 0.01

    def test_residual_with_mass_at_infinity(self):
        d = Exponential(1.0, mass_at_infinity=0.4)
        rng = np.random.default_rng(23)
        draws = np.array([d.sample_residual(1.0, rng) for _ in range(20_000)])
        # conditional chance of never reneging is p / survivor(age)
        want = 0.4 / d.sf(1.0)
        assert abs(np.mean(np.isinf(draws)) - want) < 0.01

    def test_residual_requires_positive_survivor(self):
        with pytest.raises(DomainError):
            Uniform(0.0, 1.0).sample_residual(1.0, np.random.default_rng(0))


class TestParsing:
    def test_round_trip(self):
        for d in FAMILIES:
            again = parse_distribution(d.to_json())
            assert again == d

    def test_parse_example(self):
        d = parse_distribution({"family": "weibull", "shape": 2.0, "scale": 1.0, "mass_at_infinity": 0.0})
        assert isinstance(d, Weibull) and d.shape == 2.0

    @pytest.mark.parametrize(
        "spec",
        [
            {"family": "nope", "rate": 1.0},
            {"family": "exponential"},
            {"family": "exponential", "rate": 1.0, "bogus": 2},
            {"family": "exponential", "rate": -1.0},
            {"family": "exponential", "rate": 1.0, "mass_at_infinity": 1.0},
            {"family": "uniform", "a": 1.0, "b": 1.0},
            {"family": "hyperexponential", "weights": [0.5, 0.6], "rates": [1.0, 2.0]},
            "not a dict",
        ],
    )
    def test_parse_errors(self, spec):
        with pytest.raises(ConfigError):
            parse_distribution(spec)
