import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oppext.dist import DistributionSpec
from oppext.engine import LurothSampler, preset, simulate_ratios
from oppext.extremes import (ExperimentConfigError, LimitSpec, compare_to_limit, default_grid,
                             extreme_series, independence_gap, iid_ratio_at_least, iid_ratio_cdf,
                             limit_cdf, luroth_max_law, max_limit_experiment)


# -- running extremes --------------------------------------------------------

@pytest.mark.parametrize("r,mx,mn", [
    ([3, 2, 7], [3, 3, 7], [3, 2, 2]),
    ([5], [5], [5]),
    ([2, 2, 2], [2, 2, 2], [2, 2, 2]),
])
def test_extreme_series_examples(r, mx, mn):
    s = extreme_series(r)
    assert s.running_max == mx and s.running_min == mn and s.n == len(r)


@given(st.lists(st.floats(1.0, 1e9), min_size=1, max_size=60))
def test_extreme_series_invariants(r):
    s = extreme_series(r)
    assert all(b >= a for a, b in zip(s.running_max, s.running_max[1:]))
    assert all(b <= a for a, b in zip(s.running_min, s.running_min[1:]))
    assert all(m >= z for m, z in zip(s.running_max, s.running_min))
    assert s.running_max[0] == s.running_min[0] == r[0]


# -- limit laws --------------------------------------------------------------

def test_limit_cdf_examples():
    assert limit_cdf(LimitSpec("frechet", 1.0), 1.0) == pytest.approx(math.exp(-1))
    assert limit_cdf(LimitSpec("frechet", 1.0), 0.0) == 0.0
    assert limit_cdf(LimitSpec("weibull", 2.0), 0.0) == 1.0
    assert limit_cdf(LimitSpec("step_at_zero"), [-1e-9, 0.0]).tolist() == [0.0, 1.0]


def test_limit_spec_validation():
    with pytest.raises(ValueError):
        LimitSpec("gumbel")
    with pytest.raises(ValueError):
        LimitSpec("frechet", 0.0)
    with pytest.raises(ValueError):
        LimitSpec("weibull", math.inf)


@pytest.mark.parametrize("spec", [LimitSpec("frechet", 0.7), LimitSpec("weibull", 2.0),
                                  LimitSpec("step_at_zero"), LimitSpec("step_positive")])
def test_limit_cdf_monotone(spec):
    xs = np.linspace(-50, 50, 2001)
    vals = limit_cdf(spec, xs)
    assert np.all(np.diff(vals) >= 0)
    assert vals.min() >= 0 and vals.max() <= 1


def test_limit_cdf_tails():
    assert limit_cdf(LimitSpec("frechet", 3.0), 1e12) == pytest.approx(1.0)
    assert limit_cdf(LimitSpec("weibull", 0.5), -1e4) == pytest.approx(0.0, abs=1e-300)


@given(st.floats(0.01, 100.0), st.floats(1e-3, 1e3))
def test_frechet_scale_coherence(ell, x):
    assert limit_cdf(LimitSpec("frechet", ell), x) == pytest.approx(
        limit_cdf(LimitSpec("frechet", 1.0), x / ell), rel=1e-12)


# -- KS on a grid ------------------------------------------------------------

def test_ks_example():
    grid = [0.2, 0.2 + 1e-12, 0.4, 0.4 + 1e-12, 0.9, 0.9 + 1e-12]
    rep = compare_to_limit([0.2, 0.4, 0.9], lambda x: np.clip(x, 0, 1), grid)
    assert rep.ks_distance == pytest.approx(2 / 3 - 0.4, abs=1e-9)


def test_ks_small_for_limit_samples():
    rng = np.random.default_rng(0)
    # inverse-transform Fréchet(1) draws
    samples = -1.0 / np.log(rng.uniform(size=100_000))
    spec = LimitSpec("frechet", 1.0)
    rep = compare_to_limit(samples, spec, default_grid("frechet_scale"))
    assert rep.ks_distance <= 0.01


def test_ks_zero_for_degenerate_law():
    rep = compare_to_limit([0.0] * 50, LimitSpec("step_at_zero"), [-1.0, -0.5, 0.5, 1.0])
    assert rep.ks_distance == 0.0


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=40))
def test_ks_is_nonnegative_and_matches_definition(samples):
    grid = np.linspace(-6, 6, 25)
    rep = compare_to_limit(samples, LimitSpec("step_at_zero"), grid)
    diffs = np.abs(np.array(rep.empirical) - np.array(rep.theoretical))
    assert rep.ks_distance >= 0
    assert rep.ks_distance == pytest.approx(diffs.max())


def test_ecdf_csv_schema():
    rep = compare_to_limit([1.0, 2.0], LimitSpec("frechet", 1.0), [1.0, 2.0])
    header, rows = rep.csv_rows()
    assert header == ["x", "empirical", "se", "theoretical"]
    assert len(rows) == 2


# -- finite-n oracles ---------------------------------------------------------

def test_luroth_exact_max_law():
    assert luroth_max_law(1000, 1000.0) == pytest.approx(0.999 ** 1000, abs=1e-12)
    assert luroth_max_law(1000, 1000.0) == pytest.approx(0.367695, abs=1e-6)


def test_iid_oracles_match_exhaustive_sums():
    unit = preset("unit")
    for t in (1.0, 2.5, 3.0, 17.2):
        exact = sum(1 / (h * (h + 1)) for h in range(1, int(math.floor(t)) + 1))
        assert iid_ratio_cdf(unit, t) == pytest.approx(exact)
    for c in (0.5, 1.0, 2.5, 3.0):
        exact = 1 / max(math.ceil(c), 1)
        assert iid_ratio_at_least(unit, c) == pytest.approx(exact)
    lur = LurothSampler()
    assert iid_ratio_cdf(lur, 3.5) == pytest.approx(1 - 1 / 3)
    assert iid_ratio_at_least(lur, 2.5) == pytest.approx(1 / 2)


def test_iid_oracle_against_mc_powertail_unit_chain():
    system = preset("unit", DistributionSpec.powertail(0.5), mode="float")
    r = simulate_ratios(system, 1, 200_000, master_seed=3)[:, 0]
    for t in (1.0, 2.0, 5.0, 12.0):
        p = iid_ratio_cdf(system, t)
        assert abs(np.mean(r <= t) - p) <= 4 * math.sqrt(p * (1 - p) / r.size) + 1e-12


# -- experiments -------------------------------------------------------------

def test_frechet_experiment_on_luroth():
    rep = max_limit_experiment(LurothSampler(), 1000, 10_000, "frechet_scale", [0.5, 1, 2],
                               master_seed=11, ell0_plus=1.0)
    for emp, se, fin, lim in zip(rep.empirical, rep.se, rep.finite_n, rep.theoretical):
        assert abs(emp - fin) <= 3 * se
        assert abs(fin - lim) <= 0.01


def test_frechet_experiment_estimates_tail_slope():
    rep = max_limit_experiment(preset("unit", mode="float"), 50, 2000, "frechet_scale", None, 1)
    assert "ell0_plus=1.0" in rep.normalization["scale"]
    assert len(rep.grid) == 21


def test_weibull_needs_finite_slope():
    system = preset("unit", DistributionSpec.powertail(0.5), mode="float")
    with pytest.raises(ExperimentConfigError):
        max_limit_experiment(system, 10, 500, "weibull_shift", [-1.0, 0.0], 1)


def test_inverse_min_degenerate_cases():
    lur = LurothSampler()
    one = max_limit_experiment(lur, 200, 5000, "inverse_min", [-1.0], master_seed=5)
    assert one.empirical == [1.0] and one.theoretical == [1.0]
    two = max_limit_experiment(lur, 200, 5000, "inverse_min", [-1.0], master_seed=5, p=2)
    assert two.empirical == [0.0] and two.theoretical == [None]


def test_experiment_validation():
    with pytest.raises(ExperimentConfigError):
        max_limit_experiment(LurothSampler(), 10, 50, "inverse_min", [0.0], 1)
    with pytest.raises(ExperimentConfigError):
        max_limit_experiment(LurothSampler(), 10, 500, "gumbel", [0.0], 1)
    with pytest.raises(ExperimentConfigError):
        max_limit_experiment(LurothSampler(), 10, 500, "inverse_min", [1.0, 0.0], 1)


def _iid_gap(system, n, a, b):
    pa = iid_ratio_at_least(system, np.nextafter(a, np.inf))
    pb = iid_ratio_cdf(system, b)
    pab = pb - iid_ratio_cdf(system, a)
    return pab ** n - pa ** n * pb ** n


def test_independence_gap_iid_matches_exact_value():
    system = preset("unit", mode="float")
    g = independence_gap(system, 5, 1.5, 4.0, 100_000, master_seed=9)
    exact = _iid_gap(system, 5, 1.5, 4.0)
    assert exact == pytest.approx(0.3 ** 5 - 0.5 ** 5 * 0.8 ** 5)
    assert abs(g.empirical_gap - exact) <= 3 * g.standard_error
    assert g.verdict == "within_band"
    assert not g.hypothesis_flags["F(1/x) < 1/2"]


def test_independence_gap_growth_preset():
    g = independence_gap(preset("growth", mode="float"), 50, 2.5, 10.0, 100_000, master_seed=4)
    assert g.hypothesis_flags["F(1/x) < 1/2"]
    assert abs(g.empirical_gap) <= g.theoretical_bound + 3 * g.standard_error


def test_independence_gap_scale_tags():
    g = independence_gap(preset("unit", mode="float"), 100, 1.5, 3.0, 1000, 2,
                         rho_scale="one", sigma_scale="n")
    assert g.details["b"] == pytest.approx(300.0)
    with pytest.raises(ValueError):
        independence_gap(preset("unit"), 10, 1.5, 3.0, 1000, 2, rho_scale="log n")
    with pytest.raises(ValueError):
        independence_gap(preset("unit"), 10, 3.0, 2.0, 1000, 2)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_experiments_are_seed_deterministic(seed):
    a = max_limit_experiment(LurothSampler(), 30, 200, "inverse_min", [-1.0, 0.0, 1.0], seed)
    b = max_limit_experiment(LurothSampler(), 30, 200, "inverse_min", [-1.0, 0.0, 1.0], seed,
                             workers=2)
    assert a == b
