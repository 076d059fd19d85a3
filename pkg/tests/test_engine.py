from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oppext.dist import DistributionSpec
from oppext.engine import (AffinePhi, OppenheimSystem, SaturationError, conditional_digit,
                           delta, growth_system, luroth_at_least, luroth_cdf, luroth_tail,
                           preset, replica_map, sample_luroth_iid, sample_path, simulate_chain,
                           simulate_ratios, unit_cdf, unit_system)
from oppext.rng import hash64, replica_seed, uniform_block, uniforms

FAMILIES = [DistributionSpec.uniform(), DistributionSpec.powertail(0.5),
            DistributionSpec.piecewise_linear([(0, 0), (0.3, 0.1), (0.7, 0.8), (1, 1)]),
            DistributionSpec.table([0, 0.2, 0.5, 0.9, 1.0])]


# -- counter-based streams ---------------------------------------------------

def test_splitmix_reference_output():
    # first SplitMix64 output from state 0
    z = np.array([0], dtype=np.uint64)
    u = uniforms(z, 0)[0]
    assert u == ((0xE220A8397B1DCDAF >> 11) + 1) * 2.0 ** -53


def test_uniform_block_matches_single_draws():
    seeds = hash64(5, np.arange(4, dtype=np.uint64))
    block = uniform_block(seeds, 6)
    for k in range(6):
        assert np.array_equal(block[:, k], uniforms(seeds, k))
    assert np.array_equal(uniform_block(seeds, 3, start=2), block[:, 2:5])
    assert block.min() > 0 and block.max() <= 1


def test_replica_seeds_are_distinct():
    seeds = hash64(123, np.arange(100_000, dtype=np.uint64))
    assert len(np.unique(seeds)) == 100_000
    assert replica_seed(123, 7) == int(seeds[7])
    assert replica_seed(124, 7) != replica_seed(123, 7)


# -- single step -------------------------------------------------------------

def test_conditional_digit_examples():
    assert conditional_digit(1, 0, 0.3) == (3, Fraction(1, 4), Fraction(1, 3))
    h, _, beta_end = conditional_digit(2, 0, 1.0)
    assert h == 2 and beta_end == 1
    assert conditional_digit(2, 1, 0.5) == (6, Fraction(4, 9), Fraction(1, 2))


def test_boundary_tie_selects_right_closed_digit():
    # w = delta(5) exactly
    assert conditional_digit(1, 0, Fraction(1, 5))[0] == 5
    assert conditional_digit(3, Fraction(1, 2), delta(3, 7, Fraction(1, 2)))[0] == 7


@given(st.integers(1, 50), st.fractions(0, 5), st.floats(1e-9, 1.0))
def test_digit_lands_in_its_interval(phi, q, w):
    h, a_end, b_end = conditional_digit(phi, q, w)
    assert h >= phi
    assert 0 <= a_end < b_end <= 1
    assert a_end < Fraction(w) <= b_end
    assert a_end == delta(phi, h + 1, q) and b_end == delta(phi, h, q)


@pytest.mark.parametrize("F", FAMILIES)
def test_inverse_transform_digit_is_unique(F):
    rng = np.random.default_rng(17)
    ws = np.asarray(F.ppf(rng.uniform(1e-12, 1.0, 10_000)))
    ws = ws[ws > 0]
    for phi, q in ((1, 0), (3, Fraction(1, 3))):
        for w in ws[:2_000]:
            h, _, _ = conditional_digit(phi, q, float(w))
            wf = Fraction(float(w))
            assert delta(phi, h + 1, q) < wf <= delta(phi, h, q)


def test_conditional_digit_domain_errors():
    with pytest.raises(ValueError):
        conditional_digit(1.5, 0, 0.5)
    with pytest.raises(ValueError):
        conditional_digit(1, 0, 0.0)
    with pytest.raises(ValueError):
        conditional_digit(1, -1, 0.5)


def test_system_validation():
    with pytest.raises(ValueError):
        AffinePhi(0, 0)
    with pytest.raises(ValueError):
        AffinePhi(0.5, 1)
    with pytest.raises(ValueError):
        OppenheimSystem(AffinePhi(0, 1), -0.5, DistributionSpec.uniform())
    with pytest.raises(ValueError):
        preset("nope")
    with pytest.raises(ValueError):
        preset("luroth", DistributionSpec.powertail(0.5))


# -- paths -------------------------------------------------------------------

def test_unit_path_with_injected_stream():
    path = sample_path(unit_system(), 2, seed=0, w_stream=[0.3, 0.6])
    assert path.digits == [1, 3, 1]
    assert path.ratios == [3, 1]
    assert path.n == 2 and len(path.digits) == 3


def test_growth_path_with_injected_stream():
    path = sample_path(growth_system(), 2, seed=0, w_stream=[0.3, 0.3])
    assert path.digits == [1, 3, 10]
    assert path.ratios == [3, Fraction(10, 3)]


@pytest.mark.parametrize("mode", ["exact", "float"])
@pytest.mark.parametrize("name", ["unit", "growth"])
def test_paths_are_reproducible(name, mode):
    system = preset(name, mode=mode)
    a = sample_path(system, 30, seed=99)
    b = sample_path(system, 30, seed=99)
    assert a == b
    assert a.n == 30 and len(a.digits) == 31


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.sampled_from(["unit", "growth"]))
def test_path_invariants(seed, name):
    system = preset(name)
    path = sample_path(system, 25, seed)
    for s in path.steps:
        assert s.ratio >= 1
        assert s.h_next >= system.phi_of(s.h_prev)
        assert s.alpha_end < s.w <= s.beta_end
        assert s.ratio == 1 / s.beta_end


def test_exact_and_float_modes_agree():
    for name in ("unit", "growth"):
        ex = sample_path(preset(name, mode="exact"), 40, seed=4)
        fl = sample_path(preset(name, mode="float"), 40, seed=4)
        assert np.allclose([float(r) for r in ex.ratios], fl.ratios, rtol=1e-12)


def test_exact_mode_saturation_error():
    system = OppenheimSystem(AffinePhi(1, 0), 0, DistributionSpec.uniform(), digit_cap=10 ** 6)
    with pytest.raises(SaturationError) as info:
        sample_path(system, 200, seed=1)
    assert info.value.partial.saturated


def test_float_mode_saturates_with_flag():
    out = simulate_chain(growth_system(mode="float"), 200, hash64(0, np.arange(8, dtype=np.uint64)))
    assert out["saturated"].all()
    assert np.all(out["ratios"] >= 1)


def test_csv_export(tmp_path):
    path = sample_path(growth_system(), 3, seed=2)
    target = tmp_path / "p.csv"
    path.write_csv(target)
    lines = target.read_text().splitlines()
    assert lines[0] == "step,B,Q,R,alpha,beta,w"
    assert len(lines) == 4


# -- batch simulation --------------------------------------------------------

@pytest.mark.parametrize("name", ["unit", "growth"])
def test_batch_rows_match_single_paths(name):
    system = preset(name, mode="float")
    ratios = simulate_ratios(system, 12, 5, master_seed=77)
    for i in range(5):
        single = sample_path(system, 12, replica_seed(77, i))
        assert np.array_equal(ratios[i], single.ratios)


@pytest.mark.parametrize("name", ["unit", "growth", "luroth"])
def test_worker_and_chunk_invariance(name):
    system = preset(name, mode="float")
    ref = simulate_ratios(system, 8, 10_000, master_seed=5, workers=1)
    for workers in (2, 8):
        assert np.array_equal(simulate_ratios(system, 8, 10_000, 5, workers), ref)
    fn = lambda s: simulate_chain(system, 8, s)["ratios"]  # noqa: E731
    assert np.array_equal(replica_map(fn, 10_000, 5, workers=3, chunk_size=777), ref)


def test_callable_q_rule_runs_rowwise():
    system = OppenheimSystem(AffinePhi(0, 1), lambda hist: Fraction(1, len(hist)),
                             DistributionSpec.uniform(), arithmetic_mode="float")
    ratios = simulate_ratios(system, 6, 50, master_seed=1)
    assert ratios.shape == (50, 6) and np.all(ratios >= 1)


# -- laws --------------------------------------------------------------------

def _pmf_within(samples, pmf, hs, n_se=4.0):
    n = len(samples)
    counts = np.bincount(samples.astype(np.int64), minlength=max(hs) + 1)
    for h in hs:
        p = pmf(h)
        assert abs(counts[h] / n - p) <= n_se * np.sqrt(p * (1 - p) / n), h


def test_unit_chain_marginal_law():
    r = simulate_ratios(unit_system(mode="float"), 1, 1_000_000, master_seed=2024)[:, 0]
    _pmf_within(r, lambda h: 1 / (h * (h + 1)), range(1, 21))


def test_luroth_marginal_law():
    r = np.asarray(sample_luroth_iid(1_000_000, seed=2024))
    _pmf_within(r, lambda h: 1 / (h * (h - 1)), range(2, 21))
    assert r.min() >= 2


def test_luroth_is_shifted_unit_chain():
    # identical uniforms: floor(1/U) + 1 against floor(1/U)
    seeds = hash64(8, np.arange(1, dtype=np.uint64))
    u = uniform_block(seeds, 1000)[0]
    lur = np.asarray(sample_luroth_iid(1000, 0, u_stream=u))
    unit = np.array([conditional_digit(1, 0, float(w))[0] for w in u])
    assert np.array_equal(lur, unit + 1)


def test_luroth_shift_in_distribution():
    lur = np.asarray(sample_luroth_iid(1_000_000, seed=31))
    unit = simulate_ratios(unit_system(mode="float"), 1, 1_000_000, master_seed=32)[:, 0] + 1
    for h in range(2, 21):
        p1, p2 = np.mean(lur == h), np.mean(unit == h)
        se = np.sqrt(p1 * (1 - p1) / lur.size + p2 * (1 - p2) / unit.size)
        assert abs(p1 - p2) <= 4 * se


def test_luroth_injected_draws():
    assert sample_luroth_iid(2, 0, u_stream=[0.3, 0.5]) == [4, 3]


def test_luroth_closed_forms():
    assert luroth_tail(3.5) == pytest.approx(1 / 3)
    assert luroth_tail(2) == 1.0
    assert luroth_tail(10) == pytest.approx(1 / 9)
    with pytest.raises(ValueError):
        luroth_tail(1.0)
    assert luroth_cdf(1000) == pytest.approx(0.999)
    assert luroth_at_least(2) == 1.0


@given(st.floats(2.0, 1e6))
def test_luroth_cdf_and_tail_are_complementary(t):
    # P(R <= t) + P(R >= floor(t) + 1) = 1
    assert luroth_cdf(t) + luroth_at_least(np.floor(t) + 1) == pytest.approx(1.0)


@given(st.floats(1.0, 500.0))
def test_unit_cdf_telescopes(t):
    terms = [1 / (j * (j + 1)) for j in range(1, int(np.floor(t)) + 1)]
    assert unit_cdf(t) == pytest.approx(sum(terms), rel=1e-12)
