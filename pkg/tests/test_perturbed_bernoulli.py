"""Tests for the perturbed Bernoulli core: pmf forms, transforms,
divergences, and the closed-form KL bound.

Expected values are frozen from independent brute-force oracles written
here (plain loops over coin/perturbation outcomes, double-loop superset
sums), never from the code under test.
"""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcsemi.perturbed_bernoulli import (
    PBSpec,
    SupersetStats,
    bernoulli_lift,
    chi2_exact,
    compare,
    kl_bound,
    kl_exact,
    mobius_invert,
    pb_pmf,
    pb_pmf_fourier,
    pb_sample,
    pmf_fourier_vector,
    pmf_vector,
    random_spec,
    superset_sum,
)


def brute_pmf(spec: PBSpec, x) -> float:
    """Direct sum over perturbation subsets, written independently."""
    total = 0.0
    for jmask, mass in spec.sigma.items():
        if any(x[j] == 0 for j in range(spec.s) if jmask >> j & 1):
            continue
        p = mass
        for j in range(spec.s):
            if not jmask >> j & 1:
                p *= spec.q if x[j] else 1.0 - spec.q
        total += p
    return total


def brute_superset(spec: PBSpec, jmask: int) -> float:
    return sum(m for other, m in spec.sigma.items() if other & jmask == jmask)


def all_states(s):
    return itertools.product([0, 1], repeat=s)


class TestPmf:
    def test_plain_bernoulli(self):
        spec = PBSpec(s=1, q=0.5, sigma={0: 1.0})
        assert pb_pmf(spec, [1]) == 0.5

    def test_forced_perturbation_no_coins(self):
        spec = PBSpec(s=2, q=0.0, sigma={0b01: 1.0})
        assert pb_pmf(spec, [1, 0]) == 1.0
        assert pb_pmf(spec, [1, 1]) == 0.0

    def test_mixed_mass(self):
        """0.5 * q^2 + 0.5 * q at q = 1/4, from enumerating coin and
        perturbation outcomes."""
        spec = PBSpec(s=2, q=0.25, sigma={0: 0.5, 0b01: 0.5})
        assert pb_pmf(spec, [1, 1]) == pytest.approx(0.15625, abs=1e-15)
        assert brute_pmf(spec, [1, 1]) == pytest.approx(0.15625, abs=1e-15)

    def test_dimension_mismatch(self):
        spec = PBSpec(s=2, q=0.5, sigma={0: 1.0})
        with pytest.raises(ValueError):
            pb_pmf(spec, [1])

    def test_normalization_exhaustive(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            s = int(rng.integers(1, 9))
            spec = random_spec(rng, s, float(rng.uniform(0.0, 1.0)))
            total = sum(pb_pmf(spec, x) for x in all_states(s))
            assert total == pytest.approx(1.0, abs=1e-12)
        for _ in range(5):
            spec = random_spec(rng, 12, float(rng.uniform(0.0, 1.0)))
            assert abs(pmf_vector(spec).sum() - 1.0) < 1e-12

    def test_vector_matches_scalar(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            s = int(rng.integers(1, 9))
            spec = random_spec(rng, s, float(rng.uniform(0.0, 1.0)))
            vec = pmf_vector(spec)
            for mask in range(1 << s):
                x = [(mask >> j) & 1 for j in range(s)]
                assert vec[mask] == pytest.approx(brute_pmf(spec, x), abs=1e-12)

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            PBSpec(s=1, q=0.5, sigma={0: 0.5})  # masses sum to 0.5
        with pytest.raises(ValueError):
            PBSpec(s=1, q=0.5, sigma={2: 1.0})  # mask outside subsets of {1}
        with pytest.raises(ValueError):
            PBSpec(s=1, q=1.5, sigma={0: 1.0})
        with pytest.raises(ValueError):
            PBSpec(s=1, q=0.5, sigma={0: 1.5, 1: -0.5})


class TestFourierForm:
    def test_collapses_to_bernoulli(self):
        spec = PBSpec(s=1, q=0.5, sigma={0: 1.0})
        assert pb_pmf_fourier(spec, [0]) == pytest.approx(0.5, abs=1e-15)

    def test_matches_direct_form(self):
        spec = PBSpec(s=2, q=0.25, sigma={0: 0.5, 0b01: 0.5})
        assert pb_pmf_fourier(spec, [1, 1]) == pytest.approx(0.15625, abs=1e-14)

    def test_requires_positive_rate(self):
        spec = PBSpec(s=1, q=0.0, sigma={0: 1.0})
        with pytest.raises(ValueError):
            pb_pmf_fourier(spec, [0])

    def test_pointwise_equality_and_normalization(self):
        rng = np.random.default_rng(7)
        for _ in range(80):
            s = int(rng.integers(1, 11))
            spec = random_spec(rng, s, float(rng.uniform(0.05, 1.0)))
            direct = pmf_vector(spec)
            signed = pmf_fourier_vector(spec)
            np.testing.assert_allclose(signed, direct, atol=1e-12)
            assert abs(signed.sum() - 1.0) < 1e-12


class TestSampler:
    def test_deterministic_perturbation(self):
        spec = PBSpec(s=3, q=0.0, sigma={0b011: 1.0})
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert pb_sample(spec, rng).tolist() == [1, 1, 0]

    def test_all_ones_at_unit_rate(self):
        spec = PBSpec(s=4, q=1.0, sigma={0: 0.5, 0b1: 0.5})
        rng = np.random.default_rng(0)
        assert pb_sample(spec, rng).tolist() == [1, 1, 1, 1]

    def test_empirical_matches_pmf(self):
        """Per-state frequency within 4 standard errors over 1e5 draws."""
        spec = PBSpec(s=2, q=0.25, sigma={0: 0.5, 0b01: 0.5})
        rng = np.random.default_rng(123)
        n = 100_000
        counts = np.zeros(4)
        for _ in range(n):
            x = pb_sample(spec, rng)
            counts[int(x[0]) | (int(x[1]) << 1)] += 1
        probs = pmf_vector(spec)
        for mask in range(4):
            se = math.sqrt(probs[mask] * (1 - probs[mask]) / n)
            assert abs(counts[mask] / n - probs[mask]) < 4 * se

    def test_goodness_of_fit(self):
        """Chi-squared GOF not rejected at the 1e-4 level, 1e5 draws."""
        scipy_stats = pytest.importorskip("scipy.stats")
        spec = PBSpec(s=3, q=0.3, sigma={0: 0.6, 0b001: 0.25, 0b110: 0.15})
        rng = np.random.default_rng(321)
        n = 100_000
        counts = np.zeros(8)
        for _ in range(n):
            x = pb_sample(spec, rng)
            counts[int(x[0]) | (int(x[1]) << 1) | (int(x[2]) << 2)] += 1
        expected = pmf_vector(spec) * n
        stat = float(((counts - expected) ** 2 / expected).sum())
        pvalue = float(scipy_stats.chi2.sf(stat, df=7))
        assert pvalue > 1e-4


class TestSupersetTransform:
    def test_point_mass_at_empty(self):
        spec = PBSpec(s=3, q=0.5, sigma={0: 1.0})
        stats = superset_sum(spec)
        assert stats.value(0) == 1.0
        assert all(stats.value(m) == 0.0 for m in range(1, 8))

    def test_hand_sums(self):
        spec = PBSpec(s=2, q=0.5, sigma={0: 0.5, 0b01: 0.3, 0b11: 0.2})
        stats = superset_sum(spec)
        assert stats.value(0b01) == pytest.approx(0.5)
        assert stats.value(0b10) == pytest.approx(0.2)
        assert stats.value(0b11) == pytest.approx(0.2)

    def test_monotone_under_superset(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            s = int(rng.integers(1, 9))
            stats = superset_sum(random_spec(rng, s, 0.4))
            for mask in range(1 << s):
                for j in range(s):
                    if not mask >> j & 1:
                        assert stats.value(mask) >= stats.value(mask | (1 << j)) - 1e-15

    def test_roundtrip_against_double_loop(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            s = int(rng.integers(1, 11))
            spec = random_spec(rng, s, 0.5)
            stats = superset_sum(spec)
            for mask in range(1 << s):
                assert stats.value(mask) == pytest.approx(
                    brute_superset(spec, mask), abs=1e-12
                )
            back = mobius_invert(stats)
            for mask in range(1 << s):
                assert back.get(mask, 0.0) == pytest.approx(
                    spec.mass(mask), abs=1e-12
                )

    def test_full_singleton_table(self):
        stats = SupersetStats(s=1, values=np.array([1.0, 1.0]))
        assert mobius_invert(stats) == {1: 1.0}

    def test_invalid_table_rejected(self):
        stats = SupersetStats(s=1, values=np.array([1.0, 1.5]))
        with pytest.raises(ValueError):
            mobius_invert(stats)

    @given(
        s=st.integers(1, 7),
        seed=st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_roundtrip_property(self, s, seed):
        rng = np.random.default_rng(seed)
        spec = random_spec(rng, s, float(rng.uniform(0, 1)), max_support=1 << s)
        back = mobius_invert(superset_sum(spec))
        for mask in range(1 << s):
            assert back.get(mask, 0.0) == pytest.approx(spec.mass(mask), abs=1e-12)


class TestBernoulliLift:
    def test_no_lift_is_point_mass(self):
        spec = bernoulli_lift(0.3, 0.3, 4)
        assert spec.sigma == {0: pytest.approx(1.0)}

    def test_quarter_to_half(self):
        spec = bernoulli_lift(0.25, 0.5, 1)
        assert spec.mass(0b1) == pytest.approx(1 / 3, abs=1e-15)
        assert spec.mass(0) == pytest.approx(2 / 3, abs=1e-15)
        assert pb_pmf(spec, [1]) == pytest.approx(0.5, abs=1e-15)

    def test_pmf_is_product_law(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            s = int(rng.integers(1, 9))
            q = float(rng.uniform(0.0, 0.9))
            qp = float(rng.uniform(q, 1.0))
            spec = bernoulli_lift(q, qp, s)
            vec = pmf_vector(spec)
            for mask in range(1 << s):
                ones = mask.bit_count()
                assert vec[mask] == pytest.approx(
                    qp**ones * (1 - qp) ** (s - ones), abs=1e-12
                )

    def test_rejects_unit_base(self):
        with pytest.raises(ValueError):
            bernoulli_lift(1.0, 1.0, 2)
        with pytest.raises(ValueError):
            bernoulli_lift(0.6, 0.5, 2)


class TestExactDivergences:
    def test_identical_laws(self):
        spec = PBSpec(s=3, q=0.4, sigma={0: 0.7, 0b101: 0.3})
        assert kl_exact(spec, spec) == 0.0
        assert chi2_exact(spec, spec) == 0.0

    def test_two_state_kl(self):
        a = PBSpec(s=1, q=0.5, sigma={0: 1.0})
        b = PBSpec(s=1, q=0.5, sigma={0: 0.75, 0b1: 0.25})
        expected = 0.5 * math.log(0.5 / 0.625) + 0.5 * math.log(0.5 / 0.375)
        assert kl_exact(a, b) == pytest.approx(expected, abs=1e-14)

    def test_two_state_chi2(self):
        a = PBSpec(s=1, q=0.5, sigma={0: 1.0})
        b = PBSpec(s=1, q=0.5, sigma={0: 0.75, 0b1: 0.25})
        expected = 0.125**2 / 0.625 + 0.125**2 / 0.375
        assert chi2_exact(a, b) == pytest.approx(expected, abs=1e-14)

    def test_full_support_stays_finite(self):
        a = PBSpec(s=1, q=0.5, sigma={0b1: 1.0})
        b = PBSpec(s=1, q=0.5, sigma={0: 1.0})
        assert math.isfinite(kl_exact(a, b))

    def test_support_escape_is_infinite(self):
        a = PBSpec(s=1, q=0.0, sigma={0b1: 1.0})
        b = PBSpec(s=1, q=0.0, sigma={0: 1.0})
        assert kl_exact(a, b) == math.inf
        assert chi2_exact(a, b) == math.inf

    def test_dimension_mismatch(self):
        a = PBSpec(s=1, q=0.5, sigma={0: 1.0})
        b = PBSpec(s=2, q=0.5, sigma={0: 1.0})
        with pytest.raises(ValueError):
            kl_exact(a, b)

    def test_kl_dominated_by_chi2(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            s = int(rng.integers(1, 9))
            q = float(rng.uniform(0.05, 0.95))
            a = random_spec(rng, s, q)
            b = random_spec(rng, s, q, include_empty=True)
            assert kl_exact(a, b) <= chi2_exact(a, b) + 1e-9


class TestKLBound:
    def test_identical_laws_give_zero(self):
        spec = PBSpec(s=2, q=0.4, sigma={0: 0.6, 0b01: 0.4})
        assert kl_bound(spec, spec) == pytest.approx(0.0, abs=1e-15)

    def test_single_coordinate_squared_mass(self):
        """At q = 1/2 against pure coins the bound is exactly p^2."""
        for p in (0.1, 0.3, 0.7):
            a = PBSpec(s=1, q=0.5, sigma={0: 1 - p, 0b1: p})
            b = PBSpec(s=1, q=0.5, sigma={0: 1.0})
            assert kl_bound(a, b) == pytest.approx(p * p, abs=1e-14)
            assert kl_exact(a, b) <= p * p + 1e-9

    def test_requires_shared_rate(self):
        a = PBSpec(s=1, q=0.4, sigma={0: 1.0})
        b = PBSpec(s=1, q=0.5, sigma={0: 1.0})
        with pytest.raises(ValueError):
            kl_bound(a, b)

    def test_requires_empty_set_mass(self):
        a = PBSpec(s=1, q=0.5, sigma={0: 1.0})
        b = PBSpec(s=1, q=0.5, sigma={0b1: 1.0})
        with pytest.raises(ValueError):
            kl_bound(a, b)

    def test_dominates_exact_kl(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            s = int(rng.integers(2, 9))
            q = float(rng.uniform(0.1, 0.9))
            a = random_spec(rng, s, q)
            if rng.random() < 0.5:
                b = random_spec(rng, s, q, include_empty=True)
            else:
                b = bernoulli_lift(q, float(rng.uniform(q, 0.95)), s)
            report = compare(a, b)
            assert report.kl_exact <= report.bound + 1e-9
            assert report.slack == pytest.approx(report.bound - report.kl_exact)


class TestSerialization:
    def test_roundtrip(self):
        spec = PBSpec(s=3, q=0.25, sigma={0: 0.5, 0b101: 0.3, 0b010: 0.2})
        record = spec.to_json()
        assert record["sigma"][0] == {"set": [], "mass": 0.5}
        assert {tuple(e["set"]) for e in record["sigma"]} == {(), (2,), (1, 3)}
        back = PBSpec.from_json(record)
        assert back.s == spec.s and back.q == spec.q
        assert back.sigma == spec.sigma

    def test_rejects_out_of_range_index(self):
        with pytest.raises(ValueError):
            PBSpec.from_json({"s": 2, "q": 0.5, "sigma": [{"set": [3], "mass": 1.0}]})
