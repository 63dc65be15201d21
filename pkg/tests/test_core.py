import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzfuse.core import (
    ChannelParams,
    ConfigError,
    FixedK,
    FusionDecision,
    HonestyVector,
    IIDPrior,
    IndependentAlpha,
    LabeledSample,
    MarkovPrior,
    MaxEntropyBounded,
    ReportMatrix,
    ScenarioConfig,
    StateVector,
    Synchronized,
    UnconstrainedMaxEntropy,
    Unsynchronized,
    expected_byzantine_fraction,
    honesty_from_dict,
    prior_from_dict,
    prior_p0_at,
    resolve_honesty,
    validate_config,
)


def _config(**kw):
    base = dict(n=20, m=4, state_prior=IIDPrior(), honesty_model=IndependentAlpha(0.3),
                attack_mode=Unsynchronized(), channel=ChannelParams(0.1, 1.0))
    base.update(kw)
    return ScenarioConfig(**base)


bit_arrays = st.integers(1, 6).flatmap(lambda m: st.integers(1, 6).flatmap(
    lambda n: st.lists(st.lists(st.integers(0, 1), min_size=n, max_size=n), min_size=m, max_size=m)))


class TestBitContainers:
    def test_state_vector_is_read_only(self):
        s = StateVector([0, 1, 1])
        assert s.m == 3
        with pytest.raises(ValueError):
            s.bits[0] = 1

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            StateVector([0, 2])
        with pytest.raises(ValueError):
            ReportMatrix([[0, 1], [1, 3]])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            StateVector([])

    def test_report_shape(self):
        r = ReportMatrix(np.zeros((4, 20), dtype=int))
        assert (r.m, r.n) == (4, 20)

    def test_honesty_count(self):
        h = HonestyVector([True, False, False, True])
        assert h.byzantine_count == 2
        assert h.n == 4

    @given(bit_arrays)
    @settings(max_examples=50)
    def test_report_dict_roundtrip(self, rows):
        r = ReportMatrix(rows)
        back = ReportMatrix.from_dict(json.loads(json.dumps(r.to_dict())))
        assert back == r
        assert hash(back) == hash(r)

    def test_equality_is_by_value(self):
        assert StateVector([1, 0]) == StateVector(np.array([1, 0]))
        assert StateVector([1, 0]) != StateVector([0, 1])
        assert len({StateVector([1, 0]), StateVector([1, 0])}) == 1

    def test_labeled_sample_shape_check(self):
        with pytest.raises(ValueError):
            LabeledSample(ReportMatrix(np.zeros((3, 2), int)), StateVector([0, 1]), "x")

    def test_fusion_decision_needs_one_score_per_bit(self):
        with pytest.raises(ValueError):
            FusionDecision(StateVector([0, 1]), np.array([0.5]), "maj")


class TestChannel:
    def test_literal_byzantine_flip(self):
        assert ChannelParams(0.1, 0.7).byzantine_flip == 0.7

    def test_noisy_observation_flip(self):
        c = ChannelParams(0.1, 0.7, flip_noisy_observation=True)
        assert c.byzantine_flip == pytest.approx(0.1 * 0.3 + 0.9 * 0.7)

    def test_pmal_zero_matches_honest(self):
        assert ChannelParams(0.2, 0.0, True).byzantine_flip == pytest.approx(0.2)


class TestPriors:
    def test_iid_marginal_constant(self):
        assert all(prior_p0_at(IIDPrior(0.3), i) == 0.3 for i in range(5))

    @pytest.mark.parametrize("rho", [0.0, 0.2, 0.5, 0.9, 1.0])
    def test_markov_marginal_matches_chain(self, rho):
        prior = MarkovPrior(rho, initial_p0=0.8)
        p = np.array([0.8, 0.2])
        step = np.array([[rho, 1 - rho], [1 - rho, rho]])
        for i in range(6):
            assert prior_p0_at(prior, i) == pytest.approx(p[0], abs=1e-12)
            p = p @ step

    def test_dict_roundtrip(self):
        for prior in (IIDPrior(0.3), MarkovPrior(0.7, 0.4)):
            assert prior_from_dict(prior.to_dict()) == prior

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            prior_from_dict({"kind": "gaussian"})


class TestHonestyModels:
    def test_unconstrained_resolves_to_half(self):
        assert resolve_honesty(UnconstrainedMaxEntropy()) == IndependentAlpha(0.5)

    def test_dict_roundtrip(self):
        for m in (IndependentAlpha(0.3), FixedK(4), MaxEntropyBounded(7), UnconstrainedMaxEntropy()):
            assert honesty_from_dict(m.to_dict()) == m

    def test_expected_fraction(self):
        assert expected_byzantine_fraction(IndependentAlpha(0.3), 20) == 0.3
        assert expected_byzantine_fraction(FixedK(5), 20) == 0.25
        assert expected_byzantine_fraction(UnconstrainedMaxEntropy(), 20) == 0.5

    def test_bounded_expected_fraction_by_enumeration(self):
        from math import comb
        n, h = 8, 4
        mean = sum(c * comb(n, c) for c in range(h)) / sum(comb(n, c) for c in range(h))
        assert expected_byzantine_fraction(MaxEntropyBounded(h), n) == pytest.approx(mean / n)


class TestValidation:
    def test_valid(self):
        assert validate_config(_config()) == []

    def test_k_exceeds_n(self):
        assert "k exceeds n: 25 > 20" in validate_config(_config(honesty_model=FixedK(25)))

    def test_epsilon_range(self):
        assert "epsilon out of range: 1.2" in validate_config(_config(channel=ChannelParams(1.2, 1.0)))

    def test_several_problems_reported_together(self):
        problems = validate_config(_config(m=0, channel=ChannelParams(-0.1, 2.0), honesty_model=MaxEntropyBounded(0)))
        assert len(problems) == 4

    def test_fake_prior_checked(self):
        assert validate_config(_config(attack_mode=Synchronized(IIDPrior(1.5))))

    def test_config_dict_roundtrip(self):
        c = _config(state_prior=MarkovPrior(0.9), honesty_model=MaxEntropyBounded(5),
                    attack_mode=Synchronized(IIDPrior(0.4)), channel=ChannelParams(0.05, 0.5, True),
                    label="x", honesty_scope="class")
        assert ScenarioConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c
