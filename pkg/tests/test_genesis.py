from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzfuse.core import (
    ChannelParams,
    ConfigError,
    FixedK,
    IIDPrior,
    IndependentAlpha,
    MarkovPrior,
    MaxEntropyBounded,
    ScenarioConfig,
    Synchronized,
    Unsynchronized,
    prior_p0_at,
)
from byzfuse.genesis import (
    Rng,
    build_dataset,
    generate_batch,
    generate_sample,
    global_recipe,
    load_dataset,
    sample_honesty,
    sample_state_vector,
    save_dataset,
    split_dataset,
)


def _config(**kw):
    base = dict(n=10, m=4, state_prior=IIDPrior(), honesty_model=IndependentAlpha(0.3),
                attack_mode=Unsynchronized(), channel=ChannelParams(0.1, 1.0), label="c")
    base.update(kw)
    return ScenarioConfig(**base)


def _within_3se(freq, p, count):
    return abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / count) + 1e-12


class TestRng:
    def test_same_seed_same_stream(self):
        np.testing.assert_array_equal(Rng(5).random(10), Rng(5).random(10))

    def test_fork_ignores_parent_draws(self):
        a = Rng(5)
        a.random(100)
        np.testing.assert_array_equal(a.fork(1, 2).random(5), Rng(5).fork(1, 2).random(5))

    def test_forks_differ(self):
        assert not np.array_equal(Rng(5).fork(1).random(5), Rng(5).fork(2).random(5))


class TestHonesty:
    @given(st.integers(1, 30), st.data())
    @settings(max_examples=40)
    def test_fixed_k_exact(self, n, data):
        k = data.draw(st.integers(0, n))
        h = sample_honesty(FixedK(k), n, Rng(n, (k,)))
        assert h.byzantine_count == k

    @given(st.integers(1, 30), st.data())
    @settings(max_examples=40)
    def test_bounded_below_h(self, n, data):
        h = data.draw(st.integers(1, n + 1))
        for t in range(5):
            assert sample_honesty(MaxEntropyBounded(h), n, Rng(t, (n, h))).byzantine_count < h

    def test_bounded_count_distribution(self):
        # uniform over admissible vectors: P(count = c) is proportional to C(n, c)
        n, h, draws = 8, 4, 20_000
        counts = np.bincount([sample_honesty(MaxEntropyBounded(h), n, Rng(3, (t,))).byzantine_count
                              for t in range(draws)], minlength=h)
        z = sum(comb(n, c) for c in range(h))
        for c in range(h):
            assert _within_3se(counts[c] / draws, comb(n, c) / z, draws)

    def test_alpha_rate(self):
        flags = np.concatenate([sample_honesty(IndependentAlpha(0.3), 20, Rng(1, (t,))).flags for t in range(1000)])
        assert _within_3se(1 - flags.mean(), 0.3, flags.size)


class TestStates:
    def test_markov_rho_one_is_constant(self):
        for t in range(20):
            bits = sample_state_vector(MarkovPrior(1.0), 8, Rng(t)).bits
            assert len(set(bits)) == 1

    def test_markov_rho_zero_alternates(self):
        bits = sample_state_vector(MarkovPrior(0.0), 8, Rng(1)).bits
        assert np.all(bits[1:] != bits[:-1])

    def test_markov_marginal(self):
        prior = MarkovPrior(0.8, initial_p0=0.9)
        draws = np.stack([sample_state_vector(prior, 5, Rng(2, (t,))).bits for t in range(20_000)])
        for i in range(5):
            assert _within_3se((draws[:, i] == 0).mean(), prior_p0_at(prior, i), len(draws))


class TestGeneration:
    def test_sample_is_reproducible(self):
        a = generate_sample(_config(), Rng(3))
        b = generate_sample(_config(), Rng(3))
        assert a.reports == b.reports and a.truth == b.truth

    def test_batch_shapes(self):
        truth, reports = generate_batch(_config(), 7, Rng(0))
        assert truth.shape == (7, 4) and reports.shape == (7, 4, 10)

    def test_noiseless_honest_copy(self):
        cfg = _config(honesty_model=IndependentAlpha(0.0), channel=ChannelParams(0.0, 1.0))
        truth, reports = generate_batch(cfg, 50, Rng(0))
        np.testing.assert_array_equal(reports, np.repeat(truth[:, :, None], 10, axis=2))

    def test_all_byzantine_literal_flip(self):
        cfg = _config(honesty_model=IndependentAlpha(1.0), channel=ChannelParams(0.0, 1.0))
        truth, reports = generate_batch(cfg, 50, Rng(0))
        np.testing.assert_array_equal(reports, 1 - np.repeat(truth[:, :, None], 10, axis=2))

    def test_sync_byzantines_copy_fake(self):
        cfg = _config(honesty_model=FixedK(4), attack_mode=Synchronized(IIDPrior()), channel=ChannelParams(0.0, 1.0))
        s = generate_sample(cfg, Rng(9))
        cols = s.reports.entries.T
        byz_cols = [c for c in cols if not np.array_equal(c, s.truth.bits)]
        assert all(np.array_equal(c, s.fake_sequence.bits) for c in byz_cols)

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            generate_sample(_config(honesty_model=FixedK(11)), Rng(0))


class TestDataset:
    def test_class_scope_fixes_placement(self):
        cfg = _config(honesty_model=FixedK(3), channel=ChannelParams(0.0, 1.0), honesty_scope="class")
        ds = build_dataset([cfg], 30, master_seed=1)
        byz = ~ds.class_honesty["c"].flags
        for s in ds.samples:
            flipped = s.reports.entries != s.truth.bits[:, None]
            assert not flipped[:, ~byz].any()
            assert flipped[:, byz].all()

    def test_arrays_layout(self):
        ds = build_dataset([_config()], 5, master_seed=0)
        x, y = ds.arrays()
        assert x.shape == (5, 40) and y.shape == (5, 4)
        np.testing.assert_array_equal(x[0].reshape(4, 10), ds.samples[0].reports.entries)

    def test_mixed_shapes_rejected(self):
        with pytest.raises(ConfigError):
            build_dataset([_config(), _config(m=3, label="d")], 2)

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ConfigError):
            build_dataset([_config(), _config()], 2)

    def test_global_recipe_size(self):
        configs = global_recipe(20, 4)
        assert len(configs) == 76
        assert len({c.label for c in configs}) == 76
        assert all(c.honesty_scope == "class" for c in configs)

    def test_global_recipe_small_n_dedupes_h(self):
        labels = [c.label for c in global_recipe(3, 2) if c.label.startswith("maxent")]
        assert labels == ["maxent-h1"]

    def test_split_sizes_and_disjoint(self):
        ds = build_dataset([_config()], 101, master_seed=2)
        tr, te = split_dataset(ds, 0.8, Rng(0))
        assert len(tr) == 80 and len(te) == 21
        ids = {id(s) for s in tr.samples} & {id(s) for s in te.samples}
        assert not ids

    def test_split_fraction_bounds(self):
        ds = build_dataset([_config()], 10)
        with pytest.raises(ConfigError):
            split_dataset(ds, 1.0, Rng(0))

    def test_save_load_roundtrip(self, tmp_path):
        cfgs = [_config(attack_mode=Synchronized(IIDPrior(0.3)), honesty_scope="class"),
                _config(state_prior=MarkovPrior(0.7), label="d")]
        ds = build_dataset(cfgs, 6, master_seed=4)
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert back.configs == ds.configs
        assert [s.reports for s in back.samples] == [s.reports for s in ds.samples]
        assert [s.truth for s in back.samples] == [s.truth for s in ds.samples]
        assert back.labels() == ds.labels()

    def test_load_rejects_bad_header(self, tmp_path):
        ds = build_dataset([_config()], 2)
        save_dataset(ds, tmp_path)
        text = (tmp_path / "samples.txt").read_text().splitlines()
        (tmp_path / "samples.txt").write_text("\n".join(["# something else"] + text[1:]) + "\n")
        with pytest.raises(ConfigError):
            load_dataset(tmp_path)
