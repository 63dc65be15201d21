import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzfuse import neural
from byzfuse.core import ReportMatrix


def _spec(**kw):
    base = dict(input_size=8, hidden_sizes=(6, 5), output_size=2, batch_norm=True, seed=1)
    base.update(kw)
    return neural.NetworkSpec(**base)


def _data(rows=40, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=(rows, 8)).astype(float)
    y = np.stack([x[:, :4].sum(1) > 2, x[:, 4:].sum(1) > 1], axis=1).astype(float)
    return x, y


class TestSpec:
    def test_widths_and_params(self):
        s = _spec()
        assert s.widths == (8, 6, 5, 2)
        p = neural.init_network(s)
        # weights + biases + gamma/beta on both hidden layers
        assert p.parameter_count() == 8 * 6 + 6 + 6 * 5 + 5 + 5 * 2 + 2 + 2 * (6 + 5)

    def test_per_layer_batch_norm(self):
        p = neural.init_network(_spec(batch_norm=(True, False)))
        assert "layer0.gamma" in p.tensors and "layer1.gamma" not in p.tensors

    def test_bad_flags(self):
        with pytest.raises(ValueError):
            _spec(batch_norm=(True,))

    def test_for_window(self):
        s = neural.NetworkSpec.for_window(20, 4)
        assert (s.input_size, s.output_size, s.hidden_sizes) == (80, 4, neural.DESK_HIDDEN)

    def test_dict_roundtrip(self):
        s = _spec(batch_norm=(False, True))
        assert neural.NetworkSpec.from_dict(json.loads(json.dumps(s.to_dict()))) == s

    def test_init_is_seeded(self):
        assert neural.init_network(_spec()).equals(neural.init_network(_spec()))
        assert not neural.init_network(_spec()).equals(neural.init_network(_spec(seed=2)))


class TestForwardBackward:
    def test_output_range(self):
        x, _ = _data()
        out, _ = neural.forward(neural.init_network(_spec()), x)
        assert out.shape == (40, 2)
        assert np.all((out > 0) & (out < 1))

    def test_wrong_input_width(self):
        with pytest.raises(neural.DimensionError):
            neural.forward(neural.init_network(_spec()), np.zeros((3, 7)))

    def test_backward_needs_train_cache(self):
        p = neural.init_network(_spec())
        x, y = _data()
        out, cache = neural.forward(p, x, "infer")
        with pytest.raises(neural.UsageError):
            neural.backward(p, cache, out, y)

    def test_stale_cache_rejected(self):
        p = neural.init_network(_spec())
        x, y = _data()
        out, cache = neural.forward(p, x, "train")
        grads = neural.backward(p, cache, out, y)
        p2, _ = neural.adam_step(p, grads, None, neural.TrainConfig())
        with pytest.raises(neural.UsageError):
            neural.backward(p2, cache, out, y)

    def test_infer_uses_running_stats(self):
        # inference output of one row must not depend on the rest of the batch
        p = neural.init_network(_spec())
        x, _ = _data()
        full, _ = neural.forward(p, x)
        single, _ = neural.forward(p, x[:1])
        np.testing.assert_allclose(full[:1], single, rtol=0, atol=1e-15)

    def test_mse(self):
        assert neural.mse_loss(np.array([[0.5, 1.0]]), np.array([[0.0, 1.0]])) == pytest.approx(0.125)

    @pytest.mark.parametrize("bn", [True, False])
    def test_gradient_check(self, bn):
        report = neural.gradient_check(_spec(batch_norm=bn))
        assert report.passed, report.lines()


class TestAdam:
    def test_step_is_pure(self):
        p = neural.init_network(_spec())
        before = p.copy()
        grads = {k: np.ones_like(v) for k, v in p.tensors.items()}
        new, state = neural.adam_step(p, grads, None, neural.TrainConfig(learning_rate=0.01))
        assert p.equals(before)
        assert state.t == 1 and new.step == p.step + 1
        # first bias-corrected step moves every parameter by lr against the gradient sign
        for k in p.tensors:
            np.testing.assert_allclose(new.tensors[k], p.tensors[k] - 0.01, atol=1e-9)

    def test_dict_params(self):
        new, _ = neural.adam_step({"w": np.zeros(3)}, {"w": -np.ones(3)}, None, neural.TrainConfig())
        np.testing.assert_allclose(new["w"], 0.001, rtol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(neural.DimensionError):
            neural.adam_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, None, neural.TrainConfig())

    def test_training_loop_matches_pure_step(self):
        x, y = _data(rows=8)
        spec = _spec()
        cfg = neural.TrainConfig(epochs=1, batch_size=8, shuffle_seed=0)
        trained, _ = neural.train((x, y), spec, cfg)
        p = neural.init_network(spec)
        order = np.random.default_rng(0).permutation(8)
        out, cache = neural.forward(p, x[order], "train")
        grads = neural.backward(p, cache, out, y[order])
        stepped, _ = neural.adam_step(p, grads, None, cfg)
        for k in stepped.tensors:
            np.testing.assert_array_equal(trained.tensors[k], stepped.tensors[k])


class TestTraining:
    def test_learns_simple_rule(self):
        x, y = _data(rows=400)
        params, hist = neural.train((x, y), _spec(), neural.TrainConfig(epochs=60, batch_size=32, learning_rate=0.01))
        est, _ = neural.predict_batch(params, x)
        assert hist.losses[-1] < hist.losses[0]
        assert (est == y).mean() > 0.95

    def test_early_stop(self):
        x = np.zeros((16, 8))
        y = np.zeros((16, 2))
        _, hist = neural.train((x, y), _spec(), neural.TrainConfig(epochs=500, early_stop_loss=1e-3, learning_rate=0.05))
        assert len(hist) < 500 and hist.losses[-1] < 1e-3

    def test_deterministic(self):
        x, y = _data()
        cfg = neural.TrainConfig(epochs=3, batch_size=7, shuffle_seed=5)
        a, ha = neural.train((x, y), _spec(), cfg)
        b, hb = neural.train((x, y), _spec(), cfg)
        assert a.equals(b) and ha.losses == hb.losses

    def test_shape_errors(self):
        with pytest.raises(neural.DimensionError):
            neural.train((np.zeros((4, 3)), np.zeros((4, 2))), _spec(), neural.TrainConfig(epochs=1))
        with pytest.raises(ValueError):
            neural.train((np.zeros((0, 8)), np.zeros((0, 2))), _spec(), neural.TrainConfig(epochs=1))

    def test_validation_history(self):
        x, y = _data()
        _, hist = neural.train((x, y), _spec(), neural.TrainConfig(epochs=2), validation=(x, y))
        assert hist.epochs[-1].val_loss is not None

    def test_predict_decision(self):
        p = neural.init_network(_spec())
        d = neural.predict(p, ReportMatrix(np.zeros((2, 4), int)))
        assert d.rule_name == "dl" and d.estimate.m == 2
        with pytest.raises(neural.DimensionError):
            neural.predict(p, ReportMatrix(np.zeros((2, 3), int)))


class TestCheckpoint:
    def _trained(self):
        x, y = _data()
        return neural.train((x, y), _spec(), neural.TrainConfig(epochs=2))[0]

    def test_roundtrip_bit_exact(self, tmp_path):
        p = self._trained()
        back = neural.load_checkpoint(neural.save_checkpoint(p, tmp_path / "c.json"))
        assert back.equals(p) and back.spec == p.spec and back.step == p.step

    def test_float32_roundtrip(self, tmp_path):
        x, y = _data()
        p, _ = neural.train((x, y), _spec(dtype="float32"), neural.TrainConfig(epochs=1))
        back = neural.load_checkpoint(neural.save_checkpoint(p, tmp_path / "c.json"))
        assert back.equals(p)

    def test_tampered_value(self, tmp_path):
        path = neural.save_checkpoint(self._trained(), tmp_path / "c.json")
        doc = json.loads(path.read_text())
        doc["step"] += 1
        path.write_text(json.dumps(doc))
        with pytest.raises(neural.CheckpointCorruptError):
            neural.load_checkpoint(path)

    def test_not_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{oops")
        with pytest.raises(neural.CheckpointCorruptError):
            neural.load_checkpoint(tmp_path / "c.json")

    def test_version(self, tmp_path):
        path = neural.save_checkpoint(self._trained(), tmp_path / "c.json")
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(neural.CheckpointVersionError):
            neural.load_checkpoint(path)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
@settings(max_examples=100)
def test_relative_error_bounds(a, n):
    e = float(neural.relative_error(np.array(a), np.array(n)))
    assert 0.0 <= e <= 2.0
    assert float(neural.relative_error(np.array(a), np.array(a))) == 0.0
