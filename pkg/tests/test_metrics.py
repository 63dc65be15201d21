import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from byzfuse.core import StateVector
from byzfuse.metrics import evaluate


def test_known_values():
    pred = [StateVector([0, 0, 0, 0]), StateVector([1, 1, 0, 0]), StateVector([1, 1, 1, 1])]
    true = [StateVector([0, 0, 0, 0]), StateVector([1, 0, 0, 0]), StateVector([0, 0, 1, 1])]
    r = evaluate(pred, true)
    assert r.pe == pytest.approx(2 / 3)
    assert r.ber == pytest.approx((0 + 1 / 4 + 2 / 4) / 3)
    assert r.per_bit_error == pytest.approx(3 / 12)
    assert r.accuracy == pytest.approx(1 / 3)
    assert (r.sample_count, r.bit_count) == (3, 12)


def test_perfect():
    y = np.eye(4, dtype=int)
    r = evaluate(y, y)
    assert r.pe == 0.0 and r.accuracy == 1.0 and r.stderr_pe == 0.0


def test_ragged_lengths():
    r = evaluate([[0, 1], [1, 1, 1]], [[0, 0], [1, 1, 1]])
    assert r.ber == pytest.approx(0.25)
    assert r.per_bit_error == pytest.approx(1 / 5)


def test_errors():
    with pytest.raises(ValueError):
        evaluate([], [])
    with pytest.raises(ValueError):
        evaluate([[0]], [[0], [1]])
    with pytest.raises(ValueError):
        evaluate(np.zeros((2, 3)), np.zeros((2, 4)))


def test_stderr():
    pred = np.zeros((100, 1), int)
    true = np.zeros((100, 1), int)
    true[:10] = 1
    r = evaluate(pred, true)
    assert r.stderr_pe == pytest.approx(np.sqrt(0.1 * 0.9 / 100))


@given(arrays(np.int8, st.tuples(st.integers(1, 30), st.integers(1, 8)), elements=st.integers(0, 1)), st.data())
@settings(max_examples=100)
def test_identities(true, data):
    pred = data.draw(arrays(np.int8, true.shape, elements=st.integers(0, 1)))
    r = evaluate(pred, true)
    assert r.accuracy == 1.0 - r.pe
    # equal-length vectors: BER and pooled per-bit error coincide and never exceed pe
    assert r.ber == pytest.approx(r.per_bit_error)
    assert r.ber <= r.pe + 1e-12
    assert r.pe <= r.ber * true.shape[1] + 1e-12
