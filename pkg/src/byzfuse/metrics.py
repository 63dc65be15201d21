"""Error probability, bit error rate and accuracy of state-vector estimates."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import StateVector

TABLE_SAMPLE_FLOOR = 10_000


@dataclass(frozen=True)
class MetricsReport:
    pe: float
    ber: float
    accuracy: float
    per_bit_error: float
    sample_count: int
    bit_count: int
    stderr_pe: float
    stderr_per_bit: float

    def to_dict(self) -> dict:
        return asdict(self)


def _stderr(p: float, count: int) -> float:
    return math.sqrt(p * (1.0 - p) / count)


def _stack(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        return vectors
    rows = [v.bits if isinstance(v, StateVector) else np.asarray(v) for v in vectors]
    lengths = {len(r) for r in rows}
    if len(lengths) == 1:
        return np.stack(rows)
    return np.array(rows, dtype=object)


def evaluate(predictions, truths) -> MetricsReport:
    """Vector error probability, BER, pooled per-bit error and accuracy.

    Accepts sequences of :class:`StateVector` (or bit sequences) or 2-d
    arrays. A vector counts as misclassified when any bit differs.
    """
    if len(predictions) != len(truths):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(truths)} truths")
    if len(truths) == 0:
        raise ValueError("cannot evaluate an empty list")
    pred = _stack(predictions)
    true = _stack(truths)
    if pred.dtype != object and true.dtype != object:
        if pred.shape != true.shape:
            raise ValueError("prediction and truth vectors have different lengths")
        wrong = pred != true
        wrong_bits = wrong.sum(axis=1)
        lengths = np.full(len(wrong), wrong.shape[1])
    else:
        pairs = list(zip(pred, true))
        if any(len(p) != len(t) for p, t in pairs):
            raise ValueError("prediction and truth vectors have different lengths")
        wrong_bits = np.array([int((np.asarray(p) != np.asarray(t)).sum()) for p, t in pairs])
        lengths = np.array([len(t) for _, t in pairs])

    count = len(wrong_bits)
    pe = float((wrong_bits > 0).mean())
    ber = float((wrong_bits / lengths).mean())
    total_bits = int(lengths.sum())
    per_bit = float(wrong_bits.sum() / total_bits)
    return MetricsReport(
        pe=pe,
        ber=ber,
        accuracy=1.0 - pe,
        per_bit_error=per_bit,
        sample_count=count,
        bit_count=total_bits,
        stderr_pe=_stderr(pe, count),
        stderr_per_bit=_stderr(per_bit, total_bits),
    )
