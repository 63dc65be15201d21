"""Classical fusion rules: majority, hard/soft isolation and exact MAP.

Every rule has a single-matrix entry point returning a
:class:`~byzfuse.core.FusionDecision` and a ``*_batch`` twin working on a
stack of report matrices of shape ``(B, m, n)`` for Monte Carlo runs. All
likelihood arithmetic is in the log domain; impossible events are ``-inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, xlogy

from .core import (
    CapacityError,
    ChannelParams,
    FixedK,
    FusionDecision,
    HonestyModel,
    IIDPrior,
    IndependentAlpha,
    MaxEntropyBounded,
    ReportMatrix,
    StatePrior,
    StateVector,
    prior_p0_at,
    resolve_honesty,
)

MAX_WINDOW = 16
MAX_WINDOW_SYNC = 10


@dataclass(frozen=True)
class LogLikelihoodPair:
    """Window log-likelihoods of one node column: honest (``log_a``) and Byzantine (``log_b``)."""

    log_a: float
    log_b: float


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def candidate_states(m: int) -> np.ndarray:
    """All ``2**m`` state vectors in lexicographic order, shape ``(2**m, m)``."""
    idx = np.arange(2**m)
    return ((idx[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.int8)


def _as_batch(reports) -> np.ndarray:
    r = np.asarray(reports.entries if isinstance(reports, ReportMatrix) else reports)
    if r.ndim == 2:
        r = r[None]
    return r.astype(np.int8)


# ---------------------------------------------------------------------------
# voting


def _prior_tiebreak(prior: StatePrior, m: int) -> np.ndarray:
    """Bit chosen on an exact tie at each time step: the likelier state, else 0."""
    p0 = np.array([prior_p0_at(prior, i) for i in range(m)])
    return (p0 < 0.5).astype(np.int8)


def _vote(ones: np.ndarray, total: np.ndarray, tie_bits: np.ndarray) -> np.ndarray:
    twice = 2 * ones
    return np.where(twice > total, 1, np.where(twice < total, 0, tie_bits)).astype(np.int8)


def majority_batch(reports, prior: StatePrior) -> tuple[np.ndarray, np.ndarray]:
    r = _as_batch(reports)
    _, m, n = r.shape
    ones = r.sum(axis=2)
    est = _vote(ones, np.full_like(ones, n), _prior_tiebreak(prior, m))
    return est, ones / n


def majority_fuse(reports: ReportMatrix, prior: StatePrior) -> FusionDecision:
    """Per-step majority vote; scores are the fractions of nodes reporting 1."""
    est, scores = majority_batch(reports, prior)
    return FusionDecision(StateVector(est[0]), scores[0], "maj")


# ---------------------------------------------------------------------------
# likelihood building blocks


def node_column_loglik(column, candidate, channel: ChannelParams) -> LogLikelihoodPair:
    col = np.asarray(column, dtype=np.int8)
    cand = np.asarray(candidate.bits if isinstance(candidate, StateVector) else candidate, dtype=np.int8)
    if col.shape != cand.shape:
        raise ValueError("column and candidate lengths differ")
    agree = int((col == cand).sum())
    disagree = col.size - agree
    q = channel.byzantine_flip
    log_a = xlogy(agree, 1 - channel.epsilon) + xlogy(disagree, channel.epsilon)
    log_b = xlogy(agree, 1 - q) + xlogy(disagree, q)
    return LogLikelihoodPair(float(log_a), float(log_b))


def _marginal_arrays(log_a: np.ndarray, log_b: np.ndarray, model: HonestyModel) -> np.ndarray:
    """Honesty-marginalized log-likelihood; node axis is the last one."""
    model = resolve_honesty(model)
    n = log_a.shape[-1]
    if isinstance(model, IndependentAlpha):
        terms = np.logaddexp(_log(1.0 - model.alpha) + log_a, _log(model.alpha) + log_b)
        return terms.sum(axis=-1)
    if isinstance(model, FixedK):
        top = model.k
    elif isinstance(model, MaxEntropyBounded):
        top = min(model.h - 1, n)
    else:
        raise TypeError(f"unsupported honesty model {model!r}")
    if top < 0 or top > n:
        return np.full(log_a.shape[:-1], -np.inf)
    # dp[..., c] = log of the elementary symmetric sum with c Byzantine nodes so far
    dp = np.full(log_a.shape[:-1] + (top + 1,), -np.inf)
    dp[..., 0] = 0.0
    for j in range(n):
        a = log_a[..., j, None]
        b = log_b[..., j, None]
        new = dp + a
        if top > 0:
            new[..., 1:] = np.logaddexp(new[..., 1:], dp[..., :-1] + b)
        dp = new
    if isinstance(model, FixedK):
        return dp[..., top]
    return logsumexp(dp, axis=-1)


def subset_marginal(log_pairs: Sequence[LogLikelihoodPair], model: HonestyModel) -> float:
    """log P(R | s) marginalized over honesty vectors.

    For the fixed-count and bounded models the constant uniform
    normalization over admissible honesty vectors is left out; it does not
    depend on ``s``.
    """
    la = np.array([p.log_a for p in log_pairs], dtype=float)
    lb = np.array([p.log_b for p in log_pairs], dtype=float)
    return float(_marginal_arrays(la, lb, model))


def honesty_log_normalizer(model: HonestyModel, n: int) -> float:
    """Log of the per-vector probability omitted by :func:`subset_marginal`."""
    model = resolve_honesty(model)
    if isinstance(model, IndependentAlpha):
        return 0.0
    if isinstance(model, FixedK):
        return -math.log(math.comb(n, model.k))
    return -math.log(sum(math.comb(n, c) for c in range(min(model.h, n + 1))))


def _log_prior_table(cands: np.ndarray, prior: StatePrior) -> np.ndarray:
    if isinstance(prior, IIDPrior):
        ones = cands.sum(axis=1)
        return xlogy(cands.shape[1] - ones, prior.p0) + xlogy(ones, 1 - prior.p0)
    first = np.where(cands[:, 0] == 0, _log(prior.initial_p0), _log(1 - prior.initial_p0))
    changes = (cands[:, 1:] != cands[:, :-1]).sum(axis=1)
    stays = cands.shape[1] - 1 - changes
    return first + xlogy(stays, prior.rho) + xlogy(changes, 1 - prior.rho)


def state_log_prior(candidate, prior: StatePrior) -> float:
    bits = np.asarray(candidate.bits if isinstance(candidate, StateVector) else candidate, dtype=np.int8)
    return float(_log_prior_table(bits[None], prior)[0])


def _column_logliks(r: np.ndarray, cands: np.ndarray, p_flip: float) -> np.ndarray:
    """Window log-likelihood for every (sample, candidate, node): shape ``(B, C, n)``."""
    m = r.shape[1]
    rf = r.astype(float)
    cf = cands.astype(float)
    agree = np.einsum("cm,bmn->bcn", cf, rf) + np.einsum("cm,bmn->bcn", 1 - cf, 1 - rf)
    return xlogy(agree, 1 - p_flip) + xlogy(m - agree, p_flip)


# ---------------------------------------------------------------------------
# MAP


def _decide(objective: np.ndarray, cands: np.ndarray):
    """Argmax (first = lexicographically smallest), normalized max and bit marginals."""
    best = np.argmax(objective, axis=1)
    lognorm = logsumexp(objective, axis=1)
    with np.errstate(invalid="ignore"):
        post = np.exp(objective - lognorm[:, None])
        best_log = objective[np.arange(len(best)), best] - lognorm
    dead = ~np.isfinite(lognorm)
    post[dead] = 1.0 / objective.shape[1]
    best_log[dead] = -np.inf
    scores = post @ cands.astype(float)
    return cands[best], scores, best_log


def map_objective_batch(reports, prior: StatePrior, model: HonestyModel, channel: ChannelParams) -> np.ndarray:
    """Unnormalized log P(R|s) P(s) for every candidate ``s``, shape ``(B, 2**m)``."""
    r = _as_batch(reports)
    cands = candidate_states(r.shape[1])
    la = _column_logliks(r, cands, channel.epsilon)
    lb = _column_logliks(r, cands, channel.byzantine_flip)
    return _marginal_arrays(la, lb, model) + _log_prior_table(cands, prior)[None]


def map_batch(reports, prior, model, channel, max_window: int = MAX_WINDOW, chunk: int = 0):
    """Batched MAP; returns ``(estimates, scores, log_posteriors)``."""
    r = _as_batch(reports)
    m = r.shape[1]
    if m > max_window:
        raise CapacityError(f"window m={m} exceeds the MAP enumeration limit max_window={max_window}")
    cands = candidate_states(m)
    if chunk <= 0:
        chunk = max(1, 2_000_000 // (len(cands) * r.shape[2]))
    outs = []
    for start in range(0, len(r), chunk):
        obj = map_objective_batch(r[start:start + chunk], prior, model, channel)
        outs.append(_decide(obj, cands))
    return tuple(np.concatenate(parts) for parts in zip(*outs))


def map_fuse(reports: ReportMatrix, prior: StatePrior, model: HonestyModel, channel: ChannelParams,
             max_window: int = MAX_WINDOW) -> FusionDecision:
    """Exact MAP estimate of the whole state vector by enumerating ``2**m`` candidates."""
    est, scores, best_log = map_batch(reports, prior, model, channel, max_window)
    return FusionDecision(StateVector(est[0]), scores[0], "opt", float(best_log[0]))


def map_sync_objective_batch(reports, prior, fake_prior, model, channel) -> np.ndarray:
    """Unnormalized log P(R|s,f) P(s) P(f) over pairs, shape ``(B, 2**m, 2**m)``."""
    r = _as_batch(reports)
    cands = candidate_states(r.shape[1])
    la = _column_logliks(r, cands, channel.epsilon)          # depends on s
    lb = _column_logliks(r, cands, channel.epsilon)          # depends on the fake sequence
    marg = _marginal_arrays(
        np.broadcast_to(la[:, :, None, :], la.shape[:2] + (len(cands),) + la.shape[2:]),
        np.broadcast_to(lb[:, None, :, :], lb.shape[:1] + (len(cands),) + lb.shape[1:]),
        model,
    )
    return (marg + _log_prior_table(cands, prior)[None, :, None]
            + _log_prior_table(cands, fake_prior)[None, None, :])


def map_sync_batch(reports, prior, fake_prior, model, channel, max_window: int = MAX_WINDOW_SYNC,
                   chunk: int = 0):
    """Batched joint MAP over (state, fake) pairs.

    Returns ``(estimates, fake_estimates, scores, log_posteriors)``; scores
    are state-bit marginals with the fake sequence summed out.
    """
    r = _as_batch(reports)
    m = r.shape[1]
    if m > max_window:
        raise CapacityError(f"window m={m} exceeds the synchronized MAP limit max_window={max_window}")
    cands = candidate_states(m)
    c = len(cands)
    if chunk <= 0:
        chunk = max(1, 4_000_000 // (c * c * r.shape[2]))
    ests, fakes, scores, logs = [], [], [], []
    for start in range(0, len(r), chunk):
        obj = map_sync_objective_batch(r[start:start + chunk], prior, fake_prior, model, channel)
        flat = obj.reshape(len(obj), c * c)
        best = np.argmax(flat, axis=1)  # row-major: s major, fake minor => lexicographic on (s, f)
        lognorm = logsumexp(flat, axis=1)
        with np.errstate(invalid="ignore"):
            best_log = flat[np.arange(len(best)), best] - lognorm
            post_s = np.exp(logsumexp(obj, axis=2) - lognorm[:, None])
        dead = ~np.isfinite(lognorm)
        post_s[dead] = 1.0 / c
        best_log[dead] = -np.inf
        ests.append(cands[best // c])
        fakes.append(cands[best % c])
        scores.append(post_s @ cands.astype(float))
        logs.append(best_log)
    return tuple(np.concatenate(x) for x in (ests, fakes, scores, logs))


def map_fuse_sync(reports: ReportMatrix, prior: StatePrior, fake_prior: StatePrior, model: HonestyModel,
                  channel: ChannelParams, max_window: int = MAX_WINDOW_SYNC) -> FusionDecision:
    """MAP under a synchronized attack: Byzantine columns are noisy copies of a shared fake sequence."""
    est, fake, scores, best_log = map_sync_batch(reports, prior, fake_prior, model, channel, max_window)
    return FusionDecision(StateVector(est[0]), scores[0], "opt-sync", float(best_log[0]),
                          fake_estimate=StateVector(fake[0]))


# ---------------------------------------------------------------------------
# isolation baselines


def hardis_batch(reports, prior: StatePrior, channel: ChannelParams, threshold_margin: float = 2.0):
    """Batched hard isolation; returns ``(estimates, scores, isolated_mask)``."""
    r = _as_batch(reports)
    _, m, n = r.shape
    tie = _prior_tiebreak(prior, m)
    prelim, _ = majority_batch(r, prior)
    mismatches = (r != prelim[:, :, None]).sum(axis=1)
    eps = channel.epsilon
    threshold = m * eps + threshold_margin * math.sqrt(m * eps * (1 - eps))
    isolated = mismatches > threshold
    keep = (~isolated).astype(np.int64)
    ones = np.einsum("bmn,bn->bm", r.astype(np.int64), keep)
    total = np.broadcast_to(keep.sum(axis=1)[:, None], ones.shape)
    est = _vote(ones, total, tie)
    nobody = total == 0
    est = np.where(nobody, prelim, est).astype(np.int8)
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(nobody, r.mean(axis=2), ones / np.maximum(total, 1))
    return est, scores, isolated


def hardis_fuse(reports: ReportMatrix, prior: StatePrior, channel: ChannelParams,
                threshold_margin: float = 2.0) -> FusionDecision:
    """Majority, isolate nodes that disagree with it too often, then re-vote."""
    est, scores, _ = hardis_batch(reports, prior, channel, threshold_margin)
    return FusionDecision(StateVector(est[0]), scores[0], "hardis")


def softis_weights(reports, prior: StatePrior, channel: ChannelParams, assumed_alpha: float) -> np.ndarray:
    """Posterior honesty weight of every node, shape ``(B, n)``.

    Mismatch counts against the preliminary majority decision are scored
    with binomial likelihoods (honest rate ``epsilon``, Byzantine rate
    ``channel.byzantine_flip``); the binomial coefficients cancel.
    """
    r = _as_batch(reports)
    m = r.shape[1]
    prelim, _ = majority_batch(r, prior)
    eta = (r != prelim[:, :, None]).sum(axis=1)
    q = channel.byzantine_flip
    eps = channel.epsilon
    log_h = _log(1 - assumed_alpha) + xlogy(eta, eps) + xlogy(m - eta, 1 - eps)
    log_b = _log(assumed_alpha) + xlogy(eta, q) + xlogy(m - eta, 1 - q)
    log_norm = np.logaddexp(log_h, log_b)
    with np.errstate(invalid="ignore"):
        w = np.exp(log_h - log_norm)
    # both hypotheses impossible: fall back to an uninformative weight
    return np.where(np.isfinite(log_norm), w, 0.5)


def softis_batch(reports, prior: StatePrior, channel: ChannelParams, assumed_alpha: float,
                 combine: str = "llr"):
    """Batched soft isolation; returns ``(estimates, scores)``.

    ``combine="vote"`` decides by the sign of ``sum_j w_j (2 r_ij - 1)``.
    ``combine="llr"`` (default) weighs each report by the log-likelihood
    ratio of a node that is honest with probability ``w_j``, so nodes that
    are probably Byzantine count *against* their own report when the
    Byzantine channel flips more often than not.
    """
    r = _as_batch(reports)
    m = r.shape[1]
    w = softis_weights(r, prior, channel, assumed_alpha)
    if combine == "vote":
        node_weight = w
    elif combine == "llr":
        p_agree = w * (1 - channel.epsilon) + (1 - w) * (1 - channel.byzantine_flip)
        node_weight = _log(p_agree) - _log(1 - p_agree)
        # certain nodes would give +/-inf; clip so that one of them dominates without nan sums
        node_weight = np.clip(node_weight, -1e6, 1e6)
    else:
        raise ValueError(f"unknown combine mode {combine!r}")
    signed = np.einsum("bmn,bn->bm", 2.0 * r - 1.0, node_weight)
    tie = _prior_tiebreak(prior, m)
    est = np.where(signed > 0, 1, np.where(signed < 0, 0, tie)).astype(np.int8)
    wsum = w.sum(axis=1)[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(wsum > 0, np.einsum("bmn,bn->bm", r.astype(float), w) / np.where(wsum > 0, wsum, 1), 0.5)
    return est, scores


def softis_fuse(reports: ReportMatrix, prior: StatePrior, channel: ChannelParams,
                assumed_alpha: float, combine: str = "llr") -> FusionDecision:
    """Weighted vote where each node counts by its posterior probability of being honest."""
    est, scores = softis_batch(reports, prior, channel, assumed_alpha, combine)
    return FusionDecision(StateVector(est[0]), scores[0], "softis")
