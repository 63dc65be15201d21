"""Domain types shared across the package.

Conventions used everywhere:

* bits are ``0``/``1`` integers (never +/-1);
* a report matrix has shape ``(m, n)``: row ``i`` is time step ``i``,
  column ``j`` is node ``j``;
* all types are frozen dataclasses holding immutable data, so they can be
  shared freely between workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np


class ConfigError(ValueError):
    """Raised when a scenario, plan or dataset is internally inconsistent."""


class CapacityError(RuntimeError):
    """Raised when an exhaustive search would exceed its configured limit."""


def _as_bits(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.int8, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d bit array, got shape {arr.shape}")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("bit arrays may only contain 0 and 1")
    arr.setflags(write=False)
    return arr


def _check_prob(name: str, value: float, problems: list[str]) -> None:
    if not (isinstance(value, (int, float)) and 0.0 <= value <= 1.0):
        problems.append(f"{name} out of range: {value!r}")


# ---------------------------------------------------------------------------
# bit containers


@dataclass(frozen=True, eq=False)
class StateVector:
    """Hidden binary system state over an observation window."""

    bits: np.ndarray

    def __post_init__(self):
        bits = _as_bits(self.bits, 1)
        if bits.size < 1:
            raise ValueError("state vector needs m >= 1")
        object.__setattr__(self, "bits", bits)

    @property
    def m(self) -> int:
        return self.bits.size

    def __len__(self):
        return self.bits.size

    def __eq__(self, other):
        return isinstance(other, StateVector) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self):
        return f"StateVector({''.join(map(str, self.bits.tolist()))})"

    def to_dict(self) -> dict:
        return {"bits": self.bits.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StateVector":
        return cls(d["bits"])


@dataclass(frozen=True, eq=False)
class ReportMatrix:
    """The ``(m, n)`` binary matrix of reports seen by the fusion center."""

    entries: np.ndarray

    def __post_init__(self):
        entries = _as_bits(self.entries, 2)
        if entries.shape[0] < 1 or entries.shape[1] < 1:
            raise ValueError("report matrix needs m >= 1 and n >= 1")
        object.__setattr__(self, "entries", entries)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def __eq__(self, other):
        return isinstance(other, ReportMatrix) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash((self.entries.shape, self.entries.tobytes()))

    def to_dict(self) -> dict:
        return {"entries": self.entries.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ReportMatrix":
        return cls(d["entries"])


@dataclass(frozen=True, eq=False)
class HonestyVector:
    """Per-node honesty flags (True = honest). Only generators produce these."""

    flags: np.ndarray

    def __post_init__(self):
        flags = np.array(self.flags, dtype=bool, copy=True)
        if flags.ndim != 1:
            raise ValueError("honesty flags must be 1-d")
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @property
    def n(self) -> int:
        return self.flags.size

    @property
    def byzantine_count(self) -> int:
        return int((~self.flags).sum())

    def __eq__(self, other):
        return isinstance(other, HonestyVector) and np.array_equal(self.flags, other.flags)

    def __hash__(self):
        return hash(self.flags.tobytes())

    def to_dict(self) -> dict:
        return {"flags": self.flags.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HonestyVector":
        return cls(d["flags"])


# ---------------------------------------------------------------------------
# generative parameters


@dataclass(frozen=True)
class ChannelParams:
    """Honest error rate and Byzantine flip probability.

    With ``flip_noisy_observation`` a Byzantine node flips its own noisy
    observation instead of the true state, so its effective probability of
    disagreeing with the state becomes ``eps*(1-p_mal) + (1-eps)*p_mal``.
    """

    epsilon: float = 0.1
    p_mal: float = 1.0
    flip_noisy_observation: bool = False

    @property
    def byzantine_flip(self) -> float:
        """Probability that a Byzantine report differs from the true state."""
        if self.flip_noisy_observation:
            return self.epsilon * (1.0 - self.p_mal) + (1.0 - self.epsilon) * self.p_mal
        return self.p_mal

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "p_mal": self.p_mal,
                "flip_noisy_observation": self.flip_noisy_observation}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelParams":
        return cls(float(d["epsilon"]), float(d["p_mal"]), bool(d.get("flip_noisy_observation", False)))


@dataclass(frozen=True)
class IIDPrior:
    p0: float = 0.5

    def to_dict(self) -> dict:
        return {"kind": "iid", "p0": self.p0}


@dataclass(frozen=True)
class MarkovPrior:
    """Two-state chain; ``rho`` is the probability of *staying* in the same state."""

    rho: float
    initial_p0: float = 0.5

    def to_dict(self) -> dict:
        return {"kind": "markov", "rho": self.rho, "initial_p0": self.initial_p0}


StatePrior = Union[IIDPrior, MarkovPrior]


def prior_from_dict(d: dict) -> StatePrior:
    if d["kind"] == "iid":
        return IIDPrior(float(d["p0"]))
    if d["kind"] == "markov":
        return MarkovPrior(float(d["rho"]), float(d.get("initial_p0", 0.5)))
    raise ConfigError(f"unknown prior kind {d['kind']!r}")


def prior_p0_at(prior: StatePrior, i: int) -> float:
    """Marginal probability that ``s_i`` (0-based) is 0 under ``prior``."""
    if isinstance(prior, IIDPrior):
        return prior.p0
    # symmetric chain: deviation from 1/2 decays by (2 rho - 1) per step
    return 0.5 + (prior.initial_p0 - 0.5) * (2.0 * prior.rho - 1.0) ** i


@dataclass(frozen=True)
class IndependentAlpha:
    alpha: float

    def to_dict(self) -> dict:
        return {"kind": "alpha", "alpha": self.alpha}


@dataclass(frozen=True)
class FixedK:
    k: int

    def to_dict(self) -> dict:
        return {"kind": "fixed_k", "k": self.k}


@dataclass(frozen=True)
class MaxEntropyBounded:
    """Uniform over honesty vectors whose Byzantine count is strictly below ``h``."""

    h: int

    def to_dict(self) -> dict:
        return {"kind": "max_entropy_bounded", "h": self.h}


@dataclass(frozen=True)
class UnconstrainedMaxEntropy:
    def to_dict(self) -> dict:
        return {"kind": "max_entropy"}


HonestyModel = Union[IndependentAlpha, FixedK, MaxEntropyBounded, UnconstrainedMaxEntropy]


def honesty_from_dict(d: dict) -> HonestyModel:
    kind = d["kind"]
    if kind == "alpha":
        return IndependentAlpha(float(d["alpha"]))
    if kind == "fixed_k":
        return FixedK(int(d["k"]))
    if kind == "max_entropy_bounded":
        return MaxEntropyBounded(int(d["h"]))
    if kind == "max_entropy":
        return UnconstrainedMaxEntropy()
    raise ConfigError(f"unknown honesty model {kind!r}")


def resolve_honesty(model: HonestyModel) -> HonestyModel:
    """Replace the unconstrained max-entropy case by its Bernoulli(1/2) equivalent."""
    if isinstance(model, UnconstrainedMaxEntropy):
        return IndependentAlpha(0.5)
    return model


def expected_byzantine_fraction(model: HonestyModel, n: int) -> float:
    model = resolve_honesty(model)
    if isinstance(model, IndependentAlpha):
        return model.alpha
    if isinstance(model, FixedK):
        return model.k / n
    counts = np.arange(model.h)
    w = np.array([math.comb(n, int(c)) for c in counts], dtype=float)
    return float((w * counts).sum() / w.sum() / n)


@dataclass(frozen=True)
class Unsynchronized:
    def to_dict(self) -> dict:
        return {"kind": "unsync"}


@dataclass(frozen=True)
class Synchronized:
    """Byzantines report noisy copies of one shared fake sequence drawn from ``fake_prior``."""

    fake_prior: StatePrior = field(default_factory=IIDPrior)

    def to_dict(self) -> dict:
        return {"kind": "sync", "fake_prior": self.fake_prior.to_dict()}


AttackMode = Union[Unsynchronized, Synchronized]


def attack_from_dict(d: dict) -> AttackMode:
    if d["kind"] == "unsync":
        return Unsynchronized()
    if d["kind"] == "sync":
        return Synchronized(prior_from_dict(d["fake_prior"]))
    raise ConfigError(f"unknown attack mode {d['kind']!r}")


HONESTY_SCOPES = ("sample", "class")


@dataclass(frozen=True)
class ScenarioConfig:
    """Full generative description of one adversarial configuration.

    ``honesty_scope`` selects whether the honesty vector is redrawn for
    every sample (``"sample"``) or drawn once and shared by every sample of
    the class (``"class"``, i.e. the Byzantine placement is part of the
    configuration).
    """

    n: int
    m: int
    state_prior: StatePrior = field(default_factory=IIDPrior)
    honesty_model: HonestyModel = field(default_factory=lambda: IndependentAlpha(0.0))
    attack_mode: AttackMode = field(default_factory=Unsynchronized)
    channel: ChannelParams = field(default_factory=ChannelParams)
    label: str = ""
    honesty_scope: str = "sample"

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n": self.n,
            "m": self.m,
            "state_prior": self.state_prior.to_dict(),
            "honesty_model": self.honesty_model.to_dict(),
            "attack_mode": self.attack_mode.to_dict(),
            "channel": self.channel.to_dict(),
            "honesty_scope": self.honesty_scope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(
            n=int(d["n"]),
            m=int(d["m"]),
            state_prior=prior_from_dict(d["state_prior"]),
            honesty_model=honesty_from_dict(d["honesty_model"]),
            attack_mode=attack_from_dict(d["attack_mode"]),
            channel=ChannelParams.from_dict(d["channel"]),
            label=str(d.get("label", "")),
            honesty_scope=str(d.get("honesty_scope", "sample")),
        )


def validate_config(config: ScenarioConfig) -> list[str]:
    """Return every invariant violation of ``config`` (empty list when usable)."""
    problems: list[str] = []
    if not (isinstance(config.n, int) and config.n >= 1):
        problems.append(f"n must be a positive integer: {config.n!r}")
    if not (isinstance(config.m, int) and config.m >= 1):
        problems.append(f"m must be a positive integer: {config.m!r}")

    _check_prob("epsilon", config.channel.epsilon, problems)
    _check_prob("p_mal", config.channel.p_mal, problems)

    priors = [("state prior", config.state_prior)]
    if isinstance(config.attack_mode, Synchronized):
        priors.append(("fake prior", config.attack_mode.fake_prior))
    for name, prior in priors:
        if isinstance(prior, IIDPrior):
            _check_prob(f"{name} p0", prior.p0, problems)
        elif isinstance(prior, MarkovPrior):
            _check_prob(f"{name} rho", prior.rho, problems)
            _check_prob(f"{name} initial_p0", prior.initial_p0, problems)
        else:
            problems.append(f"{name} has unknown type {type(prior).__name__}")

    model = config.honesty_model
    n = config.n if isinstance(config.n, int) else 0
    if isinstance(model, IndependentAlpha):
        _check_prob("alpha", model.alpha, problems)
    elif isinstance(model, FixedK):
        if model.k < 0:
            problems.append(f"k must be non-negative: {model.k}")
        elif model.k > n:
            problems.append(f"k exceeds n: {model.k} > {n}")
    elif isinstance(model, MaxEntropyBounded):
        if not 1 <= model.h <= n + 1:
            problems.append(f"h out of range [1, n+1]: {model.h}")
    elif not isinstance(model, UnconstrainedMaxEntropy):
        problems.append(f"unknown honesty model {type(model).__name__}")

    if not isinstance(config.attack_mode, (Unsynchronized, Synchronized)):
        problems.append(f"unknown attack mode {type(config.attack_mode).__name__}")
    if config.honesty_scope not in HONESTY_SCOPES:
        problems.append(f"honesty_scope must be one of {HONESTY_SCOPES}: {config.honesty_scope!r}")
    return problems


# ---------------------------------------------------------------------------
# samples and decisions


@dataclass(frozen=True)
class LabeledSample:
    reports: ReportMatrix
    truth: StateVector
    config_label: str
    fake_sequence: Optional[StateVector] = None

    def __post_init__(self):
        if self.reports.m != self.truth.m:
            raise ValueError("report rows and truth length disagree")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "config_label": self.config_label,
            "truth": self.truth.to_dict(),
            "reports": self.reports.to_dict(),
        }
        if self.fake_sequence is not None:
            d["fake_sequence"] = self.fake_sequence.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledSample":
        fake = d.get("fake_sequence")
        return cls(
            ReportMatrix.from_dict(d["reports"]),
            StateVector.from_dict(d["truth"]),
            d["config_label"],
            StateVector.from_dict(fake) if fake is not None else None,
        )


@dataclass(frozen=True, eq=False)
class FusionDecision:
    """Estimated state vector with per-bit scores.

    ``log_objective`` is the maximized log posterior (normalized over all
    candidates) for the MAP rules and ``None`` otherwise; ``fake_estimate``
    is only filled in by the synchronized MAP rule.
    """

    estimate: StateVector
    scores: np.ndarray
    rule_name: str
    log_objective: Optional[float] = None
    fake_estimate: Optional[StateVector] = None

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float, copy=True)
        if scores.shape != (self.estimate.m,):
            raise ValueError("one score per state bit is required")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    def __eq__(self, other):
        return (
            isinstance(other, FusionDecision)
            and self.estimate == other.estimate
            and np.array_equal(self.scores, other.scores)
            and self.rule_name == other.rule_name
            and self.log_objective == other.log_objective
            and self.fake_estimate == other.fake_estimate
        )

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate.to_dict(),
            "scores": [float(x) for x in self.scores],
            "rule_name": self.rule_name,
            "log_objective": self.log_objective,
            "fake_estimate": None if self.fake_estimate is None else self.fake_estimate.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionDecision":
        fake = d.get("fake_estimate")
        return cls(
            StateVector.from_dict(d["estimate"]),
            np.array(d["scores"], dtype=float),
            d["rule_name"],
            d.get("log_objective"),
            StateVector.from_dict(fake) if fake is not None else None,
        )
