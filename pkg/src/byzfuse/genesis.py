"""Seeded generation of states, honesty assignments, report matrices and datasets."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    ChannelParams,
    ConfigError,
    FixedK,
    HonestyModel,
    HonestyVector,
    IIDPrior,
    IndependentAlpha,
    LabeledSample,
    MarkovPrior,
    MaxEntropyBounded,
    ReportMatrix,
    ScenarioConfig,
    StatePrior,
    StateVector,
    Synchronized,
    Unsynchronized,
    resolve_honesty,
    validate_config,
)

SCHEMA_VERSION = 1
DEFAULT_SAMPLES_PER_CLASS = 200

# spawn-key tags for streams that are not tied to a sample index
_HONESTY_STREAM = 1 << 30


class Rng:
    """Explicitly seeded PCG64 stream that can fork independent children.

    A child is identified by the parent's key path plus the extra integers
    given to :meth:`fork`, so ``Rng(7).fork(2, 5)`` always yields the same
    stream regardless of what else has been drawn from the parent.
    """

    def __init__(self, seed: int, key: Sequence[int] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def fork(self, *key: int) -> "Rng":
        return Rng(self.seed, self.key + tuple(key))

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"


# ---------------------------------------------------------------------------
# primitive draws


def _sample_states(prior: StatePrior, m: int, u: np.ndarray) -> np.ndarray:
    """Map uniforms ``u`` of shape ``(..., m)`` to state bits."""
    if isinstance(prior, IIDPrior):
        return (u >= prior.p0).astype(np.int8)
    s = np.empty(u.shape, dtype=np.int8)
    s[..., 0] = u[..., 0] >= prior.initial_p0
    # a transition flips the previous state with probability 1 - rho
    flips = (u[..., 1:] >= prior.rho).astype(np.int8)
    if m > 1:
        s[..., 1:] = (s[..., :1] + np.cumsum(flips, axis=-1)) % 2
    return s


def sample_state_vector(prior: StatePrior, m: int, rng: Rng) -> StateVector:
    """Draw ``s`` from an i.i.d. or two-state Markov prior."""
    return StateVector(_sample_states(prior, m, rng.random(m)))


def _byzantine_count_weights(n: int, h: int) -> np.ndarray:
    # uniform over vectors with count < h  =>  P(count = c) proportional to C(n, c)
    logw = np.array([math.lgamma(n + 1) - math.lgamma(c + 1) - math.lgamma(n - c + 1) for c in range(h)])
    w = np.exp(logw - logw.max())
    return w / w.sum()


def sample_honesty(model: HonestyModel, n: int, rng: Rng) -> HonestyVector:
    """Draw an honesty vector (True = honest) from ``model``."""
    model = resolve_honesty(model)
    if isinstance(model, IndependentAlpha):
        return HonestyVector(rng.random(n) >= model.alpha)
    if isinstance(model, FixedK):
        k = model.k
    elif isinstance(model, MaxEntropyBounded):
        w = _byzantine_count_weights(n, model.h)
        k = int(np.searchsorted(np.cumsum(w), rng.random(), side="right"))
        k = min(k, model.h - 1)
    else:
        raise ConfigError(f"unsupported honesty model {model!r}")
    flags = np.ones(n, dtype=bool)
    flags[rng.permutation(n)[:k]] = False
    return HonestyVector(flags)


def honest_report(s_i, epsilon: float, rng: Rng):
    """Honest channel: keep the state with probability ``1 - epsilon``.

    Works on scalars or arrays of bits.
    """
    s = np.asarray(s_i, dtype=np.int8)
    out = s ^ (rng.random(s.shape) < epsilon)
    return int(out) if out.ndim == 0 else out.astype(np.int8)


def byzantine_report_unsync(s_i, channel: ChannelParams, rng: Rng):
    """Unsynchronized Byzantine channel, flipping with ``channel.byzantine_flip``."""
    s = np.asarray(s_i, dtype=np.int8)
    out = s ^ (rng.random(s.shape) < channel.byzantine_flip)
    return int(out) if out.ndim == 0 else out.astype(np.int8)


def byzantine_report_sync(fake_bit, epsilon: float, rng: Rng):
    """Synchronized Byzantine channel: a noisy copy of the shared fake bit."""
    return honest_report(fake_bit, epsilon, rng)


# ---------------------------------------------------------------------------
# samples


def _check(config: ScenarioConfig) -> None:
    problems = validate_config(config)
    if problems:
        raise ConfigError(f"invalid config {config.label!r}: " + "; ".join(problems))


def generate_batch(
    config: ScenarioConfig,
    count: int,
    rng: Rng,
    honesty: Optional[HonestyVector] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized generation of ``count`` samples from a single stream.

    Returns ``(truths, reports)`` with shapes ``(count, m)`` and
    ``(count, m, n)``. A fixed ``honesty`` vector is shared by every sample;
    otherwise one is drawn per sample.
    """
    _check(config)
    n, m = config.n, config.m
    truths = _sample_states(config.state_prior, m, rng.random((count, m)))
    if honesty is not None:
        if honesty.n != n:
            raise ConfigError("honesty vector length does not match n")
        byz = np.broadcast_to(~honesty.flags, (count, n))
    else:
        byz = np.array([~sample_honesty(config.honesty_model, n, rng).flags for _ in range(count)])
        byz = byz.reshape(count, n)

    eps = config.channel.epsilon
    u = rng.random((count, m, n))
    honest_rep = truths[:, :, None] ^ (u < eps)
    if isinstance(config.attack_mode, Synchronized):
        fakes = _sample_states(config.attack_mode.fake_prior, m, rng.random((count, m)))
        byz_rep = fakes[:, :, None] ^ (u < eps)
    else:
        byz_rep = truths[:, :, None] ^ (u < config.channel.byzantine_flip)
    reports = np.where(byz[:, None, :], byz_rep, honest_rep).astype(np.int8)
    return truths, reports


def generate_sample(
    config: ScenarioConfig,
    rng: Rng,
    honesty: Optional[HonestyVector] = None,
) -> LabeledSample:
    """Draw ``s``, the honesty vector (unless given), the fake sequence and ``R``."""
    _check(config)
    n, m = config.n, config.m
    s = sample_state_vector(config.state_prior, m, rng)
    h = honesty if honesty is not None else sample_honesty(config.honesty_model, n, rng)
    if h.n != n:
        raise ConfigError("honesty vector length does not match n")
    fake = None
    if isinstance(config.attack_mode, Synchronized):
        fake = sample_state_vector(config.attack_mode.fake_prior, m, rng)

    reports = np.empty((m, n), dtype=np.int8)
    for j in range(n):
        if h.flags[j]:
            reports[:, j] = honest_report(s.bits, config.channel.epsilon, rng)
        elif fake is not None:
            reports[:, j] = byzantine_report_sync(fake.bits, config.channel.epsilon, rng)
        else:
            reports[:, j] = byzantine_report_unsync(s.bits, config.channel, rng)
    return LabeledSample(ReportMatrix(reports), s, config.label, fake)


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    samples: list[LabeledSample]
    configs: list[ScenarioConfig]
    master_seed: int
    class_honesty: dict[str, HonestyVector] = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def shape(self) -> tuple[int, int]:
        """``(n, m)`` shared by every sample."""
        if self.configs:
            return self.configs[0].n, self.configs[0].m
        r = self.samples[0].reports
        return r.n, r.m

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened inputs ``(N, m*n)`` (row-major, time-major) and targets ``(N, m)``."""
        if not self.samples:
            n, m = self.shape if self.configs else (0, 0)
            return np.zeros((0, m * n)), np.zeros((0, m))
        x = np.stack([s.reports.entries.reshape(-1) for s in self.samples]).astype(float)
        y = np.stack([s.truth.bits for s in self.samples]).astype(float)
        return x, y

    def labels(self) -> list[str]:
        return [s.config_label for s in self.samples]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], list(self.configs), self.master_seed,
                       dict(self.class_honesty))


def _check_shared_shape(configs: Sequence[ScenarioConfig]) -> None:
    if not configs:
        raise ConfigError("at least one config is required")
    shapes = {(c.n, c.m) for c in configs}
    if len(shapes) > 1:
        raise ConfigError(f"configs mix (n, m) shapes: {sorted(shapes)}")
    labels = [c.label for c in configs]
    if len(set(labels)) != len(labels):
        raise ConfigError("config labels must be unique within a dataset")
    for c in configs:
        _check(c)


def build_dataset(
    configs: Sequence[ScenarioConfig],
    samples_per_class: int = DEFAULT_SAMPLES_PER_CLASS,
    master_seed: int = 0,
) -> Dataset:
    """Generate ``samples_per_class`` samples for every config.

    Sample ``t`` of config ``c`` uses the stream forked from
    ``(master_seed, c, t)``; class-scoped honesty vectors come from
    ``(master_seed, c, <honesty tag>)``.
    """
    _check_shared_shape(configs)
    if samples_per_class < 1:
        raise ConfigError("samples_per_class must be >= 1")
    root = Rng(master_seed)
    samples = []
    class_honesty = {}
    for ci, config in enumerate(configs):
        fixed = None
        if config.honesty_scope == "class":
            fixed = sample_honesty(config.honesty_model, config.n, root.fork(ci, _HONESTY_STREAM))
            class_honesty[config.label] = fixed
        for t in range(samples_per_class):
            samples.append(generate_sample(config, root.fork(ci, t), honesty=fixed))
    return Dataset(samples, list(configs), master_seed, class_honesty)


def _grid(start: float, stop: float, step: float) -> list[float]:
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def global_recipe(n: int, m: int, epsilon: float = 0.1) -> list[ScenarioConfig]:
    """The default multi-regime class list used for the global dataset.

    For ``n = 20`` this is 76 classes:

    * 21 unsynchronized i.i.d. classes, alpha in 0.00..1.00 (step 0.05), p_mal = 1
    * 10 adaptive classes, alpha = 0.3, p_mal in 0.1..1.0
    * 2 unbalanced-prior classes, p0 in {0.3, 0.7}, alpha = 0.4, p_mal = 0.1
    * n fixed-count classes, k in 1..n, p_mal = 0.1
    * 3 bounded max-entropy classes, h in {n/4, n/3, n/2} floored, p_mal = 1
    * 11 Markov classes, rho in 0.0..1.0 (step 0.1), alpha = 0.3, p_mal = 1
    * 9 synchronized i.i.d. classes, alpha in 0.1..0.9

    Every class uses ``epsilon``, the noisy-observation Byzantine channel and
    class-scoped honesty (Byzantine placement fixed within a class).
    """
    if n < 1 or m < 1:
        raise ConfigError("n and m must be >= 1")

    def make(label, prior=None, honesty=None, attack=None, p_mal=1.0):
        return ScenarioConfig(
            n=n, m=m,
            state_prior=prior or IIDPrior(0.5),
            honesty_model=honesty if honesty is not None else IndependentAlpha(0.0),
            attack_mode=attack or Unsynchronized(),
            channel=ChannelParams(epsilon, p_mal, flip_noisy_observation=True),
            label=label,
            honesty_scope="class",
        )

    configs = []
    for a in _grid(0.0, 1.0, 0.05):
        configs.append(make(f"iid-alpha{a:.2f}", honesty=IndependentAlpha(a)))
    for p in _grid(0.1, 1.0, 0.1):
        configs.append(make(f"adaptive-pmal{p:.1f}", honesty=IndependentAlpha(0.3), p_mal=p))
    for p0 in (0.3, 0.7):
        configs.append(make(f"unbalanced-p0{p0:.1f}", prior=IIDPrior(p0), honesty=IndependentAlpha(0.4), p_mal=0.1))
    for k in range(1, n + 1):
        configs.append(make(f"fixed-k{k}", honesty=FixedK(k), p_mal=0.1))
    seen_h = set()
    for div in (4, 3, 2):
        h = max(1, n // div)
        if h in seen_h:
            continue
        seen_h.add(h)
        configs.append(make(f"maxent-h{h}", honesty=MaxEntropyBounded(h)))
    for rho in _grid(0.0, 1.0, 0.1):
        configs.append(make(f"markov-rho{rho:.1f}", prior=MarkovPrior(rho), honesty=IndependentAlpha(0.3)))
    for a in _grid(0.1, 0.9, 0.1):
        configs.append(make(f"sync-alpha{a:.1f}", honesty=IndependentAlpha(a), attack=Synchronized(IIDPrior(0.5))))
    return configs


def build_global_dataset(
    n: int,
    m: int,
    samples_per_class: int = DEFAULT_SAMPLES_PER_CLASS,
    master_seed: int = 0,
) -> Dataset:
    return build_dataset(global_recipe(n, m), samples_per_class, master_seed)


def split_dataset(dataset: Dataset, train_fraction: float, rng: Rng) -> tuple[Dataset, Dataset]:
    """Uniform random entry-wise split into disjoint train/test parts."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must lie strictly between 0 and 1")
    total = len(dataset)
    if total == 0:
        raise ValueError("cannot split an empty dataset")
    n_train = math.floor(round(total * train_fraction, 9))
    order = rng.permutation(total)
    train_idx = np.sort(order[:n_train])
    test_idx = np.sort(order[n_train:])
    return dataset.subset(train_idx.tolist()), dataset.subset(test_idx.tolist())


# ---------------------------------------------------------------------------
# files


def _bits(arr: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in arr.reshape(-1))


def save_dataset(dataset: Dataset, directory) -> tuple[Path, Path]:
    """Write ``metadata.json`` and ``samples.txt`` under ``directory``.

    The record stream has a version header line and then one
    ``label<TAB>truth-bits<TAB>report-bits`` line per sample, with report
    bits in row-major order. Honesty vectors and fake sequences are never
    written.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n, m = dataset.shape
    meta = {
        "schema_version": SCHEMA_VERSION,
        "master_seed": dataset.master_seed,
        "n": n,
        "m": m,
        "sample_count": len(dataset),
        "configs": [c.to_dict() for c in dataset.configs],
    }
    meta_path = directory / "metadata.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    rec_path = directory / "samples.txt"
    lines = [f"# byzfuse-records schema_version={SCHEMA_VERSION}"]
    for s in dataset.samples:
        lines.append(f"{s.config_label}\t{_bits(s.truth.bits)}\t{_bits(s.reports.entries)}")
    rec_path.write_text("\n".join(lines) + "\n")
    return meta_path, rec_path


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    meta = json.loads((directory / "metadata.json").read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported dataset schema {meta.get('schema_version')!r}")
    n, m = meta["n"], meta["m"]
    lines = (directory / "samples.txt").read_text().splitlines()
    if not lines or lines[0] != f"# byzfuse-records schema_version={SCHEMA_VERSION}":
        raise ConfigError("record stream has a missing or unsupported header")
    samples = []
    for line in lines[1:]:
        label, truth, reports = line.split("\t")
        if len(truth) != m or len(reports) != m * n:
            raise ConfigError(f"record for {label!r} has wrong dimensions")
        r = np.frombuffer(reports.encode(), dtype=np.uint8) - ord("0")
        t = np.frombuffer(truth.encode(), dtype=np.uint8) - ord("0")
        samples.append(LabeledSample(ReportMatrix(r.reshape(m, n)), StateVector(t), label))
    configs = [ScenarioConfig.from_dict(c) for c in meta["configs"]]
    known = {c.label for c in configs}
    unknown = {s.config_label for s in samples} - known
    if unknown:
        raise ConfigError(f"records reference unknown configs: {sorted(unknown)}")
    return Dataset(samples, configs, int(meta["master_seed"]))


def with_scope(configs: Sequence[ScenarioConfig], scope: str) -> list[ScenarioConfig]:
    return [replace(c, honesty_scope=scope) for c in configs]
