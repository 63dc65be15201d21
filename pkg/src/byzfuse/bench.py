"""Experiment harness: plans, seeded runs, table reproduction, sweeps and timing."""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import classic, neural
from .core import (
    CapacityError,
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
    expected_byzantine_fraction,
    validate_config,
)
from .genesis import Dataset, Rng, build_dataset, generate_batch, global_recipe, split_dataset
from .metrics import TABLE_SAMPLE_FLOOR, MetricsReport, evaluate

PLAN_SCHEMA_VERSION = 1
RULES = ("maj", "hardis", "softis", "opt", "opt-sync", "dl")
CLASSICAL_RULES = RULES[:5]
DEFAULT_ALPHA_GRID = tuple(round(0.05 * i, 2) for i in range(21))
# sweep budget: largest network input and largest (samples x inputs) dataset accepted
MAX_SWEEP_INPUTS = 1000
MAX_SWEEP_CELLS = 40_000_000

_SPLIT_TAG = 1_000_001
_DATA_TAG = 1_000_002


class UnderpoweredError(CapacityError):
    """Raised when a Monte Carlo request cannot support the requested comparison."""


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic 63-bit seed for sub-experiment ``key`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def load_reference_values() -> dict:
    text = resources.files("byzfuse").joinpath("data/reference_values.yaml").read_text()
    return yaml.safe_load(text)


# ---------------------------------------------------------------------------
# plans


@dataclass
class ExperimentPlan:
    """A scenario grid plus the rules and budgets used to evaluate it.

    The grid is the cartesian product of ``n_values x m_values x p_mals x
    p0s`` with every prior (i.i.d. at ``p0`` and Markov for each ``rho``)
    and every honesty model listed in ``alphas``, ``ks`` and ``hs``.
    ``mc_samples`` report matrices per scenario are drawn for the
    classical rules; the neural rule trains on ``samples_per_class``
    samples (split by ``train_fraction``) per scenario.
    """

    n_values: list = field(default_factory=lambda: [20])
    m_values: list = field(default_factory=lambda: [4])
    alphas: list = field(default_factory=list)
    ks: list = field(default_factory=list)
    hs: list = field(default_factory=list)
    rhos: list = field(default_factory=list)
    p_mals: list = field(default_factory=lambda: [1.0])
    p0s: list = field(default_factory=lambda: [0.5])
    epsilon: float = 0.1
    attack: str = "unsync"
    flip_noisy_observation: bool = True
    rules: list = field(default_factory=lambda: ["maj", "hardis", "softis", "opt"])
    samples_per_class: int = 200
    mc_samples: int = 12_500
    seed: int = 0
    train_fraction: float = 0.8
    epochs: int = 150
    batch_size: int = 512
    learning_rate: float = 0.001
    hidden_sizes: list = field(default_factory=lambda: list(neural.DESK_HIDDEN))
    dl_honesty_scope: str = "class"
    hardis_margin: float = 2.0
    softis_combine: str = "llr"
    out: Optional[str] = None
    hardware_note: str = ""

    def scenarios(self) -> list:
        configs = []
        models = ([IndependentAlpha(float(a)) for a in self.alphas]
                  + [FixedK(int(k)) for k in self.ks]
                  + [MaxEntropyBounded(int(h)) for h in self.hs])
        for n in self.n_values:
            for m in self.m_values:
                for p_mal in self.p_mals:
                    channel = ChannelParams(self.epsilon, float(p_mal), self.flip_noisy_observation)
                    for p0 in self.p0s:
                        priors = [IIDPrior(float(p0))] + [MarkovPrior(float(r)) for r in self.rhos]
                        for prior in priors:
                            for model in models:
                                # the shared fake sequence follows the same prior as the state
                                attack = Synchronized(prior) if self.attack == "sync" else Unsynchronized()
                                configs.append(ScenarioConfig(
                                    n=int(n), m=int(m), state_prior=prior, honesty_model=model,
                                    attack_mode=attack, channel=channel,
                                    label=_label(n, m, prior, model, p_mal, self.attack),
                                ))
        return configs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = PLAN_SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        d = dict(d)
        version = d.pop("schema_version", PLAN_SCHEMA_VERSION)
        if version != PLAN_SCHEMA_VERSION:
            raise ConfigError(f"unsupported plan schema_version {version!r}")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
        return cls(**d)


def _label(n, m, prior, model, p_mal, attack) -> str:
    if isinstance(prior, IIDPrior):
        prior_part = f"iid{prior.p0:g}"
    else:
        prior_part = f"markov{prior.rho:g}"
    if isinstance(model, IndependentAlpha):
        model_part = f"alpha{model.alpha:g}"
    elif isinstance(model, FixedK):
        model_part = f"k{model.k}"
    else:
        model_part = f"h{model.h}"
    return f"n{n}-m{m}-{prior_part}-{model_part}-pmal{float(p_mal):g}-{attack}"


def load_plan(path) -> ExperimentPlan:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse plan {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("a plan file must contain a mapping")
    return ExperimentPlan.from_dict(doc)


def save_plan(plan: ExperimentPlan, path) -> None:
    Path(path).write_text(yaml.safe_dump(plan.to_dict(), sort_keys=True))


def validate_plan(plan: ExperimentPlan, configs: Optional[Sequence[ScenarioConfig]] = None) -> list:
    problems = []
    if not plan.rules:
        problems.append("at least one rule must be selected")
    bad = [r for r in plan.rules if r not in RULES]
    if bad:
        problems.append(f"unknown rules {bad}; choose from {list(RULES)}")
    if plan.attack not in ("unsync", "sync"):
        problems.append(f"attack must be 'unsync' or 'sync': {plan.attack!r}")
    if plan.mc_samples < 1 or plan.samples_per_class < 1:
        problems.append("mc_samples and samples_per_class must be >= 1")
    if not 0 < plan.train_fraction < 1:
        problems.append("train_fraction must lie strictly between 0 and 1")
    if "dl" in plan.rules and math.floor(plan.samples_per_class * plan.train_fraction) < 1:
        problems.append("rule 'dl' needs a non-empty train split")
    configs = plan.scenarios() if configs is None else configs
    if not configs:
        problems.append("the scenario grid is empty")
    for c in configs:
        problems.extend(f"{c.label}: {p}" for p in validate_config(c))
    return problems


# ---------------------------------------------------------------------------
# running


@dataclass
class ResultRow:
    label: str
    rule: str
    pe: float
    ber: float
    per_bit_error: float
    accuracy: float
    stderr_pe: float
    stderr_per_bit: float
    sample_count: int
    seconds: float = 0.0

    @classmethod
    def from_metrics(cls, label: str, rule: str, r: MetricsReport, seconds: float) -> "ResultRow":
        return cls(label, rule, r.pe, r.ber, r.per_bit_error, r.accuracy, r.stderr_pe, r.stderr_per_bit,
                   r.sample_count, seconds)


RESULT_COLUMNS = ["label", "rule", "pe", "ber", "per_bit_error", "accuracy", "stderr_pe", "stderr_per_bit",
                  "sample_count"]


def apply_classical(rule: str, reports: np.ndarray, config: ScenarioConfig, plan: ExperimentPlan) -> np.ndarray:
    """Estimates of one classical rule for a ``(B, m, n)`` stack, given the scenario's parameters."""
    prior, model, channel = config.state_prior, config.honesty_model, config.channel
    if rule == "maj":
        return classic.majority_batch(reports, prior)[0]
    if rule == "hardis":
        return classic.hardis_batch(reports, prior, channel, plan.hardis_margin)[0]
    if rule == "softis":
        alpha = expected_byzantine_fraction(model, config.n)
        return classic.softis_batch(reports, prior, channel, alpha, plan.softis_combine)[0]
    if rule == "opt":
        return classic.map_batch(reports, prior, model, channel)[0]
    if rule == "opt-sync":
        fake_prior = (config.attack_mode.fake_prior if isinstance(config.attack_mode, Synchronized)
                      else IIDPrior(0.5))
        return classic.map_sync_batch(reports, prior, fake_prior, model, channel)[0]
    raise ConfigError(f"unknown classical rule {rule!r}")


@dataclass
class NeuralOutcome:
    metrics: MetricsReport
    test_loss: float
    params: neural.NetworkParams
    history: neural.TrainHistory
    train_seconds: float
    inference_seconds: float
    test_count: int


def train_and_score(train_set: Dataset, test_set: Dataset, plan: ExperimentPlan, seed: int) -> NeuralOutcome:
    n, m = train_set.shape
    spec = neural.NetworkSpec.for_window(n, m, tuple(plan.hidden_sizes), seed=derive_seed(seed, 1))
    config = neural.TrainConfig(epochs=plan.epochs, batch_size=plan.batch_size, learning_rate=plan.learning_rate,
                                shuffle_seed=derive_seed(seed, 2), early_stop_loss=1e-4)
    t0 = time.perf_counter()
    params, history = neural.train(train_set, spec, config)
    t1 = time.perf_counter()
    x, y = test_set.arrays()
    est, out = neural.predict_batch(params, x)
    t2 = time.perf_counter()
    return NeuralOutcome(evaluate(est, y.astype(np.int8)), neural.mse_loss(out, y), params, history,
                         t1 - t0, t2 - t1, len(x))


def _dl_split(config: ScenarioConfig, plan: ExperimentPlan, seed: int):
    ds = build_dataset([replace(config, honesty_scope=plan.dl_honesty_scope)], plan.samples_per_class,
                       derive_seed(seed, _DATA_TAG))
    return split_dataset(ds, plan.train_fraction, Rng(seed).fork(_SPLIT_TAG))


def run_experiment(plan: ExperimentPlan, configs: Optional[Sequence[ScenarioConfig]] = None,
                   write: bool = True) -> list:
    """Evaluate every selected rule on every scenario; returns canonical-order rows.

    Classical rules are scored by direct Monte Carlo over ``plan.mc_samples``
    fresh report matrices per scenario (honesty redrawn per sample). The
    neural rule is trained per scenario on its own dataset. Scenario ``i``
    draws from streams derived from ``(plan.seed, i)`` only.
    """
    configs = list(plan.scenarios() if configs is None else configs)
    problems = validate_plan(plan, configs)
    if problems:
        raise ConfigError("invalid plan: " + "; ".join(problems))
    rows = []
    for ci, config in enumerate(configs):
        point_seed = derive_seed(plan.seed, ci)
        classical = [r for r in plan.rules if r in CLASSICAL_RULES]
        if classical:
            mc_config = replace(config, honesty_scope="sample")
            truths, reports = generate_batch(mc_config, plan.mc_samples, Rng(point_seed))
            for rule in classical:
                t0 = time.perf_counter()
                est = apply_classical(rule, reports, config, plan)
                rows.append(ResultRow.from_metrics(config.label, rule, evaluate(est, truths),
                                                   time.perf_counter() - t0))
        if "dl" in plan.rules:
            train_set, test_set = _dl_split(config, plan, point_seed)
            outcome = train_and_score(train_set, test_set, plan, point_seed)
            rows.append(ResultRow.from_metrics(config.label, "dl", outcome.metrics,
                                               outcome.train_seconds + outcome.inference_seconds))
    rows.sort(key=lambda r: (r.label, RULES.index(r.rule)))
    if write and plan.out:
        write_results(rows, plan.out, plan)
    return rows


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def results_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in RESULT_COLUMNS])
    return buf.getvalue()


def _versions() -> dict:
    import scipy

    from . import __version__
    return {"byzfuse": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_results(rows: Sequence[ResultRow], out, plan: Optional[ExperimentPlan] = None) -> Path:
    """Write ``results.csv`` (deterministic), ``timings.csv`` and ``manifest.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(rows))
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "rule", "seconds"])
        for r in rows:
            w.writerow([r.label, r.rule, f"{r.seconds:.6f}"])
    manifest = {
        "plan": plan.to_dict() if plan is not None else None,
        "versions": _versions(),
        "hardware_note": plan.hardware_note if plan is not None else "",
        "machine": platform.machine(),
        "row_count": len(rows),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out / "results.csv"


# ---------------------------------------------------------------------------
# table reproduction


@dataclass
class AnchorCheck:
    row: str
    rule: str
    measured: float
    stderr: float
    published: Optional[float]
    tol: Optional[float]
    maximum: Optional[float]
    status: str          # pass | fail | underpowered

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def describe(self) -> str:
        target = (f"{self.published} +/- {self.tol}" if self.maximum is None else f"<= {self.maximum}")
        return f"{self.row:<12s} {self.rule:<7s} measured={self.measured:.5f} (se {self.stderr:.5f}) target {target}: {self.status}"


@dataclass
class OrderingCheck:
    row: str
    better: str
    worse: str
    worse_error: float
    better_error: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.worse_error >= self.better_error - self.slack


@dataclass
class TableReport:
    which: str
    rows: list
    anchors: list
    orderings: list

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.anchors) and all(o.passed for o in self.orderings)


def table_configs(which: str, row_keys: Optional[Sequence[str]] = None) -> list:
    ref = load_reference_values()
    if which not in ref["tables"]:
        raise ConfigError(f"unknown table {which!r}; choose table1 or table2")
    t = ref["tables"][which]
    n, m = t["n"], t["m"]
    channel = ChannelParams(t["epsilon"], t["p_mal"], flip_noisy_observation=True)
    configs = []
    for row in ref["rows"]:
        if row_keys is not None and row["key"] not in row_keys:
            continue
        if row["kind"] == "alpha":
            model = IndependentAlpha(row["value"])
        elif row["kind"] == "fixed_k":
            model = FixedK(row["value"])
        else:
            model = MaxEntropyBounded(n // row["divisor"])
        configs.append(ScenarioConfig(n, m, IIDPrior(0.5), model, Unsynchronized(), channel, row["key"]))
    if row_keys is not None:
        missing = set(row_keys) - {c.label for c in configs}
        if missing:
            raise ConfigError(f"unknown table rows {sorted(missing)}")
    return configs


def reproduce_table(which: str, samples: int = 12_500, seed: int = 0, out=None,
                    rules: Sequence[str] = ("maj", "hardis", "softis", "opt", "dl"),
                    row_keys: Optional[Sequence[str]] = None, paper_architecture: bool = False,
                    epochs: int = 150) -> TableReport:
    """Measure the table cells and compare them with the published values.

    ``samples`` is the number of Monte Carlo report matrices per cell, so a
    cell pools ``samples * m`` per-bit decisions; fewer than the metrics
    floor is refused. Anchored cells whose standard error exceeds half their
    tolerance are marked ``underpowered`` rather than compared.
    """
    configs = table_configs(which, row_keys)
    m = configs[0].m
    if samples * m < TABLE_SAMPLE_FLOOR:
        need = math.ceil(TABLE_SAMPLE_FLOOR / m)
        raise UnderpoweredError(
            f"{samples} samples x m={m} gives {samples * m} decisions per cell; "
            f"at least {TABLE_SAMPLE_FLOOR} are required (use --samples {need} or more)")
    hidden = list(neural.PAPER_HIDDEN if paper_architecture else neural.DESK_HIDDEN)
    plan = ExperimentPlan(rules=list(rules), mc_samples=samples, seed=seed, hidden_sizes=hidden, epochs=epochs,
                          out=None)
    rows = run_experiment(plan, configs, write=False)
    ref = load_reference_values()
    table = ref["tables"][which]
    by_key = {(r.label, r.rule): r for r in rows}

    anchors = []
    for a in table["anchors"]:
        row = by_key.get((a["row"], a["rule"]))
        if row is None:
            continue
        measured, se = row.per_bit_error, row.stderr_per_bit
        if "max" in a:
            status = "pass" if measured <= a["max"] else "fail"
            anchors.append(AnchorCheck(a["row"], a["rule"], measured, se, None, None, a["max"], status))
            continue
        if se > a["tol"] / 2:
            status = "underpowered"
        else:
            status = "pass" if abs(measured - a["value"]) <= a["tol"] else "fail"
        anchors.append(AnchorCheck(a["row"], a["rule"], measured, se, a["value"], a["tol"], None, status))

    orderings = []
    chain = [r for r in ("maj", "hardis", "softis", "opt") if r in rules]
    for c in configs:
        for worse, better in zip(chain, chain[1:]):
            w, b = by_key[(c.label, worse)], by_key[(c.label, better)]
            slack = 2.0 * math.hypot(w.stderr_per_bit, b.stderr_per_bit)
            orderings.append(OrderingCheck(c.label, better, worse, w.per_bit_error, b.per_bit_error, slack))

    report = TableReport(which, rows, anchors, orderings)
    if out is not None:
        _write_table(report, table, ref["columns"], Path(out), plan)
    return report


def _write_table(report: TableReport, table: dict, columns: list, out: Path, plan: ExperimentPlan) -> None:
    write_results(report.rows, out, plan)
    anchored = {(a.row, a.rule): a for a in report.anchors}
    with open(out / f"{report.which}_comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "rule", "measured_per_bit", "measured_pe", "stderr_per_bit", "published", "target", "status"])
        for r in report.rows:
            published = table["values"][r.label][columns.index(r.rule)] if r.rule in columns else ""
            a = anchored.get((r.label, r.rule))
            target = "" if a is None else (f"<= {a.maximum}" if a.maximum is not None else f"+/- {a.tol}")
            w.writerow([r.label, r.rule, _fmt(r.per_bit_error), _fmt(r.pe), _fmt(r.stderr_per_bit), published, target,
                        "" if a is None else a.status])
    with open(out / f"{report.which}_ordering.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "worse", "better", "worse_error", "better_error", "slack", "passed"])
        for o in report.orderings:
            w.writerow([o.row, o.worse, o.better, _fmt(o.worse_error), _fmt(o.better_error), _fmt(o.slack),
                        o.passed])


# ---------------------------------------------------------------------------
# sweeps


def _write_rows(rows: list, path) -> None:
    if path is None or not rows:
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def sweep_alpha(ns=(20,), ms=(4,), rho_list=(0.1, 0.95), samples_per_class: int = 200, seed: int = 0,
                alphas=DEFAULT_ALPHA_GRID, p_mal: float = 1.0, include_iid: bool = True,
                plan: Optional[ExperimentPlan] = None, out=None) -> list:
    """Neural accuracy versus Byzantine fraction for i.i.d. and Markov states.

    One model is trained per (prior, n, m, alpha) class and evaluated on the
    held-out part of that class. Returns plot-ready dict rows.
    """
    plan = plan or ExperimentPlan()
    priors = ([IIDPrior(0.5)] if include_iid else []) + [MarkovPrior(float(r)) for r in rho_list]
    rows = []
    point = 0
    for n in ns:
        for m in ms:
            for prior in priors:
                for a in alphas:
                    config = ScenarioConfig(n, m, prior, IndependentAlpha(float(a)), Unsynchronized(),
                                            ChannelParams(plan.epsilon, p_mal, True), "alpha-sweep")
                    problems = validate_config(config)
                    if problems:
                        raise ConfigError("; ".join(problems))
                    local = replace(plan, samples_per_class=samples_per_class)
                    point_seed = derive_seed(seed, point)
                    tr, te = _dl_split(config, local, point_seed)
                    res = train_and_score(tr, te, local, point_seed)
                    rows.append({
                        "prior": "iid" if isinstance(prior, IIDPrior) else f"markov{prior.rho:g}",
                        "n": n, "m": m, "alpha": float(a),
                        "accuracy": res.metrics.accuracy, "pe": res.metrics.pe, "ber": res.metrics.ber,
                        "loss": res.test_loss, "test_count": res.test_count,
                    })
                    point += 1
    _write_rows(rows, out)
    return rows


def _global_point(n: int, m: int, samples_per_class: int, seed: int, plan: ExperimentPlan) -> NeuralOutcome:
    ds = build_dataset(global_recipe(n, m, plan.epsilon), samples_per_class, derive_seed(seed, _DATA_TAG))
    tr, te = split_dataset(ds, plan.train_fraction, Rng(seed).fork(_SPLIT_TAG))
    return train_and_score(tr, te, plan, seed)


def check_sweep_budget(n_list, m_list, samples_per_class: int, max_inputs: int = MAX_SWEEP_INPUTS,
                       max_cells: int = MAX_SWEEP_CELLS) -> list:
    """Grid points that exceed the desk budget (empty when the sweep may run)."""
    offending = []
    for n in n_list:
        for m in m_list:
            count = len(global_recipe(n, m)) * samples_per_class
            if n * m > max_inputs or count * n * m > max_cells:
                offending.append((n, m))
    return offending


def sweep_window_and_size(n_list, m_list, samples_per_class: int = 200, seed: int = 0,
                          plan: Optional[ExperimentPlan] = None, out=None,
                          max_inputs: int = MAX_SWEEP_INPUTS, max_cells: int = MAX_SWEEP_CELLS) -> list:
    """Neural accuracy on the global recipe for every (n, m) pair."""
    plan = plan or ExperimentPlan()
    offending = check_sweep_budget(n_list, m_list, samples_per_class, max_inputs, max_cells)
    if offending:
        raise CapacityError(
            f"grid points over the desk budget (n*m <= {max_inputs}, samples*n*m <= {max_cells}): {offending}")
    rows = []
    for i, (n, m) in enumerate((n, m) for n in n_list for m in m_list):
        res = _global_point(n, m, samples_per_class, derive_seed(seed, i), plan)
        rows.append({"n": n, "m": m, "accuracy": res.metrics.accuracy, "pe": res.metrics.pe,
                     "ber": res.metrics.ber, "loss": res.test_loss, "test_count": res.test_count})
    _write_rows(rows, out)
    return rows


def sweep_samples_per_class(counts, seed: int = 0, n: int = 20, m: int = 4,
                            plan: Optional[ExperimentPlan] = None, out=None) -> list:
    """Neural performance on the global recipe versus samples per class."""
    if not counts:
        raise ConfigError("counts must not be empty")
    plan = plan or ExperimentPlan()
    rows = []
    for i, count in enumerate(counts):
        res = _global_point(n, m, int(count), derive_seed(seed, i), plan)
        rows.append({"samples_per_class": int(count), "accuracy": res.metrics.accuracy, "pe": res.metrics.pe,
                     "ber": res.metrics.ber, "loss": res.test_loss, "test_count": res.test_count})
    _write_rows(rows, out)
    return rows


@dataclass
class TimingReport:
    training_seconds: float
    inference_total_seconds: float
    inference_per_sample_seconds: float
    test_count: int
    train_count: int
    epochs_run: int
    hardware_note: str
    reference: dict

    def to_dict(self) -> dict:
        return asdict(self)


def timing_report(plan: Optional[ExperimentPlan] = None, seed: int = 0, hardware_note: str = "") -> TimingReport:
    """Wall-clock training and inference time on the global recipe.

    Uses the first ``n``/``m`` of the plan and its samples per class. The
    published timings are attached for display only.
    """
    plan = plan or ExperimentPlan()
    n, m = plan.n_values[0], plan.m_values[0]
    ds = build_dataset(global_recipe(n, m, plan.epsilon), plan.samples_per_class, derive_seed(seed, _DATA_TAG))
    tr, te = split_dataset(ds, plan.train_fraction, Rng(seed).fork(_SPLIT_TAG))
    res = train_and_score(tr, te, plan, seed)
    return TimingReport(
        training_seconds=res.train_seconds,
        inference_total_seconds=res.inference_seconds,
        inference_per_sample_seconds=res.inference_seconds / res.test_count,
        test_count=res.test_count,
        train_count=len(tr),
        epochs_run=len(res.history),
        hardware_note=hardware_note or plan.hardware_note,
        reference=load_reference_values()["timing"],
    )
