"""Repeated-trial accuracy experiments and their reports.

Every trial draws a reference sequence from the null process and two
candidates: one more draw from the null process (an H0 trial) and one from
the alternative process (an H1 trial). Both candidates are tested against the
same reference, and the embedding is trained once per trial.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache, partial
from pathlib import Path

import numpy as np

from renal import generators as gen
from renal.baselines import MmdConfig, ewd_bins, mmd_test, scott_bins
from renal.embedding import TrainConfig, embed_sequence, train
from renal.errors import (
    DegenerateDataError,
    DivergenceError,
    InsufficientDataError,
    InvalidInputError,
    ThinningBoundError,
)
from renal.gof import BinSelectionConfig, test_embeddings, test_with_grid
from renal.io import load_csv
from renal.rng import ROLE_CODES, derive_seed, make_rng, trial_seed
from renal.sequence import ObservationSequence

REPORT_VERSION = 1

# hidden size, training and bin-selection settings per data family
PRESETS = {
    "time_series": dict(
        hidden_dim=6,
        train_cfg=TrainConfig(learning_rate=0.001, epochs=100, optimizer="adam"),
        bin_cfg=BinSelectionConfig(lam=0.1, candidate_bins=tuple(range(2, 7))),
    ),
    "tpp": dict(
        hidden_dim=4,
        train_cfg=TrainConfig(learning_rate=0.00025, epochs=150, optimizer="sgd"),
        bin_cfg=BinSelectionConfig(lam=0.08, candidate_bins=tuple(range(2, 21))),
    ),
    "stpp": dict(
        hidden_dim=4,
        train_cfg=TrainConfig(learning_rate=0.0005, epochs=200, optimizer="sgd"),
        bin_cfg=BinSelectionConfig(lam=0.08, candidate_bins=tuple(range(2, 21))),
    ),
}

_TRIAL_ERRORS = (DivergenceError, DegenerateDataError, InsufficientDataError, ThinningBoundError)


def parse_method(method: str) -> tuple[str, int | None]:
    """``renal``, ``mmd``, ``scott``, ``ewd:<m>`` or ``ewd(<m>)``."""
    m = method.strip().lower()
    if m in ("renal", "mmd", "scott"):
        return m, None
    if m.startswith("ewd"):
        arg = m[3:].strip(":()")
        if arg.isdigit() and int(arg) >= 2:
            return "ewd", int(arg)
    raise InvalidInputError(f"unknown method {method!r}; expected renal, mmd, scott or ewd:<m> with m >= 2")


def _bin_cfg_to_dict(cfg: BinSelectionConfig) -> dict:
    return {
        "lambda": cfg.lam,
        "candidate_bins": list(cfg.candidate_bins),
        "max_states": cfg.max_states,
        "min_nonzero_fraction": cfg.min_nonzero_fraction,
    }


def _bin_cfg_from_dict(doc: dict) -> BinSelectionConfig:
    doc = dict(doc)
    if "lambda" in doc:
        doc["lam"] = doc.pop("lambda")
    unknown = set(doc) - {"lam", "candidate_bins", "max_states", "min_nonzero_fraction"}
    if unknown:
        raise InvalidInputError(f"unknown bin_cfg fields: {sorted(unknown)}")
    return BinSelectionConfig(**doc)


@dataclass(frozen=True)
class ExperimentConfig:
    """One null/alternative pairing replayed over ``trials`` trials.

    A process is a generator name (see ``generators.PROCESSES``), a path to
    a CSV file, or a mapping ``{"csv": path, "kind": ...}``.
    """

    null_process: str | dict
    alt_process: str | dict
    method: str = "renal"
    trials: int = 100
    alpha: float = 0.05
    train_cfg: TrainConfig = TrainConfig()
    bin_cfg: BinSelectionConfig = BinSelectionConfig()
    seed: int = 0
    hidden_dim: int = 4
    length: int = 500
    window_length: int = 400
    clone_null: bool = False
    mmd_cfg: MmdConfig = field(default_factory=MmdConfig)

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInputError("trials must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError("alpha must lie in (0, 1)")
        if self.hidden_dim < 1:
            raise InvalidInputError("hidden_dim must be positive")
        if self.length < 2 or self.window_length < 2:
            raise InvalidInputError("length and window_length must be at least 2")
        parse_method(self.method)
        _process_label(self.null_process)
        _process_label(self.alt_process)

    @classmethod
    def preset(cls, family: str, null_process, alt_process, **overrides) -> ExperimentConfig:
        if family not in PRESETS:
            raise InvalidInputError(f"unknown preset {family!r}; choose from {sorted(PRESETS)}")
        return cls(null_process, alt_process, **{**PRESETS[family], **overrides})

    def to_dict(self) -> dict:
        return {
            "null_process": self.null_process,
            "alt_process": self.alt_process,
            "method": self.method,
            "trials": self.trials,
            "alpha": self.alpha,
            "train_cfg": asdict(self.train_cfg),
            "bin_cfg": _bin_cfg_to_dict(self.bin_cfg),
            "seed": self.seed,
            "hidden_dim": self.hidden_dim,
            "length": self.length,
            "window_length": self.window_length,
            "clone_null": self.clone_null,
            "mmd_cfg": asdict(self.mmd_cfg),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        """Build from a JSON mapping; ``preset`` fills unspecified settings."""
        doc = dict(doc)
        base = {}
        if "preset" in doc:
            family = doc.pop("preset")
            if family not in PRESETS:
                raise InvalidInputError(f"unknown preset {family!r}; choose from {sorted(PRESETS)}")
            base = dict(PRESETS[family])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise InvalidInputError(f"unknown config fields: {sorted(unknown)}")
        for key in ("null_process", "alt_process"):
            if key not in doc:
                raise InvalidInputError(f"config is missing {key!r}")
        try:
            if "train_cfg" in doc:
                tc = base.get("train_cfg", TrainConfig())
                doc["train_cfg"] = replace(tc, **doc["train_cfg"])
            if "bin_cfg" in doc:
                merged = _bin_cfg_to_dict(base.get("bin_cfg", BinSelectionConfig()))
                merged.update(doc["bin_cfg"])
                doc["bin_cfg"] = _bin_cfg_from_dict(merged)
            if "mmd_cfg" in doc:
                doc["mmd_cfg"] = MmdConfig(**doc["mmd_cfg"])
            return cls(**{**base, **doc})
        except TypeError as exc:
            raise InvalidInputError(f"invalid config: {exc}") from None

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise InvalidInputError("config must be a JSON object")
        return cls.from_dict(doc)


def _process_label(proc):
    if isinstance(proc, dict):
        if "csv" not in proc:
            raise InvalidInputError(f"process mapping needs a 'csv' entry, got {sorted(proc)}")
        return ("csv", str(proc["csv"]), proc.get("kind", "regular"))
    if isinstance(proc, str):
        if proc in gen.PROCESSES:
            return ("sim", proc, None)
        if proc.lower().endswith(".csv"):
            return ("csv", proc, "regular")
    raise InvalidInputError(f"unknown process {proc!r}; choose from {sorted(gen.PROCESSES)} or a CSV path")


@lru_cache(maxsize=8)
def _load_cached(path: str, kind: str) -> ObservationSequence:
    return load_csv(path, kind)


def draw(proc, cfg: ExperimentConfig, trial: int, role: str) -> ObservationSequence:
    """One sequence from ``proc`` for the given trial and role."""
    source, name, kind = _process_label(proc)
    seed = trial_seed(cfg.seed, trial, role)
    if source == "sim":
        if name in gen.REGULAR_PROCESSES:
            return gen.PROCESSES[name](seed, cfg.length)
        return gen.PROCESSES[name](seed)
    full = _load_cached(name, kind)
    length = min(cfg.window_length, full.n)
    start = int(make_rng(seed, ROLE_CODES["window"]).integers(0, full.n - length + 1))
    return full.window(start, length)


def _train_reference(d0: ObservationSequence, cfg: ExperimentConfig, trial: int):
    """Train on the reference, retrying once with another seed on divergence."""
    window = min(cfg.train_cfg.bptt_window, d0.n - 1)
    last = None
    for attempt in range(2):
        seed = derive_seed(cfg.seed, trial, cfg.train_cfg.seed, attempt)
        tc = replace(cfg.train_cfg, seed=seed, bptt_window=window)
        try:
            model, _ = train(d0, cfg.hidden_dim, tc)
            return model
        except DivergenceError as exc:
            last = exc
    raise last


def _record(trial, hypothesis, report=None, error=None) -> dict:
    if error is not None:
        return {"trial": trial, "hypothesis": hypothesis, "statistic": None, "dof": None,
                "p_value": None, "reject": None, "error": f"{type(error).__name__}: {error}"}
    s = report.summary()
    return {
        "trial": trial,
        "hypothesis": hypothesis,
        "statistic": float(s["statistic"]),
        "dof": None if s["dof"] is None else int(s["dof"]),
        "p_value": float(s["p_value"]),
        "reject": bool(s["reject"]),
    }


def run_trial(cfg: ExperimentConfig, trial: int) -> list[dict]:
    """H0 and H1 records for one trial."""
    method, m = parse_method(cfg.method)
    try:
        d0 = draw(cfg.null_process, cfg, trial, "null")
        d_h0 = d0 if cfg.clone_null else draw(cfg.null_process, cfg, trial, "null_test")
        d_h1 = draw(cfg.alt_process, cfg, trial, "alt")
    except (InsufficientDataError, ThinningBoundError) as exc:
        return [_record(trial, "H0", error=exc), _record(trial, "H1", error=exc)]

    if method == "mmd":
        out = []
        for hyp, d1 in (("H0", d_h0), ("H1", d_h1)):
            try:
                mcfg = replace(cfg.mmd_cfg, alpha=cfg.alpha)
                rep = mmd_test(d0, d1, mcfg, seed=derive_seed(cfg.seed, trial, hyp == "H1", 5))
                out.append(_record(trial, hyp, rep))
            except _TRIAL_ERRORS as exc:
                out.append(_record(trial, hyp, error=exc))
        return out

    try:
        model = _train_reference(d0, cfg, trial)
    except _TRIAL_ERRORS as exc:
        return [_record(trial, "H0", error=exc), _record(trial, "H1", error=exc)]
    e0 = embed_sequence(model, d0)
    out = []
    for hyp, d1 in (("H0", d_h0), ("H1", d_h1)):
        try:
            e1 = embed_sequence(model, d1)
            if method == "renal":
                rep = test_embeddings(e0, e1, cfg.bin_cfg, cfg.alpha)
            else:
                pooled = np.vstack([e0, e1])
                grid = ewd_bins(pooled, m) if method == "ewd" else scott_bins(pooled)
                rep = test_with_grid(e0, e1, grid, cfg.alpha)
            out.append(_record(trial, hyp, rep))
        except _TRIAL_ERRORS as exc:
            out.append(_record(trial, hyp, error=exc))
    return out


@dataclass(frozen=True)
class AccuracyReport:
    type1_accuracy: float | None
    type2_accuracy: float | None
    average_accuracy: float | None
    per_trial: list
    config_echo: dict
    excluded_trials: int

    @classmethod
    def from_records(cls, records: list[dict], config_echo: dict) -> AccuracyReport:
        records = sorted(records, key=lambda r: (r["trial"], r["hypothesis"]))
        h0 = [r["reject"] for r in records if r["hypothesis"] == "H0" and r["reject"] is not None]
        h1 = [r["reject"] for r in records if r["hypothesis"] == "H1" and r["reject"] is not None]
        correct = sum(not r for r in h0) + sum(h1)
        return cls(
            type1_accuracy=_ratio(sum(not r for r in h0), len(h0)),
            type2_accuracy=_ratio(sum(h1), len(h1)),
            average_accuracy=_ratio(correct, len(h0) + len(h1)),
            per_trial=records,
            config_echo=config_echo,
            excluded_trials=sum(r["reject"] is None for r in records),
        )

    def counts(self) -> dict:
        n = {"H0": 0, "H1": 0}
        for r in self.per_trial:
            if r["reject"] is not None:
                n[r["hypothesis"]] += 1
        return {"h0": n["H0"], "h1": n["H1"], "excluded": self.excluded_trials}

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "config_echo": self.config_echo,
            "type1_accuracy": self.type1_accuracy,
            "type2_accuracy": self.type2_accuracy,
            "average_accuracy": self.average_accuracy,
            "excluded_trials": self.excluded_trials,
            "per_trial": self.per_trial,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _ratio(k, n):
    return k / n if n else None


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> AccuracyReport:
    """Run every trial; the result does not depend on ``workers``."""
    job = partial(run_trial, cfg)
    if workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, range(cfg.trials), chunksize=max(1, cfg.trials // (4 * workers))))
    else:
        chunks = [job(t) for t in range(cfg.trials)]
    records = [r for chunk in chunks for r in chunk]
    return AccuracyReport.from_records(records, cfg.to_dict())


def run_lambda_ablation(base_cfg: ExperimentConfig, lambdas, workers: int = 1) -> list[AccuracyReport]:
    out = []
    for lam in lambdas:
        cfg = replace(base_cfg, bin_cfg=replace(base_cfg.bin_cfg, lam=float(lam)))
        out.append(run_experiment(cfg, workers))
    return out


def ablation_csv(lambdas, reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "type1", "type2"])
    for lam, rep in zip(lambdas, reports):
        w.writerow([repr(float(lam)), _cell(rep.type1_accuracy), _cell(rep.type2_accuracy)])
    return buf.getvalue()


def _cell(v):
    return "" if v is None else repr(float(v))


def report_csv(report: AccuracyReport) -> str:
    buf = io.StringIO()
    cols = ["trial", "hypothesis", "statistic", "dof", "p_value", "reject", "error"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in report.per_trial:
        w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in cols])
    return buf.getvalue()


def emit_report(report: AccuracyReport, path, csv_path=None) -> None:
    Path(path).write_text(report.to_json(), encoding="utf-8")
    if csv_path is not None:
        Path(csv_path).write_text(report_csv(report), encoding="utf-8")


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)
