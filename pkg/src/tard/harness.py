"""Method runners for source-only, AdaBN, MMD and TARD, and report emission.

Every method shares the same protocol: standardize with source statistics,
fit, compute the threshold base on the healthy target adaptation rows,
score each test series, then compute accuracy / F1 on thresholded labels
and AUC on smoothed scores.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .adaptation import MMDConfig, TrainConfig, adabn_transform, pretrain_mmd, pretrain_source, train_adaptive
from .data import LabeledSeries, SampleBatch, Splits, Standardizer, batch_bounds
from .detection import ScoreTrace, ScoringConfig, compute_threshold_base, anomaly_score, relative_residual, \
    score_series, sensor_scale
from .errors import ConfigError, MethodRunError, TardError
from .metrics import accuracy, auc, f1_score, false_alarm_rate
from .models import AutoencoderModel, ModelBundle, adaptive_correction, ae_predict
from .netcore import Mode

log = logging.getLogger(__name__)

METHODS = ("source_only", "adabn", "mmd", "tard")


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    adapt: TrainConfig = field(default_factory=TrainConfig)
    mmd: MMDConfig = field(default_factory=MMDConfig)
    window: int = 10
    alpha: float = 1.0
    score_variant: str = "mean_max"
    stream_batch: int = 64
    adabn_scope: str = "batch"
    output_activation: str = "relu"
    threshold_inference: str = "stream"
    contiguous_adapt: bool = True
    methods: tuple[str, ...] = METHODS

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
        if self.adabn_scope not in ("batch", "global"):
            raise ConfigError(f"adabn_scope must be 'batch' or 'global', got {self.adabn_scope!r}")
        if self.threshold_inference not in ("stream", "eval"):
            raise ConfigError(f"threshold_inference must be 'stream' or 'eval', got {self.threshold_inference!r}")
        if self.stream_batch < 2:
            raise ConfigError("stream_batch must be at least 2")

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, train=replace(self.train, seed=seed), adapt=replace(self.adapt, seed=seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mmd"]["bandwidths"] = list(self.mmd.bandwidths)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d or {})
        kwargs = {}
        for key in ("train", "adapt"):
            if key in d:
                kwargs[key] = TrainConfig(**d.pop(key))
        if "mmd" in d:
            m = dict(d.pop("mmd"))
            if "bandwidths" in m:
                m["bandwidths"] = tuple(float(b) for b in m["bandwidths"])
            kwargs["mmd"] = MMDConfig(**m)
        if "methods" in d:
            kwargs["methods"] = tuple(d.pop("methods"))
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown run-config key(s): {sorted(unknown)}")
        return cls(**kwargs, **d)


@dataclass
class Case:
    """One target domain: healthy source data plus the target splits (raw units)."""

    name: str
    source: LabeledSeries
    splits: Splits


@dataclass
class MethodResult:
    case: str
    method: str
    seed: int
    accuracy: float
    f1: float
    auc: float
    false_alarm_rate: float
    threshold: float
    n_scored: int
    traces: list[ScoreTrace] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {"case": self.case, "method": self.method, "seed": self.seed, "accuracy": self.accuracy,
                "f1": self.f1, "auc": self.auc, "false_alarm_rate": self.false_alarm_rate,
                "threshold": self.threshold, "n_scored": self.n_scored}


# -- fitting ----------------------------------------------------------------

def _z(series: LabeledSeries, stats: Standardizer) -> SampleBatch:
    return SampleBatch(stats.transform(series.batch.values), series.schema)


def fit_bundle(method: str, case: Case, cfg: RunConfig, seed: int,
               pretrained: AutoencoderModel | None = None) -> ModelBundle:
    """Train ``method`` on ``case`` and attach a scoring config with its threshold base.

    ``pretrained`` (a source-only autoencoder for the same seed) is deep-copied
    and reused by the methods that start from one.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    cfg = cfg.with_seed(seed)
    stats = Standardizer.fit(case.source.batch.values, provenance=f"source:{case.source.name}")
    src = _z(case.source, stats)
    tr, val = _z(case.splits.target_train, stats), _z(case.splits.target_val, stats)

    if method == "mmd":
        ae = pretrain_mmd(src, SampleBatch(np.vstack([tr.values, val.values]), tr.schema), cfg.train, cfg.mmd,
                          target_validation=val)
    elif pretrained is not None:
        ae = copy.deepcopy(pretrained)
    else:
        ae = pretrain_source(src, cfg.train)
    ae.set_mode(Mode.EVAL)

    adaptive = None
    if method == "tard":
        adaptive = train_adaptive(tr, ae, cfg.adapt, validation=val, output_activation=cfg.output_activation,
                                  contiguous=cfg.contiguous_adapt)

    adapt_raw = case.splits.target_adapt
    scoring = ScoringConfig(sensor_scale(adapt_raw.batch.sensors), window=cfg.window, alpha=cfg.alpha,
                            variant=cfg.score_variant)
    bundle = ModelBundle(ae, case.source.schema, stats, adaptive, scoring, method, seed,
                         extra={"adabn_scope": cfg.adabn_scope, "stream_batch": cfg.stream_batch})
    scores = _raw_scores(bundle, adapt_raw, threshold_pass=cfg.threshold_inference == "eval")
    scoring.threshold_base = compute_threshold_base(scores, cfg.window)
    return bundle


# -- inference --------------------------------------------------------------

def predict_series(bundle: ModelBundle, series: LabeledSeries | SampleBatch, threshold_pass: bool = False,
                   stream_batch: int | None = None) -> np.ndarray:
    """Raw-unit sensor predictions following the bundle's method.

    source_only / mmd: autoencoder in Eval mode.
    adabn: a copy of the autoencoder takes each stream batch's BN statistics
    (or the whole series' with ``adabn_scope='global'``).
    tard: autoencoder in Eval mode plus the adaptive module run in AdaBN mode
    per stream batch. When computing the threshold base the adaptive module
    runs in Eval mode on the healthy adaptation rows.
    """
    batch = series.batch if isinstance(series, LabeledSeries) else series
    stats = bundle.standardizer
    z = SampleBatch(stats.transform(batch.values), batch.schema)
    size = stream_batch or int(bundle.extra.get("stream_batch", 64))
    ae = bundle.autoencoder
    method = bundle.method
    ae.set_mode(Mode.EVAL)

    if method in ("source_only", "mmd"):
        pred = ae_predict(z, ae)
    elif method == "adabn":
        work = copy.deepcopy(ae)
        if bundle.extra.get("adabn_scope", "batch") == "global":
            adabn_transform(work, z)
            pred = ae_predict(z, work)
        else:
            parts = []
            for lo, hi in batch_bounds(len(z), size):
                zb = z.rows(slice(lo, hi))
                adabn_transform(work, zb)
                parts.append(ae_predict(zb, work))
            pred = np.vstack(parts)
    elif method == "tard":
        if bundle.adaptive is None:
            raise ConfigError("tard bundle has no adaptive module")
        base = ae_predict(z, ae)
        module = bundle.adaptive
        if threshold_pass:
            module.set_mode(Mode.EVAL)
            pred = base + adaptive_correction(z, module)
        else:
            module = copy.deepcopy(module)
            module.set_mode(Mode.ADABN)
            parts = [adaptive_correction(z.rows(slice(lo, hi)), module) for lo, hi in batch_bounds(len(z), size)]
            pred = base + np.vstack(parts)
    else:
        raise ConfigError(f"unknown method {method!r}")
    return bundle.to_raw_sensors(pred)


def _raw_scores(bundle: ModelBundle, series: LabeledSeries, threshold_pass: bool = False) -> np.ndarray:
    pred = predict_series(bundle, series, threshold_pass=threshold_pass)
    r = relative_residual(pred, series.batch.sensors, bundle.scoring.sensor_scale)
    return anomaly_score(r, bundle.scoring.variant)


def score_case(bundle: ModelBundle, test: Sequence[LabeledSeries]) -> list[ScoreTrace]:
    traces = []
    for s in test:
        if len(s) < bundle.scoring.window:
            log.warning("test series %r shorter than the window; skipped", s.name)
            continue
        pred = predict_series(bundle, s)
        traces.append(score_series(pred, s.batch.sensors, bundle.scoring, s.labels, s.name))
    return traces


def evaluate_traces(traces: Sequence[ScoreTrace]) -> dict:
    """Metrics over the scored (non-truncated) rows of every trace."""
    smoothed = np.concatenate([t.smoothed for t in traces])
    labels = np.concatenate([t.labels for t in traces])
    truth = np.concatenate([t.scored_truth for t in traces])
    try:
        area = auc(smoothed, truth)
    except ConfigError:
        area = float("nan")
    return {"accuracy": accuracy(labels, truth), "f1": f1_score(labels, truth), "auc": area,
            "false_alarm_rate": false_alarm_rate(labels, truth), "n_scored": int(len(truth))}


def run_method(method: str, case: Case, cfg: RunConfig, seed: int,
               pretrained: AutoencoderModel | None = None) -> MethodResult:
    try:
        bundle = fit_bundle(method, case, cfg, seed, pretrained)
        traces = score_case(bundle, case.splits.test)
        if not traces:
            raise ConfigError("no test series long enough to score")
        m = evaluate_traces(traces)
    except TardError as exc:
        raise MethodRunError(case.name, method, exc) from exc
    return MethodResult(case.name, method, seed, m["accuracy"], m["f1"], m["auc"], m["false_alarm_rate"],
                        bundle.scoring.threshold, m["n_scored"], traces)


def run_case(case: Case, cfg: RunConfig, seed: int,
             pretrained: AutoencoderModel | None = None) -> list[MethodResult]:
    """Run every configured method on ``case``; the source-only pretrain is shared."""
    if pretrained is None and any(m in ("source_only", "adabn", "tard") for m in cfg.methods):
        stats = Standardizer.fit(case.source.batch.values)
        pretrained = pretrain_source(_z(case.source, stats), cfg.with_seed(seed).train)
    return [run_method(m, case, cfg, seed, pretrained) for m in cfg.methods]


# -- reports ----------------------------------------------------------------

def _fmt(v: float) -> str:
    return "  nan" if v != v else f"{v:.2f}"


def report_table(results: Sequence[MethodResult]) -> str:
    """Plain-text table: one row per case, Acc/F1/AUC per method, 2 decimals."""
    methods = [m for m in METHODS if any(r.method == m for r in results)]
    cases = list(dict.fromkeys(r.case for r in results))
    by = {(r.case, r.method): r for r in results}
    head = "| case | " + " | ".join(f"{m} Acc | {m} F1 | {m} AUC" for m in methods) + " |"
    sep = "|---|" + "---|" * (3 * len(methods))
    lines = [head, sep]
    for c in cases:
        cells = []
        for m in methods:
            r = by.get((c, m))
            cells += [_fmt(r.accuracy), _fmt(r.f1), _fmt(r.auc)] if r else ["-", "-", "-"]
        lines.append(f"| {c} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_report(results: Sequence[MethodResult], out_dir, config_echo: dict, seed: int,
                write_traces: bool = True) -> dict:
    """Write ``report.json``, ``report.md`` and per-(case, method) trace CSVs.

    Output is a pure function of the inputs: no timestamps, fixed key order.
    """
    if not results:
        raise ConfigError("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in results:
        row = r.row()
        if write_traces:
            files = []
            for i, t in enumerate(r.traces):
                fname = f"trace_{_slug(r.case)}_{r.method}_{i}.csv"
                t.to_csv(out / fname)
                files.append(fname)
            row["traces"] = files
        rows.append(row)
    doc = {"seed": seed, "config": config_echo, "results": rows}
    (out / "report.json").write_text(json.dumps(doc, indent=2, allow_nan=True) + "\n")
    (out / "report.md").write_text(report_table(results))
    return doc


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name).strip("_") or "case"
