"""Command-line entry point: ``tard <verb> [--config FILE] [--seed N] [--out DIR]``.

Verbs
  synth     write a seeded source/target pair (CSV + manifests) and a run config
  train     fit one method on the first target case and save its bundle
  adapt     train the adaptive module on top of a saved source-only bundle
  detect    score a series with a saved bundle, write its trace and labels
  stream    like detect, batch by batch, reporting alarm onsets and latency
  evaluate  run every configured method on every case and write the report

The run config is YAML::

    seed: 0
    data:
      source: [source.yaml]          # manifests; their rows are concatenated
      cases:  [case_a.yaml, case_b.yaml]
    split: {adapt_rows: 2500, val_fraction: 0.2, adapt_from: prefix}
    run:   {window: 10, alpha: 1.0, methods: [source_only, adabn, mmd, tard],
            train: {epochs: 200}, adapt: {epochs: 200}, mmd: {weight: 1.0}}

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .adaptation import pretrain_source
from .data import (FaultSpec, FaultWindow, LabeledSeries, Manifest, ShiftSpec, SplitPlan, SynthConfig, concat_series,
                   dump_manifest, generate_synthetic, load_case, make_splits, Standardizer, write_csv)
from .detection import score_series
from .errors import TardError, UsageError
from .harness import METHODS, Case, RunConfig, _z, emit_report, evaluate_traces, fit_bundle, predict_series, run_case
from .models import load_bundle, save_bundle

log = logging.getLogger("tard")


@dataclass
class Experiment:
    seed: int
    source: LabeledSeries
    cases: list[tuple[str, list[LabeledSeries]]]
    plan: SplitPlan
    run: RunConfig
    echo: dict

    def case(self, index: int = 0) -> Case:
        name, parts = self.cases[index]
        return Case(name, self.source, make_splits(parts, self.plan))


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _as_list(v) -> list:
    return v if isinstance(v, list) else [v]


def _load_entry(base: Path, entry) -> LabeledSeries:
    """``entry`` is a manifest path or ``{manifest: path, rows: [start, stop]}``."""
    if isinstance(entry, dict):
        series = load_case(_resolve(base, entry["manifest"]))
        start, stop = (list(entry.get("rows") or [None, None]) + [None])[:2]
        return series.rows(slice(start, stop), name=entry.get("name", series.name))
    return load_case(_resolve(base, entry))


def _load_case_entry(base: Path, entry) -> tuple[str, list[LabeledSeries]]:
    """A case is one series entry, or ``{name: ..., series: [entries]}``."""
    if isinstance(entry, dict) and "series" in entry:
        parts = [_load_entry(base, e) for e in _as_list(entry["series"])]
        return str(entry.get("name", parts[0].name)), parts
    s = _load_entry(base, entry)
    return s.name, [s]


def load_experiment(path, seed: int | None = None, adabn_scope: str | None = None) -> Experiment:
    path = Path(path)
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    base = path.parent
    data = doc.get("data") or {}
    if "source" not in data or "cases" not in data:
        raise UsageError(f"{path}: 'data' needs 'source' and 'cases' manifest entries")
    sources = [_load_entry(base, e) for e in _as_list(data["source"])]
    source = sources[0] if len(sources) == 1 else concat_series(sources, name="source")
    cases = [_load_case_entry(base, e) for e in _as_list(data["cases"])]
    plan = SplitPlan(**(doc.get("split") or {}))
    run = RunConfig.from_dict(doc.get("run") or {})
    if adabn_scope is not None:
        run = replace(run, adabn_scope=adabn_scope)
    seed = int(doc.get("seed", 0)) if seed is None else seed
    echo = {"data": data, "split": asdict(plan), "run": run.to_dict()}
    return Experiment(seed, source, cases, plan, run, echo)


# -- verbs ------------------------------------------------------------------

def cmd_synth(args) -> int:
    """Seeded source and faulty target with a sensor shift, plus a run config."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = {}
    if args.config:
        with open(args.config) as fh:
            opts = (yaml.safe_load(fh) or {}).get("synth") or {}
    seed = args.seed if args.seed is not None else int(opts.get("seed", 0))
    n_sensors = int(opts.get("n_sensors", 8))
    n_shift = int(opts.get("shifted_sensors", 4))
    common = dict(plant_seed=5_000 + seed, n_controls=int(opts.get("n_controls", 2)), n_sensors=n_sensors,
                  noise=float(opts.get("noise", 0.05)), control_noise=float(opts.get("control_noise", 0.01)))
    # the source unit sweeps many setpoints so its model covers the operating envelope
    source = generate_synthetic(SynthConfig(seed=seed, n_samples=int(opts.get("source_rows", 3000)),
                                            segment=(20, 60), ramp=10, **common))
    n_target = int(opts.get("target_rows", 2000))
    fault = FaultSpec("offset", int(opts.get("fault_sensor", 0)), float(opts.get("fault_amplitude", 0.5)),
                      int(opts.get("fault_start", 1100)), int(opts.get("fault_duration", 400)))
    shift = ShiftSpec((float(opts.get("offset", 0.6)),) * n_shift, (float(opts.get("gain", 1.15)),) * n_shift)
    target = generate_synthetic(SynthConfig(seed=10_000 + seed, n_samples=n_target, shift=shift,
                                            faults=(fault,), **common))
    schema = source.series.schema
    t = target.series.time
    window = FaultWindow(float(t[fault.start]), float(t[fault.start + fault.duration - 1]))
    for name, series, faults in (("source", source.series, []), ("target", target.series, [window])):
        write_csv(series, out / f"{name}.csv")
        dump_manifest(Manifest(schema, faults, 1.0, f"{name}.csv", name), out / f"{name}.yaml")
    run_doc = {"seed": seed, "data": {"source": ["source.yaml"], "cases": ["target.yaml"]},
               "split": {"adapt_rows": int(opts.get("adapt_rows", 500)), "val_fraction": 0.2},
               "run": {"train": {"epochs": int(opts.get("epochs", 200))},
                       "adapt": {"epochs": int(opts.get("epochs", 200))}}}
    with open(out / "run.yaml", "w") as fh:
        yaml.safe_dump(run_doc, fh, sort_keys=False)
    print(f"wrote {out / 'source.csv'}, {out / 'target.csv'} and {out / 'run.yaml'}")
    return 0


def _need_config(args) -> Experiment:
    if not args.config:
        raise UsageError(f"'{args.verb}' needs --config")
    return load_experiment(args.config, args.seed, getattr(args, "adabn_scope", None))


def cmd_train(args) -> int:
    exp = _need_config(args)
    case = exp.case(0)
    bundle = fit_bundle(args.method, case, exp.run, exp.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_bundle(bundle, out / f"{args.method}.bundle.json")
    print(f"saved {out / f'{args.method}.bundle.json'} (threshold {bundle.scoring.threshold:.6g})")
    return 0


def cmd_adapt(args) -> int:
    exp = _need_config(args)
    base = load_bundle(args.bundle)
    if base.adaptive is not None:
        raise UsageError(f"{args.bundle} already carries an adaptive module")
    case = exp.case(0)
    bundle = fit_bundle("tard", case, exp.run, exp.seed, pretrained=base.autoencoder)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_bundle(bundle, out / "tard.bundle.json")
    print(f"saved {out / 'tard.bundle.json'} (threshold {bundle.scoring.threshold:.6g})")
    return 0


def _score_input(args):
    bundle = load_bundle(args.bundle)
    series = load_case(args.input)
    if series.schema.names != bundle.schema.names:
        raise UsageError(f"{args.input}: columns {series.schema.names} do not match the bundle's")
    pred = predict_series(bundle, series)
    trace = score_series(pred, series.batch.sensors, bundle.scoring, series.labels, series.name)
    return bundle, series, trace


def _detection_doc(bundle, trace, seed) -> dict:
    doc = {"seed": seed, "method": bundle.method, "threshold": bundle.scoring.threshold,
           "n_scored": int(len(trace.labels)), "n_detected": int(trace.labels.sum())}
    truth = trace.scored_truth
    if truth is not None and len(truth):
        m = evaluate_traces([trace])
        doc.update({k: m[k] for k in ("accuracy", "f1", "auc", "false_alarm_rate")})
    return doc


def cmd_detect(args) -> int:
    bundle, series, trace = _score_input(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    doc = _detection_doc(bundle, trace, bundle.seed)
    (out / "detect.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps(doc))
    return 0


def alarm_onsets(labels: np.ndarray) -> list[int]:
    """Indices where the label switches from 0 to 1 (or starts at 1)."""
    labels = np.asarray(labels, dtype=np.int8)
    edges = np.flatnonzero(np.diff(np.concatenate([[0], labels])) == 1)
    return [int(i) for i in edges]


def cmd_stream(args) -> int:
    """Batch-wise detection. The forward min-window delays each decision by
    ``window - 1`` samples, so an alarm at index i is raised once sample
    ``i + window - 1`` has arrived."""
    bundle, series, trace = _score_input(args)
    window = bundle.scoring.window
    events = []
    truth = series.labels
    fault_starts = alarm_onsets(truth)
    for i in alarm_onsets(trace.labels):
        event = {"index": i, "raised_at": i + window - 1}
        prior = [s for s in fault_starts if s <= i]
        if prior and truth[i]:
            event["latency"] = i + window - 1 - prior[-1]
        events.append(event)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    doc = _detection_doc(bundle, trace, bundle.seed)
    doc["stream_batch"] = int(bundle.extra.get("stream_batch", 64))
    doc["alarms"] = events
    (out / "stream.json").write_text(json.dumps(doc, indent=2) + "\n")
    for e in events:
        print(json.dumps(e))
    return 0


def cmd_evaluate(args) -> int:
    exp = _need_config(args)
    results = []
    pretrained = None
    for i in range(len(exp.cases)):
        # the source model depends only on source data and seed: share it across cases
        case = exp.case(i)
        if pretrained is None and any(m != "mmd" for m in exp.run.methods):
            stats = Standardizer.fit(exp.source.batch.values)
            pretrained = pretrain_source(_z(exp.source, stats), exp.run.with_seed(exp.seed).train)
        results += run_case(case, exp.run, exp.seed, pretrained=pretrained)
    emit_report(results, args.out, exp.echo, exp.seed)
    print((Path(args.out) / "report.md").read_text(), end="")
    return 0


VERBS = {"synth": cmd_synth, "train": cmd_train, "adapt": cmd_adapt, "detect": cmd_detect,
         "stream": cmd_stream, "evaluate": cmd_evaluate}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run-config YAML")
    common.add_argument("--seed", type=int, default=None, help="override the config's seed")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tard", description="Test-time adaptive reconstruction fault detection")
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic source/target pair")
    t = sub.add_parser("train", parents=[common], help="fit one method and save its bundle")
    t.add_argument("--method", default="source_only", choices=METHODS)
    t.add_argument("--adabn-scope", choices=("batch", "global"), default=None)
    a = sub.add_parser("adapt", parents=[common], help="add an adaptive module to a source-only bundle")
    a.add_argument("--bundle", required=True)
    for verb in ("detect", "stream"):
        d = sub.add_parser(verb, parents=[common], help=f"{verb} faults in a series with a saved bundle")
        d.add_argument("--bundle", required=True)
        d.add_argument("--input", required=True, help="manifest of the series to score")
    e = sub.add_parser("evaluate", parents=[common], help="run all methods on all cases, write the report")
    e.add_argument("--adabn-scope", choices=("batch", "global"), default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return VERBS[args.verb](args)
    except (TardError, FileNotFoundError) as exc:
        print(f"tard {args.verb}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
