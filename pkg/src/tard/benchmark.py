"""Seeded synthetic domain-shift benchmark.

A source unit and a target unit share a sensor map. The target's noiseless
sensors get a gain and offset change on some sensors, its operating
schedule differs, and an offset fault is injected into its test part with
an amplitude tied to the source model's healthy residual level.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .adaptation import pretrain_source
from .data import (FaultSpec, LabeledSeries, ShiftSpec, SplitPlan, Standardizer, SynthConfig, apply_fault,
                   generate_synthetic, make_splits)
from .harness import Case, MethodResult, RunConfig, _z, run_case
from .models import ae_predict
from .netcore import Mode


@dataclass(frozen=True)
class BenchmarkConfig:
    n_sensors: int = 8
    n_controls: int = 2
    shifted_sensors: int = 4
    gain: float = 1.15
    offset: float = 0.6
    noise: float = 0.05
    control_noise: float = 0.01
    source_rows: int = 3000
    adapt_rows: int = 500
    test_rows: int = 1500
    target_control_range: tuple[float, float] = (0.2, 0.8)
    # the data-rich source unit visits many setpoints; the target holds few, longer ones
    source_segment: tuple[int, int] = (20, 60)
    source_ramp: int = 10
    segment: tuple[int, int] = (150, 400)
    ramp: int = 40
    fault_factor: float = 5.0
    fault_start: int = 600
    fault_duration: int = 400
    shift: bool = True
    run: RunConfig = field(default_factory=RunConfig)


@dataclass
class SeedOutcome:
    seed: int
    faulty: list[MethodResult]
    clean: list[MethodResult]
    fault_sensor: int
    fault_amplitude: float

    def by_method(self, which: str = "faulty") -> dict[str, MethodResult]:
        return {r.method: r for r in getattr(self, which)}


def healthy_residual_level(model, stats: Standardizer, series: LabeledSeries) -> np.ndarray:
    """Mean absolute raw-unit residual per sensor of ``model`` on healthy data."""
    model.set_mode(Mode.EVAL)
    pred = stats.inverse_columns(ae_predict(_z(series, stats), model), series.schema.sensor)
    return np.abs(pred - series.batch.sensors).mean(axis=0)


def build_target(bench: BenchmarkConfig, seed: int) -> SynthConfig:
    k = bench.n_sensors
    shift = None
    if bench.shift:
        n = bench.shifted_sensors
        shift = ShiftSpec(offset=(bench.offset,) * n, gain=(bench.gain,) * n)
    return SynthConfig(seed=10_000 + seed, plant_seed=5_000 + seed, n_samples=bench.adapt_rows + bench.test_rows,
                       n_controls=bench.n_controls, n_sensors=k, noise=bench.noise, control_noise=bench.control_noise,
                       segment=bench.segment, ramp=bench.ramp,
                       control_range=bench.target_control_range if bench.shift else (0.2, 0.8), shift=shift)


def run_seed(bench: BenchmarkConfig, seed: int, methods=("source_only", "tard")) -> SeedOutcome:
    cfg = replace(bench.run, methods=tuple(methods))
    src_cfg = SynthConfig(seed=seed, plant_seed=5_000 + seed, n_samples=bench.source_rows,
                          n_controls=bench.n_controls, n_sensors=bench.n_sensors, noise=bench.noise,
                          control_noise=bench.control_noise, segment=bench.source_segment,
                          ramp=bench.source_ramp)
    source = generate_synthetic(src_cfg).series
    stats = Standardizer.fit(source.batch.values)
    model = pretrain_source(_z(source, stats), cfg.with_seed(seed).train)

    holdout = generate_synthetic(replace(src_cfg, seed=20_000 + seed, n_samples=1000)).series
    level = healthy_residual_level(model, stats, holdout)

    clean_target = generate_synthetic(build_target(bench, seed)).series
    rng = np.random.default_rng(30_000 + seed)
    sensor = int(rng.integers(bench.n_sensors))
    # one healthy residual level for the stream: the mean over sensors
    amplitude = float(bench.fault_factor * level.mean())
    faulty_values = clean_target.batch.values.copy()
    sensors = faulty_values[:, bench.n_controls:]
    start = bench.adapt_rows + bench.fault_start
    apply_fault(sensors, FaultSpec("offset", sensor, amplitude, start, bench.fault_duration))
    faulty_values[:, bench.n_controls:] = sensors
    labels = np.zeros(len(clean_target), dtype=np.int8)
    labels[start:start + bench.fault_duration] = 1
    faulty_target = LabeledSeries(type(clean_target.batch)(faulty_values, clean_target.schema), labels,
                                  clean_target.time, "faulty")

    plan = SplitPlan(bench.adapt_rows, cfg.adapt.val_fraction)
    faulty_case = Case(f"synthetic-faulty-{seed}", source, make_splits(faulty_target, plan))
    clean_case = Case(f"synthetic-clean-{seed}", source, make_splits(clean_target, plan))
    faulty = run_case(faulty_case, cfg, seed, pretrained=model)
    clean = run_case(clean_case, cfg, seed, pretrained=model)
    return SeedOutcome(seed, faulty, clean, sensor, amplitude)


@dataclass
class BenchmarkSummary:
    outcomes: list[SeedOutcome]

    def f1(self, method: str) -> np.ndarray:
        return np.array([o.by_method()[method].f1 for o in self.outcomes])

    def clean_far(self, method: str) -> np.ndarray:
        return np.array([o.by_method("clean")[method].false_alarm_rate for o in self.outcomes])

    def median_f1(self, method: str) -> float:
        return float(np.median(self.f1(method)))

    def to_dict(self) -> dict:
        methods = [r.method for r in self.outcomes[0].faulty]
        return {
            "seeds": [o.seed for o in self.outcomes],
            "median_f1": {m: self.median_f1(m) for m in methods},
            "median_clean_far": {m: float(np.median(self.clean_far(m))) for m in methods},
            "max_clean_far": {m: float(np.max(self.clean_far(m))) for m in methods},
        }


def run_benchmark(bench: BenchmarkConfig, seeds=range(20), methods=("source_only", "tard")) -> BenchmarkSummary:
    return BenchmarkSummary([run_seed(bench, s, methods) for s in seeds])
