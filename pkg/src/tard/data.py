"""Condition-monitoring data: feature partitioning into control variables and
sensor measurements, CSV/manifest ingestion, standardization, split
protocols, ordered test-batch streaming and a seeded synthetic plant.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import yaml

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

CONTROL = "control"
SENSOR = "sensor"


@dataclass(frozen=True)
class FeatureSchema:
    """Column names with each column assigned to exactly one role."""

    names: tuple[str, ...]
    control: tuple[int, ...]
    sensor: tuple[int, ...]
    units: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.names)
        if len(set(self.names)) != n:
            raise ConfigError(f"duplicate column names in schema: {list(self.names)}")
        if not self.control or not self.sensor:
            raise ConfigError("schema needs at least one control and one sensor column")
        c, s = set(self.control), set(self.sensor)
        if c & s:
            raise ConfigError(f"columns {sorted(c & s)} are both control and sensor")
        if c | s != set(range(n)):
            raise ConfigError(f"columns {sorted(set(range(n)) - (c | s))} have no role")
        if self.units and len(self.units) != n:
            raise ConfigError("units must have one entry per column")

    @classmethod
    def from_roles(cls, names: Sequence[str], roles: Sequence[str], units: Sequence[str] = ()) -> "FeatureSchema":
        bad = [r for r in roles if r not in (CONTROL, SENSOR)]
        if bad:
            raise ConfigError(f"unknown column role(s): {bad}")
        return cls(
            names=tuple(names),
            control=tuple(i for i, r in enumerate(roles) if r == CONTROL),
            sensor=tuple(i for i, r in enumerate(roles) if r == SENSOR),
            units=tuple(units),
        )

    @property
    def n_columns(self) -> int:
        return len(self.names)

    @property
    def control_dim(self) -> int:
        return len(self.control)

    @property
    def sensor_dim(self) -> int:
        return len(self.sensor)

    @property
    def roles(self) -> list[str]:
        c = set(self.control)
        return [CONTROL if i in c else SENSOR for i in range(self.n_columns)]

    def to_dict(self) -> dict:
        return {"names": list(self.names), "control": list(self.control), "sensor": list(self.sensor),
                "units": list(self.units)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(tuple(d["names"]), tuple(d["control"]), tuple(d["sensor"]), tuple(d.get("units", ())))


@dataclass
class SampleBatch:
    """Rows x features, with the control/sensor partition carried alongside."""

    values: np.ndarray
    schema: FeatureSchema

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != self.schema.n_columns:
            raise ConfigError(f"values of shape {self.values.shape} do not match "
                              f"{self.schema.n_columns} schema columns")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def controls(self) -> np.ndarray:
        return self.values[:, list(self.schema.control)]

    @property
    def sensors(self) -> np.ndarray:
        return self.values[:, list(self.schema.sensor)]

    def rows(self, index) -> "SampleBatch":
        return SampleBatch(self.values[index], self.schema)


@dataclass
class LabeledSeries:
    batch: SampleBatch
    labels: np.ndarray
    time: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        self.time = np.asarray(self.time, dtype=np.float64)
        n = len(self.batch)
        if self.labels.shape != (n,) or self.time.shape != (n,):
            raise DataError(f"series {self.name!r}: labels/time length must equal row count {n}")
        if n > 1 and np.any(np.diff(self.time) < 0):
            raise DataError(f"series {self.name!r}: timestamps are not non-decreasing")

    def __len__(self) -> int:
        return len(self.batch)

    def rows(self, index, name: str | None = None) -> "LabeledSeries":
        return LabeledSeries(self.batch.rows(index), self.labels[index], self.time[index],
                             self.name if name is None else name)

    @property
    def schema(self) -> FeatureSchema:
        return self.batch.schema


def concat_series(parts: Sequence[LabeledSeries], name: str = "") -> LabeledSeries:
    """Stack series row-wise; time is re-based so it stays non-decreasing."""
    if not parts:
        raise DataError("nothing to concatenate")
    schema = parts[0].schema
    times, offset = [], 0.0
    for p in parts:
        if p.schema != schema:
            raise DataError("cannot concatenate series with different schemas")
        t = p.time - (p.time[0] if len(p) else 0.0) + offset
        times.append(t)
        if len(p):
            offset = t[-1] + 1.0
    return LabeledSeries(SampleBatch(np.vstack([p.batch.values for p in parts]), schema),
                         np.concatenate([p.labels for p in parts]), np.concatenate(times), name)


# -- manifests and CSV ------------------------------------------------------

@dataclass(frozen=True)
class FaultWindow:
    start_s: float
    end_s: float

    def __post_init__(self):
        if self.end_s < self.start_s:
            raise ConfigError(f"fault window ends ({self.end_s}) before it starts ({self.start_s})")


@dataclass
class Manifest:
    schema: FeatureSchema
    faults: list[FaultWindow] = field(default_factory=list)
    rate_hz: float = 1.0
    csv: str | None = None
    name: str = ""


def load_manifest(path) -> Manifest:
    path = Path(path)
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    try:
        cols = doc["columns"]
    except KeyError:
        raise DataError(f"{path}: manifest has no 'columns' entry") from None
    names = [c["name"] for c in cols]
    roles = [c["role"] for c in cols]
    units = [str(c.get("unit", "")) for c in cols]
    faults = [FaultWindow(float(f["start_s"]), float(f["end_s"])) for f in doc.get("faults") or []]
    csv_path = doc.get("csv")
    if csv_path is not None and not Path(csv_path).is_absolute():
        csv_path = str(path.parent / csv_path)
    return Manifest(FeatureSchema.from_roles(names, roles, units), faults, float(doc.get("rate_hz", 1.0)),
                    csv_path, doc.get("name", path.stem))


def dump_manifest(manifest: Manifest, path) -> None:
    doc = {
        "name": manifest.name,
        "rate_hz": manifest.rate_hz,
        "columns": [{"name": n, "role": r, "unit": u} for n, r, u in
                    zip(manifest.schema.names, manifest.schema.roles,
                        manifest.schema.units or [""] * manifest.schema.n_columns)],
        "faults": [{"start_s": f.start_s, "end_s": f.end_s} for f in manifest.faults],
    }
    if manifest.csv:
        doc["csv"] = manifest.csv
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def label_from_windows(time: np.ndarray, faults: Sequence[FaultWindow]) -> np.ndarray:
    """1 for samples whose timestamp lies inside any closed fault window."""
    labels = np.zeros(len(time), dtype=np.int8)
    for f in faults:
        labels[(time >= f.start_s) & (time <= f.end_s)] = 1
    return labels


def ingest_csv(path, schema: FeatureSchema, faults: Sequence[FaultWindow] = (), rate_hz: float = 1.0,
               name: str | None = None) -> LabeledSeries:
    """Read a comma-separated table into a labeled series.

    The header must name every schema column; a leading ``t`` column (seconds)
    is used for timestamps, otherwise rows are timed at ``rate_hz``.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [n for n in schema.names if n not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        has_time = "t" in header
        cols = [header.index(n) for n in schema.names]
        t_col = header.index("t") if has_time else None
        values, times = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values.append([float(row[c]) for c in cols])
                if has_time:
                    times.append(float(row[t_col]))
            except (ValueError, IndexError):
                for c, n in zip([t_col] * has_time + cols, ["t"] * has_time + list(schema.names)):
                    try:
                        float(row[c])
                    except (ValueError, IndexError):
                        cell = row[c] if c < len(row) else "<missing>"
                        raise DataError(f"{path}: row {lineno}, column {n!r}: non-numeric value {cell!r}") from None
                raise
    if not values:
        raise DataError(f"{path}: no data rows")
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        r, c = np.argwhere(~np.isfinite(arr))[0]
        raise DataError(f"{path}: row {r + 2}, column {schema.names[c]!r}: non-finite value")
    time = np.asarray(times) if has_time else np.arange(len(arr)) / rate_hz
    if len(time) > 1 and np.any(np.diff(time) < 0):
        bad = int(np.argmax(np.diff(time) < 0)) + 3
        raise DataError(f"{path}: time is not monotone at row {bad}")
    return LabeledSeries(SampleBatch(arr, schema), label_from_windows(time, faults), time,
                         name if name is not None else path.stem)


def write_csv(series: LabeledSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *series.schema.names])
        for t, row in zip(series.time, series.batch.values):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])


def load_case(manifest_path) -> LabeledSeries:
    m = load_manifest(manifest_path)
    if m.csv is None:
        raise DataError(f"{manifest_path}: manifest does not name a csv file")
    return ingest_csv(m.csv, m.schema, m.faults, m.rate_hz, name=m.name)


# -- standardization --------------------------------------------------------

@dataclass
class Standardizer:
    """Per-column z-score statistics and where they were computed."""

    mean: np.ndarray
    std: np.ndarray
    provenance: str = ""

    @classmethod
    def fit(cls, values: np.ndarray, provenance: str = "source-train") -> "Standardizer":
        values = np.asarray(values, dtype=np.float64)
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        flat = std <= 1e-12
        if np.any(flat):
            log.warning("zero-variance column(s) %s: using unit variance", np.flatnonzero(flat).tolist())
            std = np.where(flat, 1.0, std)
        return cls(mean, std, provenance)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def inverse_columns(self, z: np.ndarray, columns: Sequence[int]) -> np.ndarray:
        cols = list(columns)
        return np.asarray(z, dtype=np.float64) * self.std[cols] + self.mean[cols]

    def apply(self, series: LabeledSeries) -> LabeledSeries:
        return LabeledSeries(SampleBatch(self.transform(series.batch.values), series.schema),
                             series.labels, series.time, series.name)


def standardize(series: LabeledSeries, stats: Standardizer | None = None) -> tuple[LabeledSeries, Standardizer]:
    """Z-score ``series``; statistics are fitted on it unless ``stats`` is given."""
    if stats is None:
        if np.any(series.labels):
            raise DataError("standardization statistics must come from healthy rows only")
        stats = Standardizer.fit(series.batch.values, provenance=series.name or "fit")
    return stats.apply(series), stats


# -- splits and streaming ---------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    """How many healthy target rows are used for adaptation, and how.

    ``adapt_from='prefix'`` takes healthy rows from the start of each series
    up to its first fault, so adaptation data always precedes test data in
    time. ``'healthy'`` takes the first healthy rows wherever they occur.
    """

    adapt_rows: int
    val_fraction: float = 0.2
    adapt_from: str = "prefix"

    def __post_init__(self):
        if self.adapt_rows < 2:
            raise ConfigError("adapt_rows must be at least 2")
        if not 0.0 < self.val_fraction <= 0.5:
            raise ConfigError(f"val_fraction must lie in (0, 0.5], got {self.val_fraction}")
        if self.adapt_from not in ("prefix", "healthy"):
            raise ConfigError(f"unknown adapt_from {self.adapt_from!r}")


@dataclass
class Splits:
    target_train: LabeledSeries
    target_val: LabeledSeries
    test: list[LabeledSeries]

    @property
    def target_adapt(self) -> LabeledSeries:
        return concat_series([self.target_train, self.target_val], name="target-adapt")


def make_splits(target: Sequence[LabeledSeries] | LabeledSeries, plan: SplitPlan,
                require_healthy_test: bool = False) -> Splits:
    """Carve ``plan.adapt_rows`` healthy rows out of the target series.

    The last ``val_fraction`` of the adaptation rows (in time order) form the
    validation part. Every remaining row of every series is test data.
    """
    if isinstance(target, LabeledSeries):
        target = [target]
    need = plan.adapt_rows
    taken: list[np.ndarray] = []
    for s in target:
        if need == 0:
            taken.append(np.zeros(0, dtype=np.intp))
            continue
        if plan.adapt_from == "prefix":
            faulty = np.flatnonzero(s.labels)
            avail = np.arange(faulty[0] if len(faulty) else len(s))
        else:
            avail = np.flatnonzero(s.labels == 0)
        idx = avail[:need]
        need -= len(idx)
        taken.append(idx)
    if need > 0:
        have = plan.adapt_rows - need
        raise DataError(f"insufficient healthy {plan.adapt_from} rows: need {plan.adapt_rows}, found {have}")
    if plan.adapt_from == "healthy":
        log.warning("adaptation rows taken from anywhere in the series; they may follow test rows in time")

    adapt_parts, test = [], []
    for s, idx in zip(target, taken):
        if len(idx):
            adapt_parts.append(s.rows(idx))
        rest = np.setdiff1d(np.arange(len(s)), idx)
        if len(rest):
            test.append(s.rows(rest))
    adapt = concat_series(adapt_parts, name="target-adapt")
    n_val = max(1, int(round(plan.val_fraction * len(adapt))))
    if len(adapt) - n_val < 2 or n_val < 2:
        raise DataError(f"{len(adapt)} adaptation rows are too few to hold out a validation part")
    if require_healthy_test and not any(np.any(t.labels == 0) for t in test):
        raise DataError("no healthy rows left for testing")
    return Splits(adapt.rows(slice(0, len(adapt) - n_val), "target-train"),
                  adapt.rows(slice(len(adapt) - n_val, len(adapt)), "target-val"), test)


def batch_bounds(n_rows: int, batch_size: int) -> list[tuple[int, int]]:
    """Contiguous ``[start, stop)`` bounds; a trailing batch of one row joins its predecessor."""
    if batch_size < 2:
        raise ConfigError("stream batch size must be at least 2")
    bounds = [(i, min(i + batch_size, n_rows)) for i in range(0, n_rows, batch_size)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < 2:
        last = bounds.pop()
        bounds[-1] = (bounds[-1][0], last[1])
    return bounds


def stream_batches(series: LabeledSeries | SampleBatch, batch_size: int) -> Iterator:
    """Yield time-ordered, non-overlapping row blocks of ``series``."""
    for start, stop in batch_bounds(len(series), batch_size):
        yield series.rows(slice(start, stop))


# -- synthetic plant --------------------------------------------------------

FAULT_TYPES = ("offset", "drift", "stuck", "oscillation")


@dataclass(frozen=True)
class FaultSpec:
    kind: str = "offset"
    sensor: int = 0
    amplitude: float = 1.0
    start: int = 0
    duration: int = 0
    period: float = 50.0

    def __post_init__(self):
        if self.kind not in FAULT_TYPES:
            raise ConfigError(f"unknown fault type {self.kind!r}")


@dataclass(frozen=True)
class ShiftSpec:
    """Per-sensor ``gain * x + offset`` applied to noiseless target sensors."""

    offset: tuple[float, ...] = ()
    gain: tuple[float, ...] = ()


@dataclass(frozen=True)
class SynthConfig:
    """A plant whose sensors respond to slowly changing control setpoints.

    ``plant_seed`` fixes the sensor map (shared by source and target units of
    the same fleet type); ``seed`` drives the operating schedule and noise.
    """

    seed: int = 0
    plant_seed: int = 1234
    n_samples: int = 2000
    n_controls: int = 2
    n_sensors: int = 8
    noise: float = 0.05
    control_noise: float = 0.0
    control_range: tuple[float, float] = (0.2, 0.8)
    segment: tuple[int, int] = (150, 400)
    ramp: int = 40
    shift: ShiftSpec | None = None
    faults: tuple[FaultSpec, ...] = ()
    rate_hz: float = 1.0

    def __post_init__(self):
        if self.noise < 0 or self.control_noise < 0:
            raise ConfigError("noise levels must be non-negative")
        for f in self.faults:
            if f.start < 0 or f.start + f.duration > self.n_samples:
                raise ConfigError(f"fault window [{f.start}, {f.start + f.duration}) outside series")
            if not 0 <= f.sensor < self.n_sensors:
                raise ConfigError(f"fault sensor {f.sensor} out of range")


@dataclass
class SynthResult:
    series: LabeledSeries
    clean: np.ndarray  # noiseless, fault-free sensors (after any domain shift)


def synthetic_schema(n_controls: int, n_sensors: int) -> FeatureSchema:
    names = [f"w{i}" for i in range(n_controls)] + [f"x{j}" for j in range(n_sensors)]
    return FeatureSchema.from_roles(names, [CONTROL] * n_controls + [SENSOR] * n_sensors)


def control_schedule(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    """Piecewise-constant setpoints joined by linear ramps."""
    lo, hi = cfg.control_range
    w = np.empty((cfg.n_samples, cfg.n_controls))
    current = rng.uniform(lo, hi, cfg.n_controls)
    i = 0
    while i < cfg.n_samples:
        hold = int(rng.integers(cfg.segment[0], cfg.segment[1] + 1))
        w[i:i + hold] = current
        i += hold
        nxt = rng.uniform(lo, hi, cfg.n_controls)
        r = min(cfg.ramp, cfg.n_samples - i)
        if r > 0:
            frac = np.arange(1, cfg.ramp + 1) / (cfg.ramp + 1)
            w[i:i + r] = current + frac[:r, None] * (nxt - current)
        i += cfg.ramp
        current = nxt
    return w


def sensor_map(plant_seed: int, n_controls: int, n_sensors: int):
    """Return ``f(w) -> x`` : a linear mix plus a saturating term, all positive."""
    rng = np.random.default_rng(plant_seed)
    base = rng.uniform(4.0, 8.0, n_sensors)
    lin = rng.uniform(-2.0, 2.0, (n_controls, n_sensors))
    sat_in = rng.uniform(-3.0, 3.0, (n_controls, n_sensors))
    sat_out = rng.uniform(0.5, 1.5, n_sensors)

    def f(w: np.ndarray) -> np.ndarray:
        return base + w @ lin + sat_out * np.tanh(w @ sat_in)

    return f


def apply_fault(sensors: np.ndarray, fault: FaultSpec) -> None:
    lo, hi = fault.start, fault.start + fault.duration
    j = fault.sensor
    n = hi - lo
    if n <= 0:
        return
    if fault.kind == "offset":
        sensors[lo:hi, j] += fault.amplitude
    elif fault.kind == "drift":
        sensors[lo:hi, j] += fault.amplitude * np.arange(1, n + 1) / n
    elif fault.kind == "stuck":
        sensors[lo:hi, j] = sensors[lo, j]
    else:
        sensors[lo:hi, j] += fault.amplitude * np.sin(2.0 * math.pi * np.arange(n) / fault.period)


def generate_synthetic(cfg: SynthConfig) -> SynthResult:
    rng = np.random.default_rng(cfg.seed)
    w = control_schedule(rng, cfg)
    clean = sensor_map(cfg.plant_seed, cfg.n_controls, cfg.n_sensors)(w)
    if cfg.shift is not None:
        gain = np.ones(cfg.n_sensors)
        offset = np.zeros(cfg.n_sensors)
        gain[: len(cfg.shift.gain)] = cfg.shift.gain
        offset[: len(cfg.shift.offset)] = cfg.shift.offset
        clean = gain * clean + offset
    observed = clean + cfg.noise * rng.standard_normal(clean.shape)
    w_obs = w + cfg.control_noise * rng.standard_normal(w.shape)
    labels = np.zeros(cfg.n_samples, dtype=np.int8)
    for f in cfg.faults:
        apply_fault(observed, f)
        labels[f.start:f.start + f.duration] = 1
    schema = synthetic_schema(cfg.n_controls, cfg.n_sensors)
    values = np.hstack([w_obs, observed])
    time = np.arange(cfg.n_samples) / cfg.rate_hz
    series = LabeledSeries(SampleBatch(values, schema), labels, time, name=f"synth-{cfg.seed}")
    return SynthResult(series, clean)


def with_faults(cfg: SynthConfig, *faults: FaultSpec) -> SynthConfig:
    return replace(cfg, faults=tuple(faults))
