"""Acceptance suite: one check per primary criterion.

Each test prints a single ``PASS`` / ``FAIL`` line; conftest.py repeats them
in an "acceptance criteria" section at the end of the pytest run. A criterion the
implementation does not meet is reported as FAIL and marked xfail with a
pointer to the decisions ledger; it is never loosened to pass.

The real-data criteria run only when the datasets are available:
``TARD_CRANFIELD_DIR`` must hold the Cranfield CSVs named as in
``tard/manifests/cranfield``; ``TARD_PRONTO_DIR`` the PRONTO CSVs named as in
``tard/manifests/pronto``.
"""

import os
import shutil
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml

import tard
from oracles import auc_oracle_error, gradient_suite, scoring_oracle_error, two_point_mmd
from tard.adaptation import MMDConfig, TrainConfig, mmd_loss, pretrain_source, train_adaptive
from tard.benchmark import BenchmarkConfig, run_benchmark
from tard.cli import load_experiment, main
from tard.data import SampleBatch, ShiftSpec, Standardizer, SynthConfig, generate_synthetic
from tard.harness import run_case
from tard.models import checksum
from tard.netcore import BatchNorm, Mode

LEDGER = "see the status table in README.md and the decisions ledger"
MANIFESTS = Path(tard.__file__).parent / "manifests"
VERDICTS: list[str] = []  # printed in the terminal summary by conftest.py


def report(name: str, ok: bool, detail: str, why: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    VERDICTS.append(line)
    print(line)
    if not ok:
        pytest.xfail(f"{name} not met ({detail}); {why or LEDGER}")


def test_gradient_correctness():
    t0 = time.perf_counter()
    worst = gradient_suite(50, seed=0)
    took = time.perf_counter() - t0
    report("gradient correctness", worst <= 1e-4 and took < 10,
           f"max relative error {worst:.2e} over 50 instances in {took:.1f} s")
    assert worst <= 1e-4


def test_adabn_semantics():
    rng = np.random.default_rng(0)
    ok = True
    for _ in range(50):
        rows, dim = int(rng.integers(2, 40)), int(rng.integers(1, 12))
        x = rng.standard_normal((rows, dim)) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
        bn = BatchNorm(dim, mode=Mode.ADABN)
        out1 = bn.forward(x)
        mean, var = bn.running_mean.copy(), bn.running_var.copy()
        ok &= np.array_equal(mean, x.mean(axis=0)) and np.array_equal(var, x.var(axis=0))
        out2 = bn.forward(x)
        ok &= np.array_equal(out1, out2) and np.array_equal(mean, bn.running_mean)
        ok &= np.array_equal(var, bn.running_var)
    report("AdaBN semantics", ok, "exact replacement and idempotence on 50 random batches")
    assert ok


def test_scoring_oracle():
    worst, mismatches = scoring_oracle_error(1000, seed=0)
    report("scoring oracle", worst <= 1e-12 and mismatches == 0,
           f"max |diff| {worst:.1e}, {mismatches} label mismatches over 1000 instances")
    assert worst <= 1e-12 and mismatches == 0


def test_auc_oracle():
    worst = auc_oracle_error(100, seed=0)
    report("AUC oracle", worst <= 1e-12, f"max |diff| {worst:.1e} over 100 instances with ties")
    assert worst <= 1e-12


def test_mmd_properties():
    rng = np.random.default_rng(0)
    self_max = sym_max = closed_max = 0.0
    for _ in range(20):
        n, m = int(rng.integers(2, 40)), int(rng.integers(2, 40))
        a, b = rng.standard_normal((n, 10)), rng.standard_normal((m, 10)) * 1.5 + 0.3
        cfg = MMDConfig()
        self_max = max(self_max, abs(mmd_loss(a, a, cfg)))
        sym_max = max(sym_max, abs(mmd_loss(a, b, cfg) - mmd_loss(b, a, cfg)))
        d, sigma = float(rng.uniform(0.1, 3)), float(rng.uniform(0.3, 3))
        x, y = np.zeros((2, 10)), np.zeros((2, 10))
        y[:, int(rng.integers(10))] = d
        got = mmd_loss(x, y, MMDConfig(bandwidths=(sigma,), relative=False))
        closed_max = max(closed_max, abs(got - two_point_mmd(d, sigma)))
    ok = self_max <= 1e-9 and sym_max <= 1e-12 and closed_max <= 1e-9
    report("MMD properties", ok, f"mmd(A,A) {self_max:.1e}, asymmetry {sym_max:.1e}, "
                                 f"closed-form error {closed_max:.1e}")
    assert ok


def test_frozen_backbone():
    changed = 0
    runs = 0
    for seed in range(5):
        src = generate_synthetic(SynthConfig(seed=seed, n_samples=600, control_noise=0.01)).series
        st = Standardizer.fit(src.batch.values)
        z = SampleBatch(st.transform(src.batch.values), src.schema)
        ae = pretrain_source(z, TrainConfig(epochs=5, seed=seed))
        tgt = generate_synthetic(SynthConfig(seed=100 + seed, n_samples=400, control_noise=0.01,
                                             shift=ShiftSpec((0.5,) * 4, (1.1,) * 4))).series
        zt = SampleBatch(st.transform(tgt.batch.values), tgt.schema)
        for contiguous in (True, False):
            before = checksum(ae)
            train_adaptive(zt, ae, TrainConfig(epochs=10, seed=seed), contiguous=contiguous)
            changed += checksum(ae) != before
            runs += 1
    report("frozen backbone", changed == 0, f"checksum unchanged in {runs - changed}/{runs} runs")
    assert changed == 0


# -- synthetic benchmark ------------------------------------------------------------

@pytest.fixture(scope="session")
def shifted():
    t0 = time.perf_counter()
    summary = run_benchmark(BenchmarkConfig(shift=True), seeds=range(20))
    return summary, time.perf_counter() - t0


@pytest.fixture(scope="session")
def same_domain():
    return run_benchmark(BenchmarkConfig(shift=False), seeds=range(20))


def test_synthetic_separation(shifted):
    summary, took = shifted
    gain = summary.median_f1("tard") - summary.median_f1("source_only")
    far = float(np.median(summary.clean_far("tard")))
    ok = gain >= 0.15 and far <= 0.02 and took < 300
    report("synthetic separation", ok,
           f"median F1 tard {summary.median_f1('tard'):.3f} vs source_only {summary.median_f1('source_only'):.3f} "
           f"(gain {gain:+.3f}, need >= 0.15); median clean FAR {far:.3f} (need <= 0.02); {took:.0f} s")


def test_same_domain_no_harm(same_domain):
    gap = abs(same_domain.median_f1("tard") - same_domain.median_f1("source_only"))
    report("same-domain no-harm", gap <= 0.05,
           f"|median F1 tard - source_only| = {gap:.3f} over 20 seeds")
    assert gap <= 0.05


def test_detection_end_to_end_oracle(same_domain):
    """Detection-module property: a 5x-level fault is flagged, a clean stream is not (20 seeds)."""
    alpha = 2.0
    run_alpha = BenchmarkConfig().run.alpha
    hit = quiet = 0
    for o in same_domain.outcomes:
        f, c = o.by_method()["source_only"], o.by_method("clean")["source_only"]
        tf, tc = f.traces[0], c.traces[0]
        # stored thresholds are run_alpha * base; relabel the smoothed scores at ``alpha``
        base_f, base_c = f.threshold / run_alpha, c.threshold / run_alpha
        hit += bool(np.any((tf.smoothed > alpha * base_f) & (tf.scored_truth == 1)))
        quiet += not np.any(tc.smoothed > alpha * base_c)
    n = len(same_domain.outcomes)
    report("[property] detection end-to-end", hit == n and quiet == n,
           f"alpha {alpha}: fault flagged in {hit}/{n} seeds, clean stream silent in {quiet}/{n}")


# -- determinism ----------------------------------------------------------------------

def test_cli_determinism(tmp_path):
    cfg = {"synth": {"source_rows": 800, "target_rows": 1000, "adapt_rows": 300, "fault_start": 500,
                     "fault_duration": 200, "epochs": 6}}
    (tmp_path / "synth.yaml").write_text(yaml.safe_dump(cfg))
    assert main(["synth", "--config", str(tmp_path / "synth.yaml"), "--out", str(tmp_path / "d")]) == 0
    run = str(tmp_path / "d" / "run.yaml")
    for k in (1, 2):
        assert main(["evaluate", "--config", run, "--out", str(tmp_path / f"r{k}")]) == 0
    files = sorted(p.name for p in (tmp_path / "r1").iterdir())
    same = files == sorted(p.name for p in (tmp_path / "r2").iterdir()) and all(
        (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes() for f in files)
    report("determinism", same, f"{len(files)} report files byte-identical across two evaluate runs")
    assert same


# -- real datasets (conditional) ----------------------------------------------------------

def _staged(tmp_path, dataset: str, env: str) -> Path:
    root = os.environ.get(env)
    if not root:
        VERDICTS.append(f"SKIP {dataset} reproduction: {env} not set")
        pytest.skip(f"{env} not set; real-data criterion not evaluated")
    stage = tmp_path / dataset
    shutil.copytree(MANIFESTS / dataset, stage)
    for csv in Path(root).glob("*.csv"):
        (stage / csv.name).symlink_to(csv.resolve())
    return stage


def _tard_metrics(run_yaml: Path, case_name: str) -> dict:
    exp = load_experiment(run_yaml)
    run = replace(exp.run, methods=("tard",))
    index = [name for name, _ in exp.cases].index(case_name)
    r = run_case(exp.case(index), run, exp.seed)[0]
    return {"accuracy": r.accuracy, "f1": r.f1, "auc": r.auc}


def test_cranfield_reproduction(tmp_path):
    stage = _staged(tmp_path, "cranfield", "TARD_CRANFIELD_DIR")
    press = _tard_metrics(stage / "run.yaml", "pressurization_2in_line")
    slug = _tard_metrics(stage / "run.yaml", "slugging_conditions")
    ok = min(press.values()) >= 0.95 and abs(slug["f1"] - 0.92) <= 0.10
    report("Cranfield reproduction", ok,
           f"pressurization Acc/F1/AUC {press['accuracy']:.2f}/{press['f1']:.2f}/{press['auc']:.2f} (need >= 0.95); "
           f"slugging F1 {slug['f1']:.2f} (need 0.92 +/- 0.10)")


def test_pronto_reproduction(tmp_path):
    stage = _staged(tmp_path, "pronto", "TARD_PRONTO_DIR")
    m = _tard_metrics(stage / "run.yaml", "air_blockage")
    report("PRONTO reproduction", abs(m["f1"] - 0.94) <= 0.10, f"air blockage F1 {m['f1']:.2f} (need 0.94 +/- 0.10)")
