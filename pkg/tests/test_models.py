import json

import numpy as np
import pytest

from tard.adaptation import TrainConfig
from tard.data import SampleBatch, ShiftSpec, SplitPlan, SynthConfig, generate_synthetic, make_splits
from tard.errors import BundleFormatError, ConfigError, UsageError
from tard.harness import Case, RunConfig, fit_bundle, score_case
from tard.models import (AdaptiveModule, AutoencoderModel, ModelBundle, adaptive_correction, ae_predict,
                         bundle_from_dict, bundle_to_dict, checksum, corrected_predict, load_bundle, save_bundle)
from tard.netcore import Mode


def _batch(rows=12, controls=2, sensors=4, seed=0):
    cfg = SynthConfig(seed=seed, n_samples=rows, n_controls=controls, n_sensors=sensors)
    return generate_synthetic(cfg).series.batch


@pytest.fixture(scope="module")
def tard_case():
    src = generate_synthetic(SynthConfig(seed=1, n_samples=600, n_sensors=4)).series
    tgt = generate_synthetic(SynthConfig(seed=2, n_samples=500, n_sensors=4,
                                         shift=ShiftSpec((0.3,), (1.1,)))).series
    case = Case("small", src, make_splits(tgt, SplitPlan(200, 0.2)))
    cfg = RunConfig(train=TrainConfig(epochs=3), adapt=TrainConfig(epochs=3))
    return case, fit_bundle("tard", case, cfg, seed=0)


def test_untrained_shapes_and_determinism():
    b = _batch()
    ae = AutoencoderModel(6, 4, seed=0)
    ae.set_mode(Mode.EVAL)
    out = ae_predict(b, ae)
    assert out.shape == (12, 4) and np.all(np.isfinite(out))
    assert np.array_equal(out, ae_predict(b, ae))
    same = SampleBatch(np.tile(b.values[:1], (3, 1)), b.schema)
    rows = ae_predict(same, ae)
    assert np.array_equal(rows[0], rows[1]) and np.array_equal(rows[1], rows[2])


def test_architecture_widths():
    ae = AutoencoderModel(9, 5)
    dense = [l for l in ae.encoder.layers if hasattr(l, "weight")]
    assert [d.weight.shape for d in dense] == [(9, 50), (50, 50), (50, 10)]
    assert len(ae.batchnorms) == 3
    assert ae.decoder.layers[-1].weight.shape == (50, 5)
    h = AdaptiveModule(4, 5)
    assert h.net.layers[0].weight.shape == (4, 10) and h.net.layers[3].weight.shape == (10, 5)


def test_dimension_mismatch_errors():
    b = _batch()
    with pytest.raises(ConfigError):
        ae_predict(b, AutoencoderModel(7, 4))
    with pytest.raises(ConfigError):
        adaptive_correction(b, AdaptiveModule(3, 4))
    with pytest.raises(ConfigError):
        AutoencoderModel(4, 4)


def test_zero_adaptive_module_is_exact_no_op(tard_case):
    case, bundle = tard_case
    b = SampleBatch(bundle.standardizer.transform(case.splits.test[0].batch.values[:64]), bundle.schema)
    h = AdaptiveModule(bundle.schema.control_dim, bundle.schema.sensor_dim, seed=5)
    h.zero_()
    h.set_mode(Mode.ADABN)
    zb = ModelBundle(bundle.autoencoder, bundle.schema, bundle.standardizer, h)
    assert np.array_equal(corrected_predict(b, zb), ae_predict(b, bundle.autoencoder))


@pytest.mark.parametrize("mode", [Mode.TRAIN, Mode.EVAL, Mode.ADABN])
def test_relu_output_is_nonnegative(mode):
    h = AdaptiveModule(2, 4, "relu", seed=3)
    h.set_mode(mode)
    assert np.all(adaptive_correction(_batch(seed=4), h) >= 0)


def test_linear_output_can_be_negative():
    h = AdaptiveModule(2, 4, "linear", seed=3)
    assert np.any(adaptive_correction(_batch(seed=4), h) < 0)


def test_corrected_predict_needs_adaptive(tard_case):
    case, bundle = tard_case
    plain = ModelBundle(bundle.autoencoder, bundle.schema, bundle.standardizer)
    with pytest.raises(UsageError):
        corrected_predict(_batch(controls=2, sensors=4), plain)


def test_bundle_schema_consistency():
    b = _batch()
    with pytest.raises(ConfigError):
        ModelBundle(AutoencoderModel(7, 5), b.schema, None)


# -- serialization ------------------------------------------------------------

def test_round_trip_is_bit_exact(tard_case, tmp_path):
    _, bundle = tard_case
    save_bundle(bundle, tmp_path / "b.json")
    back = load_bundle(tmp_path / "b.json")
    assert checksum(back.autoencoder) == checksum(bundle.autoencoder)
    assert checksum(back.adaptive) == checksum(bundle.adaptive)
    assert np.array_equal(back.standardizer.mean, bundle.standardizer.mean)
    assert np.array_equal(back.standardizer.std, bundle.standardizer.std)
    assert back.scoring.to_dict() == bundle.scoring.to_dict()
    assert back.schema == bundle.schema and back.method == "tard" and back.extra == bundle.extra
    assert bundle_to_dict(back) == bundle_to_dict(bundle)


def test_reloaded_bundle_scores_identically(tard_case, tmp_path):
    case, bundle = tard_case
    save_bundle(bundle, tmp_path / "b.json")
    back = load_bundle(tmp_path / "b.json")
    a, b = score_case(bundle, case.splits.test), score_case(back, case.splits.test)
    assert all(np.array_equal(x.raw, y.raw) and np.array_equal(x.labels, y.labels) for x, y in zip(a, b))


@pytest.mark.parametrize("edit,field", [
    (lambda d: d["meta"].__setitem__("sensor_dim", 99), "meta.sensor_dim"),
    (lambda d: d.__setitem__("version", 7), "version"),
    (lambda d: d["ae"]["encoder"][0].__setitem__("in", 3), "ae.encoder[0].in"),
    (lambda d: d["ae"]["encoder"][1]["running_var"].pop(), "ae.encoder[1].running_var"),
    (lambda d: d["ae"]["decoder"][0].__setitem__("type", "relu"), "ae.decoder[0].type"),
    (lambda d: d["adaptive"].__setitem__("output_activation", "tanh"), "adaptive.output_activation"),
    (lambda d: d["standardization"].pop("std"), "standardization.std"),
    (lambda d: d["scoring"]["sensor_scale"].append(1.0), "scoring.sensor_scale"),
])
def test_malformed_bundle_names_field(tard_case, edit, field):
    doc = json.loads(json.dumps(bundle_to_dict(tard_case[1])))
    edit(doc)
    with pytest.raises(BundleFormatError) as info:
        bundle_from_dict(doc)
    assert info.value.field == field


def test_invalid_json(tmp_path):
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(BundleFormatError):
        load_bundle(tmp_path / "x.json")
