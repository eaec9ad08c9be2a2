"""The reconstruction autoencoder, the control-variable adaptive module, and
the model bundle that carries both plus every statistic needed to score.

All network inputs and outputs live in standardized units; the bundle's
standardizer maps predictions back to raw sensor units for scoring.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import FeatureSchema, SampleBatch, Standardizer
from .detection import ScoringConfig
from .errors import BundleFormatError, ConfigError, UsageError
from .netcore import BatchNorm, Dense, Mode, ReLU, Sequential

HIDDEN = 50
LATENT = 10
ADAPTIVE_HIDDEN = 10
OUTPUT_ACTIVATIONS = ("relu", "linear")


class AutoencoderModel:
    """Encoder ``in -> 50 -> 50 -> 10`` (dense, BN, ReLU each) and decoder
    ``10 -> 50 -> 50 -> sensor_dim`` (ReLU between hidden layers, linear out).

    The input holds every column; the output holds sensors only.
    """

    def __init__(self, input_dim: int, sensor_dim: int, seed: int = 0):
        if sensor_dim >= input_dim:
            raise ConfigError("input must contain the sensors plus at least one control column")
        self.input_dim = input_dim
        self.sensor_dim = sensor_dim
        self.seed = seed
        rng = np.random.default_rng(seed)
        enc = []
        for a, b in [(input_dim, HIDDEN), (HIDDEN, HIDDEN), (HIDDEN, LATENT)]:
            enc += [Dense(a, b, rng), BatchNorm(b), ReLU()]
        self.encoder = Sequential(enc)
        self.decoder = Sequential([
            Dense(LATENT, HIDDEN, rng), ReLU(),
            Dense(HIDDEN, HIDDEN, rng), ReLU(),
            Dense(HIDDEN, sensor_dim, rng),
        ])

    def set_mode(self, mode: Mode | str) -> None:
        self.encoder.set_mode(mode)

    @property
    def batchnorms(self) -> list[BatchNorm]:
        return self.encoder.batchnorms()

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.decoder.forward(self.encoder.forward(x))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return self.encoder.backward(self.decoder.backward(dout))

    def parameters(self) -> list[np.ndarray]:
        return self.encoder.parameters() + self.decoder.parameters()

    def gradients(self) -> list[np.ndarray]:
        return self.encoder.gradients() + self.decoder.gradients()

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return self.encoder.named_arrays("encoder.") + self.decoder.named_arrays("decoder.")

    def clear_cache(self) -> None:
        self.encoder.clear_cache()
        self.decoder.clear_cache()


class AdaptiveModule:
    """Maps control variables to a sensor-space correction:
    dense(control -> 10), BN, ReLU, dense(10 -> sensor_dim), optional ReLU."""

    def __init__(self, control_dim: int, sensor_dim: int, output_activation: str = "relu", seed: int = 0):
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigError(f"unknown output activation {output_activation!r}")
        self.control_dim = control_dim
        self.sensor_dim = sensor_dim
        self.output_activation = output_activation
        self.seed = seed
        rng = np.random.default_rng(seed)
        layers = [Dense(control_dim, ADAPTIVE_HIDDEN, rng), BatchNorm(ADAPTIVE_HIDDEN), ReLU(),
                  Dense(ADAPTIVE_HIDDEN, sensor_dim, rng)]
        if output_activation == "relu":
            layers.append(ReLU())
        self.net = Sequential(layers)

    def set_mode(self, mode: Mode | str) -> None:
        self.net.set_mode(mode)

    @property
    def batchnorm(self) -> BatchNorm:
        return self.net.batchnorms()[0]

    def forward(self, w: np.ndarray) -> np.ndarray:
        return self.net.forward(w)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return self.net.backward(dout)

    def parameters(self) -> list[np.ndarray]:
        return self.net.parameters()

    def gradients(self) -> list[np.ndarray]:
        return self.net.gradients()

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return self.net.named_arrays("adaptive.")

    def zero_(self) -> None:
        for layer in self.net.dense_layers():
            layer.weight[...] = 0.0
            layer.bias[...] = 0.0


def checksum(model) -> str:
    """SHA-256 over every parameter and running statistic of ``model``."""
    h = hashlib.sha256()
    for name, arr in model.named_arrays():
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()


def _check_input(batch: SampleBatch, input_dim: int) -> np.ndarray:
    if batch.values.shape[1] != input_dim:
        raise ConfigError(f"batch has {batch.values.shape[1]} columns, model expects {input_dim}")
    return batch.values


def ae_predict(batch: SampleBatch, model: AutoencoderModel) -> np.ndarray:
    """Standardized sensor predictions; BN layers run in whatever mode the caller set."""
    x = _check_input(batch, model.input_dim)
    if batch.schema.sensor_dim != model.sensor_dim:
        raise ConfigError(f"batch has {batch.schema.sensor_dim} sensors, model predicts {model.sensor_dim}")
    out = model.forward(x)
    model.clear_cache()
    return out


def adaptive_correction(batch: SampleBatch, module: AdaptiveModule) -> np.ndarray:
    w = batch.controls
    if w.shape[1] != module.control_dim:
        raise ConfigError(f"batch has {w.shape[1]} control columns, module expects {module.control_dim}")
    out = module.forward(w)
    module.net.clear_cache()
    return out


@dataclass
class ModelBundle:
    autoencoder: AutoencoderModel
    schema: FeatureSchema
    standardizer: Standardizer
    adaptive: AdaptiveModule | None = None
    scoring: ScoringConfig | None = None
    method: str = "source_only"
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        ae = self.autoencoder
        if ae.input_dim != self.schema.n_columns or ae.sensor_dim != self.schema.sensor_dim:
            raise ConfigError("autoencoder dimensions disagree with the feature schema")
        if self.adaptive is not None and (self.adaptive.control_dim != self.schema.control_dim
                                          or self.adaptive.sensor_dim != self.schema.sensor_dim):
            raise ConfigError("adaptive module dimensions disagree with the feature schema")

    def to_raw_sensors(self, z_sensors: np.ndarray) -> np.ndarray:
        return self.standardizer.inverse_columns(z_sensors, self.schema.sensor)


def corrected_predict(batch: SampleBatch, bundle: ModelBundle) -> np.ndarray:
    """Autoencoder prediction plus the adaptive module's correction."""
    if bundle.adaptive is None:
        raise UsageError("bundle has no adaptive module")
    return ae_predict(batch, bundle.autoencoder) + adaptive_correction(batch, bundle.adaptive)


# -- serialization ----------------------------------------------------------

FORMAT = "tard-bundle"
VERSION = 1


def _layer_to_dict(layer) -> dict:
    if isinstance(layer, Dense):
        return {"type": "dense", "in": layer.in_dim, "out": layer.out_dim,
                "weight": layer.weight.tolist(), "bias": layer.bias.tolist()}
    if isinstance(layer, BatchNorm):
        return {"type": "batchnorm", "dim": layer.dim, "momentum": layer.momentum, "eps": layer.eps,
                "mode": layer.mode.value, "gamma": layer.gamma.tolist(), "beta": layer.beta.tolist(),
                "running_mean": layer.running_mean.tolist(), "running_var": layer.running_var.tolist()}
    return {"type": "relu"}


def _array(doc: dict, key: str, shape: tuple, where: str) -> np.ndarray:
    try:
        arr = np.asarray(doc[key], dtype=np.float64)
    except KeyError:
        raise BundleFormatError(f"{where}.{key}", "missing") from None
    except (TypeError, ValueError):
        raise BundleFormatError(f"{where}.{key}", "not a numeric array") from None
    if arr.shape != shape:
        raise BundleFormatError(f"{where}.{key}", f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise BundleFormatError(f"{where}.{key}", "non-finite values")
    return arr


def _load_layers(seq: Sequential, blocks, where: str) -> None:
    if not isinstance(blocks, list) or len(blocks) != len(seq.layers):
        got = len(blocks) if isinstance(blocks, list) else type(blocks).__name__
        raise BundleFormatError(where, f"expected {len(seq.layers)} layer blocks, got {got}")
    for i, (layer, block) in enumerate(zip(seq.layers, blocks)):
        at = f"{where}[{i}]"
        expect = _layer_to_dict(layer)["type"]
        if block.get("type") != expect:
            raise BundleFormatError(f"{at}.type", f"expected {expect!r}, got {block.get('type')!r}")
        if isinstance(layer, Dense):
            for key, val in (("in", layer.in_dim), ("out", layer.out_dim)):
                if block.get(key) != val:
                    raise BundleFormatError(f"{at}.{key}", f"expected {val}, got {block.get(key)!r}")
            layer.weight = _array(block, "weight", layer.weight.shape, at)
            layer.bias = _array(block, "bias", layer.bias.shape, at)
        elif isinstance(layer, BatchNorm):
            if block.get("dim") != layer.dim:
                raise BundleFormatError(f"{at}.dim", f"expected {layer.dim}, got {block.get('dim')!r}")
            for key in ("gamma", "beta", "running_mean", "running_var"):
                setattr(layer, key, _array(block, key, (layer.dim,), at))
            layer.momentum = float(block["momentum"])
            layer.eps = float(block["eps"])
            try:
                layer.set_mode(block["mode"])
            except (KeyError, ValueError):
                raise BundleFormatError(f"{at}.mode", f"invalid mode {block.get('mode')!r}") from None


def bundle_to_dict(bundle: ModelBundle) -> dict:
    ae = bundle.autoencoder
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "meta": {
            "input_dim": ae.input_dim,
            "sensor_dim": ae.sensor_dim,
            "control_dim": bundle.schema.control_dim,
            "latent_dim": LATENT,
            "seed": bundle.seed,
            "method": bundle.method,
            "schema": bundle.schema.to_dict(),
            "extra": bundle.extra,
        },
        "ae": {
            "seed": ae.seed,
            "encoder": [_layer_to_dict(layer) for layer in ae.encoder.layers],
            "decoder": [_layer_to_dict(layer) for layer in ae.decoder.layers],
        },
        "adaptive": None,
        "standardization": {
            "mean": bundle.standardizer.mean.tolist(),
            "std": bundle.standardizer.std.tolist(),
            "provenance": bundle.standardizer.provenance,
        },
        "scoring": None if bundle.scoring is None else bundle.scoring.to_dict(),
    }
    if bundle.adaptive is not None:
        ad = bundle.adaptive
        doc["adaptive"] = {"seed": ad.seed, "output_activation": ad.output_activation,
                           "layers": [_layer_to_dict(layer) for layer in ad.net.layers]}
    return doc


def bundle_from_dict(doc: dict) -> ModelBundle:
    if doc.get("format") != FORMAT:
        raise BundleFormatError("format", f"expected {FORMAT!r}, got {doc.get('format')!r}")
    if doc.get("version") != VERSION:
        raise BundleFormatError("version", f"unsupported version {doc.get('version')!r}")
    meta = doc.get("meta")
    if not isinstance(meta, dict):
        raise BundleFormatError("meta", "missing")
    try:
        schema = FeatureSchema.from_dict(meta["schema"])
    except (KeyError, TypeError, ConfigError) as exc:
        raise BundleFormatError("meta.schema", str(exc)) from None
    for key, val in (("input_dim", schema.n_columns), ("sensor_dim", schema.sensor_dim),
                     ("control_dim", schema.control_dim), ("latent_dim", LATENT)):
        if meta.get(key) != val:
            raise BundleFormatError(f"meta.{key}", f"expected {val} from schema, got {meta.get(key)!r}")

    ae_doc = doc.get("ae")
    if not isinstance(ae_doc, dict):
        raise BundleFormatError("ae", "missing")
    ae = AutoencoderModel(schema.n_columns, schema.sensor_dim, seed=int(ae_doc.get("seed", 0)))
    _load_layers(ae.encoder, ae_doc.get("encoder"), "ae.encoder")
    _load_layers(ae.decoder, ae_doc.get("decoder"), "ae.decoder")

    adaptive = None
    ad_doc = doc.get("adaptive")
    if ad_doc is not None:
        act = ad_doc.get("output_activation")
        if act not in OUTPUT_ACTIVATIONS:
            raise BundleFormatError("adaptive.output_activation", f"invalid value {act!r}")
        adaptive = AdaptiveModule(schema.control_dim, schema.sensor_dim, act, seed=int(ad_doc.get("seed", 0)))
        _load_layers(adaptive.net, ad_doc.get("layers"), "adaptive.layers")

    st = doc.get("standardization")
    if not isinstance(st, dict):
        raise BundleFormatError("standardization", "missing")
    n = schema.n_columns
    standardizer = Standardizer(_array(st, "mean", (n,), "standardization"),
                                _array(st, "std", (n,), "standardization"), st.get("provenance", ""))

    scoring = None
    sc = doc.get("scoring")
    if sc is not None:
        _array(sc, "sensor_scale", (schema.sensor_dim,), "scoring")
        try:
            scoring = ScoringConfig.from_dict(sc)
        except (KeyError, TypeError, ValueError) as exc:
            raise BundleFormatError("scoring", str(exc)) from None
    return ModelBundle(ae, schema, standardizer, adaptive, scoring, meta.get("method", "source_only"),
                       int(meta.get("seed", 0)), meta.get("extra") or {})


def save_bundle(bundle: ModelBundle, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    text = json.dumps(bundle_to_dict(bundle), indent=1, sort_keys=False)
    Path(path).write_text(text + "\n")


def load_bundle(path) -> ModelBundle:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise BundleFormatError("<document>", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise BundleFormatError("<document>", "top level must be an object")
    return bundle_from_dict(doc)
