"""Training procedures: source pretraining, frozen-backbone training of the
adaptive module, the AdaBN statistics swap and MMD-regularized pretraining.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _core
from .data import SampleBatch, batch_bounds
from .errors import ConfigError, DegenerateBatchError, DivergenceError, FrozenModelError
from .models import AdaptiveModule, AutoencoderModel, ae_predict, checksum
from .netcore import AdamState, Mode, adam_step, mse_grad, mse_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    patience: int = 10
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 for batch normalization")
        if not 0.0 < self.val_fraction <= 0.5:
            raise ConfigError(f"val_fraction must lie in (0, 0.5], got {self.val_fraction}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")


@dataclass(frozen=True)
class MMDConfig:
    """Multi-kernel RBF MMD settings.

    With ``relative=True`` each bandwidth is a multiple of the median pairwise
    distance of the pooled rows; otherwise bandwidths are absolute.
    """

    bandwidths: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0, 8.0)
    weight: float = 1.0
    relative: bool = True
    unbiased: bool = False

    def __post_init__(self):
        if not self.bandwidths or any(b <= 0 for b in self.bandwidths):
            raise ConfigError("MMD needs at least one positive bandwidth")
        if self.weight < 0:
            raise ConfigError("MMD weight must be non-negative")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    initial_loss: float = float("nan")
    best_epoch: int = 0

    @property
    def final_loss(self) -> float:
        return self.train_loss[-1] if self.train_loss else self.initial_loss


def _minibatches(rng: np.random.Generator, n: int, batch_size: int) -> list[np.ndarray]:
    perm = rng.permutation(n)
    batches = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def _windows(rng: np.random.Generator, n: int, batch_size: int) -> list[np.ndarray]:
    """Contiguous row windows at random offsets, about one pass over ``n`` rows."""
    size = min(batch_size, n)
    count = max(1, int(np.ceil(n / size)))
    starts = rng.integers(0, n - size + 1, size=count)
    return [np.arange(s, s + size) for s in starts]


def _holdout(n: int, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(cfg.seed).permutation(n)
    n_val = max(2, int(round(cfg.val_fraction * n)))
    if n - n_val < 2:
        raise DegenerateBatchError(f"{n} rows are too few for a training/validation split")
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _fit(model, n_train: int, cfg: TrainConfig, step: Callable[[np.ndarray], float],
         validate: Callable[[], float], rng: np.random.Generator, batches=_minibatches) -> TrainHistory:
    """Mini-batch Adam with early stopping on ``validate``; restores the best state."""
    arrays = [a for _, a in model.named_arrays()]
    best = [a.copy() for a in arrays]
    history = TrainHistory()
    best_val = validate()
    history.initial_loss = best_val
    adam = AdamState.for_params(model.parameters(), lr=cfg.lr)
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for idx in batches(rng, n_train, cfg.batch_size):
            loss = step(idx)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, loss)
            adam_step(model.parameters(), model.gradients(), adam)
            losses.append(loss)
        history.train_loss.append(float(np.mean(losses)))
        val = validate()
        if not np.isfinite(val):
            raise DivergenceError(epoch, val)
        history.val_loss.append(val)
        if val < best_val:
            best_val, stale, history.best_epoch = val, 0, epoch
            for dst, src in zip(best, arrays):
                np.copyto(dst, src)
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    for dst, src in zip(arrays, best):
        np.copyto(dst, src)
    return history


def _split(batch: SampleBatch, validation: SampleBatch | None, cfg: TrainConfig):
    if validation is not None:
        return batch, validation
    train_idx, val_idx = _holdout(len(batch), cfg)
    return batch.rows(train_idx), batch.rows(val_idx)


def pretrain_source(source: SampleBatch, cfg: TrainConfig, validation: SampleBatch | None = None) -> AutoencoderModel:
    """Fit the autoencoder to reconstruct healthy source sensors from all columns."""
    train, val = _split(source, validation, cfg)
    model = AutoencoderModel(source.schema.n_columns, source.schema.sensor_dim, seed=cfg.seed)
    x, y = train.values, train.sensors

    def step(idx):
        model.set_mode(Mode.TRAIN)
        pred = model.forward(x[idx])
        loss = mse_loss(pred, y[idx])
        model.backward(mse_grad(pred, y[idx]))
        return loss

    def validate():
        model.set_mode(Mode.EVAL)
        return mse_loss(ae_predict(val, model), val.sensors)

    model.history = _fit(model, len(train), cfg, step, validate, np.random.default_rng(cfg.seed + 1))
    model.set_mode(Mode.EVAL)
    model.clear_cache()
    return model


def train_adaptive(target: SampleBatch, frozen: AutoencoderModel, cfg: TrainConfig,
                   validation: SampleBatch | None = None, output_activation: str = "relu",
                   contiguous: bool = True) -> AdaptiveModule:
    """Fit the adaptive module so ``ae_predict + correction(w)`` matches target sensors.

    The autoencoder runs in Eval mode and is never updated; its checksum is
    compared before and after. With ``contiguous=True`` mini-batches are
    time-contiguous windows, so the module's batch statistics during training
    resemble those of the ordered test stream.
    """
    before = checksum(frozen)
    train, val = _split(target, validation, cfg)
    frozen.set_mode(Mode.EVAL)
    resid = train.sensors - ae_predict(train, frozen)
    val_resid = val.sensors - ae_predict(val, frozen)
    w, val_w = train.controls, val.controls
    module = AdaptiveModule(target.schema.control_dim, target.schema.sensor_dim, output_activation, seed=cfg.seed)

    def step(idx):
        module.set_mode(Mode.TRAIN)
        out = module.forward(w[idx])
        loss = mse_loss(out, resid[idx])
        module.backward(mse_grad(out, resid[idx]))
        return loss

    bounds = batch_bounds(len(val), cfg.batch_size)

    def validate():
        # scored the way the module is deployed: AdaBN over contiguous batches,
        # which also keeps lagging running statistics out of early stopping
        bn = module.batchnorm
        kept = bn.running_mean.copy(), bn.running_var.copy()
        module.set_mode(Mode.ADABN)
        out = np.vstack([module.forward(val_w[lo:hi]) for lo, hi in bounds])
        bn.running_mean[...], bn.running_var[...] = kept
        return mse_loss(out, val_resid)

    module.history = _fit(module, len(train), cfg, step, validate, np.random.default_rng(cfg.seed + 1),
                          _windows if contiguous else _minibatches)
    module.set_mode(Mode.EVAL)
    module.net.clear_cache()
    if checksum(frozen) != before:
        raise FrozenModelError("autoencoder parameters changed during adaptive-module training")
    return module


def adabn_transform(model: AutoencoderModel, target_batch: SampleBatch) -> AutoencoderModel:
    """Replace every BN running statistic with ``target_batch``'s statistics.

    Mutates and returns ``model``, left in Eval mode.
    """
    if len(target_batch) < 2:
        raise DegenerateBatchError(f"AdaBN needs at least 2 rows, got {len(target_batch)}")
    model.set_mode(Mode.ADABN)
    try:
        model.encoder.forward(target_batch.values)
    finally:
        model.set_mode(Mode.EVAL)
        model.clear_cache()
    return model


# -- maximum mean discrepancy -----------------------------------------------

def _gammas(a: np.ndarray, b: np.ndarray, cfg: MMDConfig) -> np.ndarray:
    bw = np.asarray(cfg.bandwidths, dtype=np.float64)
    if cfg.relative:
        pooled = np.vstack([a, b])
        d2 = ((pooled[:, None, :] - pooled[None, :, :]) ** 2).sum(axis=2)
        iu = np.triu_indices(len(pooled), k=1)
        med = float(np.median(np.sqrt(d2[iu])))
        bw = bw * max(med, 1e-12)
    return 1.0 / (2.0 * bw**2)


def mmd_loss_and_grad(a: np.ndarray, b: np.ndarray, cfg: MMDConfig) -> tuple[float, np.ndarray, np.ndarray]:
    """Squared MMD between row sets ``a`` and ``b`` with gradients for both.

    The kernel is the mean of RBF kernels over the configured bandwidths;
    bandwidths are treated as constants when differentiating.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ConfigError(f"latent shapes {a.shape} and {b.shape} are incompatible")
    n, m = len(a), len(b)
    if n < 2 or m < 2:
        raise DegenerateBatchError(f"MMD needs at least 2 rows per side, got {n} and {m}")
    gammas = _gammas(a, b, cfg)
    kaa, gaa = _core.rbf_gram(a, a, gammas)
    kbb, gbb = _core.rbf_gram(b, b, gammas)
    kab, gab = _core.rbf_gram(a, b, gammas)
    if cfg.unbiased:
        caa, cbb = 1.0 / (n * (n - 1)), 1.0 / (m * (m - 1))
        saa = kaa.sum() - np.trace(kaa)
        sbb = kbb.sum() - np.trace(kbb)
    else:
        caa, cbb = 1.0 / (n * n), 1.0 / (m * m)
        saa, sbb = kaa.sum(), kbb.sum()
    cab = 1.0 / (n * m)
    value = caa * saa + cbb * sbb - 2.0 * cab * kab.sum()

    # d k(x, y) / dx = -2 g (x - y); diagonal pairs contribute nothing
    ga = -4.0 * caa * (a * gaa.sum(axis=1, keepdims=True) - gaa @ a)
    ga += 4.0 * cab * (a * gab.sum(axis=1, keepdims=True) - gab @ b)
    gb = -4.0 * cbb * (b * gbb.sum(axis=1, keepdims=True) - gbb @ b)
    gb += 4.0 * cab * (b * gab.sum(axis=0)[:, None] - gab.T @ a)
    return float(value), ga, gb


def mmd_loss(source_latent: np.ndarray, target_latent: np.ndarray, cfg: MMDConfig) -> float:
    return mmd_loss_and_grad(source_latent, target_latent, cfg)[0]


def latent(model: AutoencoderModel, batch: SampleBatch) -> np.ndarray:
    out = model.encoder.forward(batch.values)
    model.clear_cache()
    return out


def pretrain_mmd(source: SampleBatch, target: SampleBatch, cfg: TrainConfig, mmd: MMDConfig,
                 validation: SampleBatch | None = None,
                 target_validation: SampleBatch | None = None) -> AutoencoderModel:
    """Source pretraining plus ``weight * MMD`` between encoder latents of
    co-sampled source and target mini-batches.

    Source and target rows pass through the encoder as one stacked batch so
    they share batch statistics. With ``weight == 0`` target rows are not
    used and the run is identical to :func:`pretrain_source`.
    """
    if mmd.weight == 0.0:
        return pretrain_source(source, cfg, validation)
    train, val = _split(source, validation, cfg)
    tgt_train = target
    tgt_val = target_validation if target_validation is not None else target
    if len(tgt_train) < 2:
        raise DegenerateBatchError("MMD pretraining needs at least 2 target rows")
    model = AutoencoderModel(source.schema.n_columns, source.schema.sensor_dim, seed=cfg.seed)
    x, y, xt = train.values, train.sensors, tgt_train.values
    trng = np.random.default_rng(cfg.seed + 2)
    order: list[int] = []

    def take_target(k: int) -> np.ndarray:
        while len(order) < k:
            order.extend(trng.permutation(len(xt)).tolist())
        idx = order[:k]
        del order[:k]
        return xt[idx]

    def step(idx):
        model.set_mode(Mode.TRAIN)
        ns = len(idx)
        z = model.encoder.forward(np.vstack([x[idx], take_target(ns)]))
        zs, zt = z[:ns], z[ns:]
        pred = model.decoder.forward(zs)
        rec = mse_loss(pred, y[idx])
        dzs = model.decoder.backward(mse_grad(pred, y[idx]))
        dist, gs, gt = mmd_loss_and_grad(zs, zt, mmd)
        model.encoder.backward(np.vstack([dzs + mmd.weight * gs, mmd.weight * gt]))
        return rec + mmd.weight * dist

    def validate():
        model.set_mode(Mode.EVAL)
        rec = mse_loss(ae_predict(val, model), val.sensors)
        return rec + mmd.weight * mmd_loss(latent(model, val), latent(model, tgt_val), mmd)

    model.history = _fit(model, len(train), cfg, step, validate, np.random.default_rng(cfg.seed + 1))
    model.set_mode(Mode.EVAL)
    model.clear_cache()
    return model
