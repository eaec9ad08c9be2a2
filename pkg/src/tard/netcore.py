"""Small numpy network engine: dense layers, batch normalization, ReLU,
mean-squared-error loss, exact backpropagation and Adam.

Every layer caches what its backward pass needs during ``forward`` and
exposes ``parameters()`` / ``gradients()`` as ordered dicts of arrays so an
optimizer can update them in place.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateBatchError, UsageError


class Mode(str, enum.Enum):
    """Execution mode of a batch-normalization layer."""

    TRAIN = "train"
    EVAL = "eval"
    ADABN = "adabn"


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError(f"expected a 2-D matrix, got shape {x.shape}")
    return x


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Dense:
    """Fully connected layer computing ``x @ weight + bias``."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        if in_dim < 1 or out_dim < 1:
            raise ConfigError(f"invalid dense dims {in_dim}x{out_dim}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = glorot_uniform(rng, in_dim, out_dim)
        self.bias = np.zeros(out_dim)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self._x = None

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def forward(self, x) -> np.ndarray:
        x = _as_matrix(x)
        if x.shape[1] != self.in_dim:
            raise ConfigError(f"dense layer expects {self.in_dim} input columns, got {x.shape[1]}")
        self._x = x
        return x @ self.weight + self.bias

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise UsageError("Dense.backward called without a recorded forward pass")
        self.dweight = self._x.T @ dout
        self.dbias = dout.sum(axis=0)
        return dout @ self.weight.T

    def parameters(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def gradients(self) -> dict[str, np.ndarray]:
        return {"weight": self.dweight, "bias": self.dbias}

    def clear_cache(self) -> None:
        self._x = None


class BatchNorm:
    """Per-feature batch normalization with explicit Train / Eval / AdaBN modes.

    Train normalizes by the batch's biased statistics and folds them into the
    running statistics with ``running = (1 - momentum) * running + momentum * batch``.
    Eval normalizes by the running statistics. AdaBN normalizes by the batch's
    statistics and replaces the running statistics with them outright.
    """

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5, mode: Mode = Mode.TRAIN):
        if not 0.0 < momentum <= 1.0:
            raise ConfigError(f"momentum must lie in (0, 1], got {momentum}")
        if eps <= 0.0:
            raise ConfigError(f"eps must be positive, got {eps}")
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.mode = Mode(mode)
        self.dgamma = np.zeros(dim)
        self.dbeta = np.zeros(dim)
        self._cache = None

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]

    def set_mode(self, mode: Mode | str) -> None:
        self.mode = Mode(mode)

    def forward(self, x) -> np.ndarray:
        x = _as_matrix(x)
        if x.shape[1] != self.dim:
            raise ConfigError(f"batch norm expects {self.dim} columns, got {x.shape[1]}")
        if self.mode is Mode.EVAL:
            std = np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) / std
            self._cache = (xhat, std, False)
            return self.gamma * xhat + self.beta

        if x.shape[0] < 2:
            raise DegenerateBatchError(f"{self.mode.value} mode needs at least 2 rows, got {x.shape[0]}")
        mean = x.mean(axis=0)
        var = ((x - mean) ** 2).mean(axis=0)
        std = np.sqrt(var + self.eps)
        xhat = (x - mean) / std
        if self.mode is Mode.TRAIN:
            m = self.momentum
            self.running_mean[...] = (1.0 - m) * self.running_mean + m * mean
            self.running_var[...] = (1.0 - m) * self.running_var + m * var
        else:
            self.running_mean[...] = mean
            self.running_var[...] = var
        self._cache = (xhat, std, True)
        return self.gamma * xhat + self.beta

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise UsageError("BatchNorm.backward called without a recorded forward pass")
        xhat, std, batch_stats = self._cache
        self.dgamma = (dout * xhat).sum(axis=0)
        self.dbeta = dout.sum(axis=0)
        dxhat = dout * self.gamma
        if not batch_stats:
            return dxhat / std
        return (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0)) / std

    def parameters(self) -> dict[str, np.ndarray]:
        return {"gamma": self.gamma, "beta": self.beta}

    def gradients(self) -> dict[str, np.ndarray]:
        return {"gamma": self.dgamma, "beta": self.dbeta}

    def statistics(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def clear_cache(self) -> None:
        self._cache = None


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x) -> np.ndarray:
        x = _as_matrix(x)
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise UsageError("ReLU.backward called without a recorded forward pass")
        return np.where(self._mask, dout, 0.0)

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def gradients(self) -> dict[str, np.ndarray]:
        return {}

    def clear_cache(self) -> None:
        self._mask = None


def relu(x) -> np.ndarray:
    x = _as_matrix(x)
    return np.maximum(x, 0.0)


def mse_loss(pred, target) -> float:
    """Mean of the squared difference over every entry (divides by rows * cols)."""
    pred = _as_matrix(pred)
    target = _as_matrix(target)
    if pred.shape != target.shape:
        raise ConfigError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient of :func:`mse_loss` with respect to ``pred``."""
    if pred.shape != target.shape:
        raise ConfigError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    return 2.0 * (pred - target) / pred.size


class Sequential:
    """Ordered stack of layers with a shared forward/backward pass."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x) -> np.ndarray:
        out = _as_matrix(x)
        for layer in self.layers:
            out = layer.forward(out)
        return out

    __call__ = forward

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def batchnorms(self) -> list[BatchNorm]:
        return [layer for layer in self.layers if isinstance(layer, BatchNorm)]

    def dense_layers(self) -> list[Dense]:
        return [layer for layer in self.layers if isinstance(layer, Dense)]

    def set_mode(self, mode: Mode | str) -> None:
        for bn in self.batchnorms():
            bn.set_mode(mode)

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.parameters().values()]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.gradients().values()]

    def named_arrays(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        """Every trainable parameter and running statistic, in a fixed order."""
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.parameters().items():
                out.append((f"{prefix}{i}.{name}", arr))
            if isinstance(layer, BatchNorm):
                for name, arr in layer.statistics().items():
                    out.append((f"{prefix}{i}.{name}", arr))
        return out

    def clear_cache(self) -> None:
        for layer in self.layers:
            layer.clear_cache()


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kwargs) -> "AdamState":
        state = cls(**kwargs)
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
        return state


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> list[np.ndarray]:
    """Apply one bias-corrected Adam update to ``params`` in place."""
    if len(params) != len(grads):
        raise ConfigError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ConfigError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
