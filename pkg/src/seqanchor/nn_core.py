"""Small fully connected networks on flat float64 parameter vectors.

Parameters are packed layer by layer: the (fan_in, fan_out) weight matrix of
layer 1 in row-major order, then its bias, then layer 2, and so on. Every
other module (priors, anchors, optimizers, persistence) works on this flat
vector, so this file is the only place that knows the packing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import ConfigError, DimensionError, NumericalError

ACTIVATIONS = ("relu", "tanh")
TASKS = ("classification", "regression")

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer sizes (input first, output last) plus the likelihood that goes with them.

    ``bias=False`` drops every bias vector; it exists so that 1-4 parameter
    models stay small enough for grid quadrature.
    """

    layer_sizes: tuple[int, ...]
    activation: str = "tanh"
    task: str = "regression"
    noise_sigma: float = 1.0
    bias: bool = True

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ConfigError(f"need at least an input and an output layer, got {list(sizes)}")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be positive, got {list(sizes)}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if not self.noise_sigma > 0:
            raise ConfigError(f"noise_sigma must be positive, got {self.noise_sigma}")
        if self.task == "regression" and sizes[-1] != 1:
            raise ConfigError("regression networks must have a single output")
        if self.task == "classification" and sizes[-1] < 2:
            raise ConfigError("classification networks need at least two output classes")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        return list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    @property
    def parameter_count(self) -> int:
        return sum(i * o + (o if self.bias else 0) for i, o in self.layer_shapes)

    def layer_slices(self) -> list[tuple[slice, slice | None]]:
        """(weight slice, bias slice) into the flat vector for each layer."""
        out = []
        pos = 0
        for fan_in, fan_out in self.layer_shapes:
            w = slice(pos, pos + fan_in * fan_out)
            pos = w.stop
            b = None
            if self.bias:
                b = slice(pos, pos + fan_out)
                pos = b.stop
            out.append((w, b))
        return out

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "task": self.task,
            "noise_sigma": float(self.noise_sigma),
            "bias": self.bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpArchitecture":
        return cls(
            layer_sizes=tuple(d["layer_sizes"]),
            activation=d.get("activation", "tanh"),
            task=d.get("task", "regression"),
            noise_sigma=float(d.get("noise_sigma", 1.0)),
            bias=bool(d.get("bias", True)),
        )


@dataclass
class Dataset:
    """Inputs (n, d) and targets (n,): class indices or real values."""

    inputs: np.ndarray
    targets: np.ndarray
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise DimensionError(f"inputs must be a non-empty (n, d) matrix, got shape {x.shape}")
        y = np.asarray(self.targets).reshape(-1)
        if y.shape[0] != x.shape[0]:
            raise DimensionError(f"{x.shape[0]} inputs but {y.shape[0]} targets")
        self.inputs = x
        self.targets = y

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, index) -> "Dataset":
        return Dataset(self.inputs[index], self.targets[index], self.name, self.meta)


def check_params(arch: MlpArchitecture, params) -> np.ndarray:
    theta = np.asarray(params, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] != arch.parameter_count:
        raise DimensionError(
            f"parameter vector has length {theta.size}, architecture "
            f"{list(arch.layer_sizes)} expects {arch.parameter_count}"
        )
    return theta


def check_data(arch: MlpArchitecture, data: Dataset) -> None:
    if data.inputs.shape[1] != arch.input_dim:
        raise DimensionError(
            f"dataset {data.name!r} has {data.inputs.shape[1]} input columns, "
            f"architecture expects {arch.input_dim}"
        )
    if arch.task == "classification":
        t = data.targets
        if np.any(t < 0) or np.any(t >= arch.output_dim) or np.any(t != np.floor(t)):
            raise DimensionError(f"class targets must be integers in [0, {arch.output_dim})")


def unflatten(arch: MlpArchitecture, params) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """Split a flat vector into per-layer (W, b) views with W of shape (fan_in, fan_out)."""
    theta = check_params(arch, params)
    layers = []
    for (fan_in, fan_out), (ws, bs) in zip(arch.layer_shapes, arch.layer_slices()):
        W = theta[ws].reshape(fan_in, fan_out)
        b = theta[bs] if bs is not None else None
        layers.append((W, b))
    return layers


def flatten(layers) -> np.ndarray:
    parts = []
    for W, b in layers:
        parts.append(np.asarray(W, dtype=np.float64).reshape(-1))
        if b is not None:
            parts.append(np.asarray(b, dtype=np.float64).reshape(-1))
    return np.concatenate(parts)


def _activate(arch, z):
    if arch.activation == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_grad(arch, z, h):
    if arch.activation == "tanh":
        return 1.0 - h * h
    return (z > 0.0).astype(np.float64)


def _as_batch(arch, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != arch.input_dim:
        raise DimensionError(f"input has shape {x.shape}, architecture expects {arch.input_dim} features")
    return X, single


def forward(arch: MlpArchitecture, params, x) -> np.ndarray:
    """Logits (classification) or predictive mean (regression).

    ``x`` may be one input of shape (d,) or a batch of shape (n, d); the
    output has the matching rank.
    """
    X, single = _as_batch(arch, x)
    h = X
    layers = unflatten(arch, params)
    for i, (W, b) in enumerate(layers):
        h = h @ W
        if b is not None:
            h = h + b
        if i < len(layers) - 1:
            h = _activate(arch, h)
    return h[0] if single else h


def forward_many(arch: MlpArchitecture, param_matrix, X) -> np.ndarray:
    """Outputs for many parameter vectors at once: (G, P) x (n, d) -> (G, n, out)."""
    thetas = np.asarray(param_matrix, dtype=np.float64)
    if thetas.ndim != 2 or thetas.shape[1] != arch.parameter_count:
        raise DimensionError(f"expected a (G, {arch.parameter_count}) parameter matrix, got {thetas.shape}")
    X, _ = _as_batch(arch, X)
    G, n = thetas.shape[0], X.shape[0]
    h = X
    shapes = arch.layer_shapes
    for i, ((fan_in, fan_out), (ws, bs)) in enumerate(zip(shapes, arch.layer_slices())):
        W = thetas[:, ws].reshape(G, fan_in, fan_out)
        if i == 0:
            # shared input: one (n, d) x (d, G * out) product
            h = (X @ W.transpose(1, 0, 2).reshape(fan_in, G * fan_out)).reshape(n, G, fan_out).transpose(1, 0, 2)
        else:
            h = np.matmul(h, W)
        if bs is not None:
            h = h + thetas[:, None, bs]
        if i < len(shapes) - 1:
            h = _activate(arch, h)
    return h


def _targets_as_int(data):
    return data.targets.astype(np.int64)


def _log_lik_from_outputs(arch, out, data):
    if not np.all(np.isfinite(out)):
        raise NumericalError("network produced non-finite outputs")
    if arch.task == "classification":
        logp = log_softmax(out, axis=-1)
        idx = _targets_as_int(data)
        return float(np.sum(logp[np.arange(len(idx)), idx]))
    s2 = arch.noise_sigma ** 2
    r = data.targets.astype(np.float64) - out[:, 0]
    n = r.shape[0]
    return float(-0.5 * np.sum(r * r) / s2 - n * (np.log(arch.noise_sigma) + 0.5 * _LOG_2PI))


def log_likelihood(arch: MlpArchitecture, params, data: Dataset) -> float:
    """Sum over the dataset of log p(y_i | x_i, params)."""
    check_data(arch, data)
    return _log_lik_from_outputs(arch, forward(arch, params, data.inputs), data)


def log_likelihood_and_grad(arch: MlpArchitecture, params, data: Dataset) -> tuple[float, np.ndarray]:
    """Log-likelihood and its exact gradient from a single forward/backward pass."""
    check_data(arch, data)
    layers = unflatten(arch, params)
    hs = [data.inputs]
    zs = []
    h = data.inputs
    for i, (W, b) in enumerate(layers):
        z = h @ W
        if b is not None:
            z = z + b
        zs.append(z)
        h = _activate(arch, z) if i < len(layers) - 1 else z
        hs.append(h)
    out = hs[-1]
    value = _log_lik_from_outputs(arch, out, data)

    if arch.task == "classification":
        delta = -softmax(out, axis=-1)
        delta[np.arange(len(data)), _targets_as_int(data)] += 1.0
    else:
        delta = ((data.targets.astype(np.float64) - out[:, 0]) / arch.noise_sigma ** 2)[:, None]

    grads = []
    for i in range(len(layers) - 1, -1, -1):
        W, b = layers[i]
        gW = hs[i].T @ delta
        gb = delta.sum(axis=0) if b is not None else None
        grads.append((gW, gb))
        if i > 0:
            delta = (delta @ W.T) * _activate_grad(arch, zs[i - 1], hs[i])
    grad = flatten(grads[::-1])
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite log-likelihood gradient")
    return value, grad


def grad_log_likelihood(arch: MlpArchitecture, params, data: Dataset) -> np.ndarray:
    return log_likelihood_and_grad(arch, params, data)[1]


def predict_proba(arch: MlpArchitecture, params, x) -> np.ndarray:
    """Softmax class probabilities for one input (d,) or a batch (n, d)."""
    if arch.task != "classification":
        raise ConfigError("predict_proba is only defined for classification networks")
    return softmax(forward(arch, params, x), axis=-1)
