"""Factorized Gaussian prior and the anchored training loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .nn_core import Dataset, MlpArchitecture, log_likelihood, log_likelihood_and_grad

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianPrior:
    """Independent normal prior, one (mean, std) pair per parameter."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if mean.shape != std.shape:
            raise DimensionError(f"prior mean has length {mean.size} but std has length {std.size}")
        if not np.all(std > 0) or not np.all(np.isfinite(std)):
            raise ConfigError("prior standard deviations must be finite and strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def size(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def isotropic(cls, size: int, std: float = 1.0, mean: float = 0.0) -> "GaussianPrior":
        return cls(np.full(size, float(mean)), np.full(size, float(std)))

    @classmethod
    def for_architecture(cls, arch: MlpArchitecture, std: float = 1.0, layer_std=None) -> "GaussianPrior":
        """Zero-mean prior; ``layer_std`` optionally gives (weight_std, bias_std) per layer."""
        stds = np.full(arch.parameter_count, float(std))
        if layer_std is not None:
            if len(layer_std) != len(arch.layer_shapes):
                raise ConfigError(
                    f"layer_std has {len(layer_std)} entries for {len(arch.layer_shapes)} layers"
                )
            for (ws, bs), entry in zip(arch.layer_slices(), layer_std):
                w_std, b_std = (entry, entry) if np.isscalar(entry) else entry
                stds[ws] = w_std
                if bs is not None:
                    stds[bs] = b_std
        return cls(np.zeros(arch.parameter_count), stds)

    def check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self.mean.shape:
            raise DimensionError(f"vector has length {theta.size}, prior has length {self.size}")
        return theta


def log_normal_density(theta, center, std) -> float:
    """Sum of independent scalar normal log-densities."""
    z = (theta - center) / std
    return float(np.sum(-0.5 * z * z - np.log(std) - 0.5 * _LOG_2PI))


def log_prior_density(prior: GaussianPrior, theta) -> float:
    return log_normal_density(prior.check(theta), prior.mean, prior.std)


def _likelihood_terms(arch, theta, data, likelihood_scale):
    if data is None or likelihood_scale == 0:
        return 0.0, np.zeros_like(theta)
    value, grad = log_likelihood_and_grad(arch, theta, data)
    return likelihood_scale * value, likelihood_scale * grad


def anchored_loss_and_grad(
    arch: MlpArchitecture,
    prior: GaussianPrior,
    anchor,
    theta,
    data: Dataset | None,
    likelihood_scale: float = 1.0,
) -> tuple[float, np.ndarray]:
    """Anchored loss -(log p(D|theta) + log N(theta | anchor, prior cov)) and its gradient.

    ``data=None`` drops the likelihood term. ``likelihood_scale`` multiplies
    it, which is how minibatches stand in for the full sum (n / batch_size).
    """
    theta = prior.check(theta)
    anchor = prior.check(anchor)
    ll, gll = _likelihood_terms(arch, theta, data, likelihood_scale)
    value = -(ll + log_normal_density(theta, anchor, prior.std))
    grad = -gll + (theta - anchor) / prior.std ** 2
    return value, grad


def anchored_loss(arch, prior, anchor, theta, data, likelihood_scale=1.0) -> float:
    theta = prior.check(theta)
    anchor = prior.check(anchor)
    ll = 0.0
    if data is not None and likelihood_scale != 0:
        ll = likelihood_scale * log_likelihood(arch, theta, data)
    return -(ll + log_normal_density(theta, anchor, prior.std))


def grad_anchored_loss(arch, prior, anchor, theta, data, likelihood_scale=1.0) -> np.ndarray:
    return anchored_loss_and_grad(arch, prior, anchor, theta, data, likelihood_scale)[1]
