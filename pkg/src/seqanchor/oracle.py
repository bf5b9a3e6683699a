"""Exact reference posteriors for desk-scale models.

Two routes: closed-form Bayesian linear regression, and brute-force
quadrature of the log joint on a tensor-product grid for networks with at
most four parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import log_softmax, logsumexp, softmax

from .errors import ConfigError, DimensionError, NumericalError
from .metrics import PredictiveDensity
from .nn_core import Dataset, MlpArchitecture, check_data, forward_many
from .objectives import GaussianPrior

MAX_GRID_PARAMS = 4


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(f"covariance {cov.shape} does not match mean of length {mean.size}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-10:
            raise NumericalError("posterior covariance is not symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("posterior covariance is not positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_chol", chol)

    def sample(self, rng, size: int) -> np.ndarray:
        return self.mean + rng.standard_normal((size, self.mean.size)) @ self._chol.T


def linear_design(arch: MlpArchitecture, inputs) -> np.ndarray:
    """Design matrix whose columns follow the flat parameter order of a [d, 1] network."""
    if len(arch.layer_sizes) != 2 or arch.output_dim != 1 or arch.task != "regression":
        raise ConfigError(f"closed-form posterior needs a [d, 1] regression network, got {list(arch.layer_sizes)}")
    X = np.asarray(inputs, dtype=np.float64).reshape(-1, arch.input_dim)
    if arch.bias:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    return X


def _precision_system(X, noise_sigma, prior):
    X = np.asarray(X, dtype=np.float64).reshape(-1, prior.size)
    A = X.T @ X / noise_sigma ** 2 + np.diag(1.0 / prior.std ** 2)
    try:
        chol = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("posterior precision matrix is singular") from exc
    return X, A, chol


def _chol_solve(chol, b):
    return cho_solve((chol, True), b)


def linear_posterior(X, y, noise_sigma: float, prior: GaussianPrior) -> GaussianPosterior:
    """Conjugate posterior of y = X theta + N(0, noise_sigma^2) under a diagonal Gaussian prior."""
    X, A, chol = _precision_system(X, noise_sigma, prior)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != X.shape[0]:
        raise DimensionError(f"{X.shape[0]} design rows but {y.size} targets")
    cov = _chol_solve(chol, np.eye(prior.size))
    cov = 0.5 * (cov + cov.T)
    mean = _chol_solve(chol, X.T @ y / noise_sigma ** 2 + prior.mean / prior.std ** 2)
    return GaussianPosterior(mean, cov)


def anchored_optimum(X, y, noise_sigma: float, prior: GaussianPrior, anchor) -> np.ndarray:
    """Exact minimiser of the anchored loss for a linear-Gaussian model (ridge towards the anchor)."""
    X, _, chol = _precision_system(X, noise_sigma, prior)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    return _chol_solve(chol, X.T @ y / noise_sigma ** 2 + np.asarray(anchor) / prior.std ** 2)


@dataclass
class GridPosterior:
    """Log posterior density on a tensor grid, normalised by the trapezoid rule."""

    axes: list[np.ndarray]
    log_density: np.ndarray
    log_normalizer: float

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def quadrature_weights(self) -> np.ndarray:
        w = np.ones(())
        for ax in self.axes:
            h = np.diff(ax)
            wa = np.zeros(ax.size)
            wa[:-1] += 0.5 * h
            wa[1:] += 0.5 * h
            w = np.multiply.outer(w, wa)
        return w

    def masses(self) -> np.ndarray:
        """Probability mass of every grid node (flattened, C order); sums to the integral."""
        return (self.quadrature_weights() * np.exp(self.log_density)).reshape(-1)

    def integral(self) -> float:
        return float(self.masses().sum())

    def mean(self) -> np.ndarray:
        return self.masses() @ self.points()

    def covariance(self) -> np.ndarray:
        m = self.masses()
        c = self.points() - self.mean()
        return (c * m[:, None]).T @ c


def _log_likelihood_many(arch, thetas, data):
    out = forward_many(arch, thetas, data.inputs)
    if arch.task == "classification":
        idx = data.targets.astype(np.int64)
        logp = log_softmax(out, axis=-1)
        return logp[:, np.arange(idx.size), idx].sum(axis=1)
    r = data.targets.astype(np.float64)[None, :] - out[:, :, 0]
    s = arch.noise_sigma
    return -0.5 * (r * r).sum(axis=1) / s ** 2 - r.shape[1] * (np.log(s) + 0.5 * np.log(2 * np.pi))


def grid_posterior(
    arch: MlpArchitecture,
    data: Dataset | None,
    prior: GaussianPrior,
    points_per_axis: int = 401,
    extent: float = 5.0,
    chunk: int = 1 << 16,
) -> GridPosterior:
    """Posterior of a network with at most four parameters by tensor-grid quadrature.

    Axis j spans prior mean +/- ``extent`` prior std. Chunks are summed in a
    fixed order so the normaliser is reproducible.
    """
    P = arch.parameter_count
    if P > MAX_GRID_PARAMS:
        raise ConfigError(
            f"grid quadrature supports at most {MAX_GRID_PARAMS} parameters, network has {P}; "
            "use linear_posterior for linear-Gaussian models"
        )
    if prior.size != P:
        raise DimensionError(f"prior has {prior.size} entries, network has {P} parameters")
    k = int(points_per_axis)
    if k < 3:
        raise ConfigError("points_per_axis must be at least 3")
    if data is not None:
        check_data(arch, data)
    axes = [np.linspace(m - extent * s, m + extent * s, k) for m, s in zip(prior.mean, prior.std)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    z = (pts - prior.mean) / prior.std
    log_joint = (-0.5 * z * z - np.log(prior.std) - 0.5 * np.log(2 * np.pi)).sum(axis=1)
    if data is not None:
        step = max(1, chunk // max(1, len(data)))
        for start in range(0, pts.shape[0], step):
            log_joint[start:start + step] += _log_likelihood_many(arch, pts[start:start + step], data)
    if not np.all(np.isfinite(log_joint)):
        raise NumericalError("non-finite log joint on the grid")
    grid = GridPosterior(axes, log_joint.reshape(mesh[0].shape), 0.0)
    log_w = np.log(grid.quadrature_weights().reshape(-1))
    log_z = float(logsumexp(log_joint + log_w))
    grid.log_density = grid.log_density - log_z
    grid.log_normalizer = log_z
    return grid


def _heaviest_nodes(mass, tail):
    """Indices of the fewest nodes whose mass reaches 1 - tail (stable order)."""
    order = np.argsort(-mass, kind="stable")
    cum = np.cumsum(mass[order])
    cut = int(np.searchsorted(cum, cum[-1] * (1.0 - tail))) + 1
    return np.sort(order[:cut])


def reference_predictive(posterior, inputs, arch: MlpArchitecture, samples: int = 1000, rng=None,
                         tail: float = 1e-9) -> PredictiveDensity:
    """Posterior predictive at ``inputs`` under an exact reference posterior.

    Grid posteriors integrate class probabilities by quadrature over the
    nodes carrying all but ``tail`` of the mass (renormalised, so each
    probability moves by at most ``tail``); Gaussian
    posteriors are Monte Carlo averaged. Regression returns ``samples``
    draws per input: a parameter draw plus observation noise.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    X = np.asarray(inputs, dtype=np.float64).reshape(-1, arch.input_dim)
    S = int(samples)
    if isinstance(posterior, GridPosterior):
        mass = posterior.masses()
        pts = posterior.points()
        keep = _heaviest_nodes(mass, tail)
        mass, pts = mass[keep] / mass[keep].sum(), pts[keep]
        if arch.task == "classification":
            probs = np.zeros((X.shape[0], arch.output_dim))
            step = max(1, (1 << 20) // max(1, X.shape[0] * arch.output_dim))
            for start in range(0, pts.shape[0], step):
                out = forward_many(arch, pts[start:start + step], X)
                probs += np.einsum("g,gnk->nk", mass[start:start + step], softmax(out, axis=-1))
            probs /= probs.sum(axis=1, keepdims=True)
            return PredictiveDensity("classification", probs)
        thetas = pts[rng.choice(pts.shape[0], size=S, p=mass)]
    elif isinstance(posterior, GaussianPosterior):
        thetas = posterior.sample(rng, S)
        if arch.task == "classification":
            return PredictiveDensity("classification", softmax(forward_many(arch, thetas, X), axis=-1).mean(axis=0))
    else:
        raise ConfigError(f"unsupported posterior type {type(posterior).__name__}")
    mu = forward_many(arch, thetas, X)[:, :, 0]  # (S, n)
    draws = mu + arch.noise_sigma * rng.standard_normal(mu.shape)
    return PredictiveDensity("regression", draws.T)
