"""Anchor sampling: prior draws and the guided-walk Metropolis-Hastings chain.

Each scalar parameter runs its own chain against its own marginal prior and
has its own random substreams, so coordinate j's trajectory depends only on
(seed, j) and on the prior entries of coordinate j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .objectives import GaussianPrior


@dataclass(frozen=True)
class ChainConfig:
    """Guided-walk settings.

    With ``relative=True`` (default) the proposal scale of coordinate j is
    ``step_sigma * prior.std[j]``; otherwise ``step_sigma`` is absolute.
    """

    step_sigma: float = 0.1
    seed: int = 0
    relative: bool = True

    def __post_init__(self):
        if not self.step_sigma > 0:
            raise ConfigError(f"step_sigma must be positive, got {self.step_sigma}")
        if int(self.seed) < 0:
            raise ConfigError("chain seed must be a non-negative integer")

    def scales(self, prior: GaussianPrior) -> np.ndarray:
        if self.relative:
            return self.step_sigma * prior.std
        return np.full(prior.size, float(self.step_sigma))


@dataclass(frozen=True)
class Anchor:
    theta: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        d = np.asarray(self.direction, dtype=np.float64).reshape(-1)
        if theta.shape != d.shape:
            raise DimensionError(f"anchor has {theta.size} values but {d.size} directions")
        if not np.all(np.abs(d) == 1.0):
            raise ConfigError("anchor directions must be exactly -1 or +1")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "direction", d)


class CoordinateStreams:
    """Independent random streams for every scalar coordinate.

    Coordinate j owns three generators seeded from ``(seed, *key, j, purpose)``:
    one for its initial prior draw and direction, one for proposal steps and
    one for acceptance uniforms. Step draws are buffered in blocks so a chain
    step costs a couple of array slices.
    """

    _INIT, _STEP, _UNIFORM = 0, 1, 2

    def __init__(self, seed: int, size: int, key: tuple = (), block: int = 512):
        self.size = int(size)
        self.block = int(block)

        def gens(purpose):
            return [
                np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(*key, j, purpose)))
                for j in range(self.size)
            ]

        self._init = gens(self._INIT)
        self._step = gens(self._STEP)
        self._uniform = gens(self._UNIFORM)
        self._z = np.empty((self.size, self.block))
        self._u = np.empty((self.size, self.block))
        self._pos = self.block

    def _check(self, size):
        if size is not None and int(np.prod(size)) != self.size:
            raise DimensionError(f"streams cover {self.size} coordinates, asked for {size}")

    def standard_normal(self, size=None) -> np.ndarray:
        self._check(size)
        return np.array([g.standard_normal() for g in self._init])

    def random_direction(self) -> np.ndarray:
        return np.array([2.0 * g.integers(2) - 1.0 for g in self._init])

    def step_draws(self) -> tuple[np.ndarray, np.ndarray]:
        """One N(0, 1) proposal draw and one U(0, 1) draw per coordinate."""
        if self._pos == self.block:
            for j in range(self.size):
                self._z[j] = self._step[j].standard_normal(self.block)
                self._u[j] = self._uniform[j].random(self.block)
            self._pos = 0
        i = self._pos
        self._pos += 1
        return self._z[:, i], self._u[:, i]


def sample_prior(prior: GaussianPrior, rng) -> np.ndarray:
    """Independent draw of every coordinate from its prior marginal.

    ``rng`` is a numpy ``Generator`` or a :class:`CoordinateStreams`.
    """
    return prior.mean + prior.std * rng.standard_normal(prior.size)


def _step_draws(rng, size):
    if isinstance(rng, np.random.Generator):
        return rng.standard_normal(size), rng.random(size)
    return rng.step_draws()


def mh_update(prior: GaussianPrior, anchor: Anchor, cfg: ChainConfig, rng) -> Anchor:
    """One guided-walk step applied independently to every coordinate.

    Proposal ``y = theta + d * |z|`` with ``z ~ N(0, step)``; accepted with
    probability ``min(p(y) / p(theta), 1)`` under the scalar prior marginal.
    A rejection keeps theta and flips that coordinate's direction.
    """
    theta = prior.check(anchor.theta)
    d = anchor.direction
    z, u = _step_draws(rng, prior.size)
    y = theta + d * np.abs(z) * cfg.scales(prior)
    zy = (y - prior.mean) / prior.std
    zt = (theta - prior.mean) / prior.std
    alpha = np.exp(np.minimum(-0.5 * (zy * zy - zt * zt), 0.0))
    accept = u < alpha
    return Anchor(np.where(accept, y, theta), np.where(accept, d, -d))


def initial_anchor(prior: GaussianPrior, streams: CoordinateStreams) -> Anchor:
    theta = sample_prior(prior, streams)
    return Anchor(theta, streams.random_direction())


def run_chain(prior: GaussianPrior, n_steps: int, cfg: ChainConfig, streams=None) -> np.ndarray:
    """Anchor trajectory of ``n_steps`` states, shape (n_steps, P).

    Row 0 is a prior draw; each later row is one :func:`mh_update` of the
    previous state. Directions start uniformly in {-1, +1}.
    """
    if int(n_steps) < 1:
        raise ConfigError("n_steps must be at least 1")
    if streams is None:
        streams = CoordinateStreams(cfg.seed, prior.size)
    anchor = initial_anchor(prior, streams)
    out = np.empty((int(n_steps), prior.size))
    out[0] = anchor.theta
    for i in range(1, int(n_steps)):
        anchor = mh_update(prior, anchor, cfg, streams)
        out[i] = anchor.theta
    return out


def write_chain_trace(path, anchors) -> None:
    """Write one ``step,theta_0,...`` row per chain state."""
    anchors = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    header = ",".join(["step"] + [f"theta_{j}" for j in range(anchors.shape[1])])
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for i, row in enumerate(anchors):
            fh.write(",".join([str(i)] + [format(v, ".17g") for v in row]) + "\n")
