"""Ensemble predictive densities and the posterior-comparison metrics.

Classification compares per-input class probabilities (agreement of
argmaxes, total variation); regression compares per-input predictive
samples through a one-dimensional Wasserstein-2 distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .errors import ConfigError, DataFormatError, DimensionError
from .nn_core import forward_many

KINDS = ("classification", "regression")


@dataclass
class PredictiveDensity:
    """``values`` is (n, K) class probabilities or (n, S) predictive samples."""

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"predictive kind must be one of {KINDS}, got {self.kind!r}")
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] < 1:
            raise DimensionError(f"predictive values must be a 2-D array with at least one column, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DimensionError("predictive values must be finite")
        if self.kind == "classification":
            if np.any(v < 0) or np.any(v > 1) or np.any(np.abs(v.sum(axis=1) - 1) > 1e-9):
                raise DimensionError("class-probability rows must lie in [0, 1] and sum to 1")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]


def ensemble_predictive(ensemble, inputs, samples_per_member: int = 1, rng=None) -> PredictiveDensity:
    """Uniform mixture over members, evaluated at every row of ``inputs``.

    Regression pools ``samples_per_member`` noisy draws from each member, so
    each row ends up with N * S samples (member-major order).
    """
    if len(ensemble) == 0:
        raise ConfigError("cannot form a predictive density from an empty ensemble")
    arch = ensemble.arch
    out = forward_many(arch, ensemble.member_matrix(), inputs)  # (N, n, out)
    if arch.task == "classification":
        return PredictiveDensity("classification", softmax(out, axis=-1).mean(axis=0))
    if rng is None:
        rng = np.random.default_rng(0)
    S = int(samples_per_member)
    if S < 1:
        raise ConfigError("samples_per_member must be at least 1")
    N, n = out.shape[0], out.shape[1]
    mu = out[:, :, 0]
    noise = rng.standard_normal((N, n, S)) * arch.noise_sigma
    samples = mu[:, :, None] + noise  # (N, n, S)
    return PredictiveDensity("regression", samples.transpose(1, 0, 2).reshape(n, N * S))


def _as_matrix(p):
    return p.values if isinstance(p, PredictiveDensity) else np.asarray(p, dtype=np.float64)


def _paired(p, q):
    p, q = _as_matrix(p), _as_matrix(q)
    if p.shape != q.shape:
        raise DimensionError(f"shape mismatch: reference {p.shape} vs approximation {q.shape}")
    return p, q


def agreement(p, p_hat) -> float:
    """Fraction of inputs where both densities pick the same most likely class.

    Ties go to the lowest class index (numpy's argmax rule) on both sides.
    """
    p, p_hat = _paired(p, p_hat)
    return float(np.mean(np.argmax(p, axis=1) == np.argmax(p_hat, axis=1)))


def total_variation(p, p_hat) -> float:
    """Mean over inputs of half the L1 distance between class-probability rows."""
    p, p_hat = _paired(p, p_hat)
    return float(np.mean(0.5 * np.abs(p - p_hat).sum(axis=1)))


def wasserstein2(samples_p, samples_q) -> float:
    """Empirical 1-D Wasserstein-2 distance between two sample sets.

    Both inverse empirical CDFs are read off at the midpoints of a uniform
    grid of max(len) quantile levels; for equal sizes this is the sorted
    matching.
    """
    a = np.sort(np.asarray(samples_p, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(samples_q, dtype=np.float64).reshape(-1))
    if a.size == 0 or b.size == 0:
        raise DimensionError("wasserstein2 needs two non-empty sample sets")
    if a.size != b.size:
        m = max(a.size, b.size)
        levels = (np.arange(m) + 0.5) / m
        a = a[np.minimum((levels * a.size).astype(np.int64), a.size - 1)]
        b = b[np.minimum((levels * b.size).astype(np.int64), b.size - 1)]
    return float(np.sqrt(np.mean((a - b) ** 2)))


def regression_report(reference, approx) -> float:
    """Mean over inputs of the point-wise W2 between sample rows."""
    ref, app = _as_matrix(reference), _as_matrix(approx)
    if ref.ndim != 2 or app.ndim != 2 or ref.shape[0] != app.shape[0]:
        raise DimensionError(f"reference has {ref.shape[0]} inputs, approximation has {app.shape[0]}")
    return float(np.mean([wasserstein2(r, s) for r, s in zip(ref, app)]))


# -- serialisation ---------------------------------------------------------

REPORT_KEYS = ("agreement", "total_variation", "w2", "n_members", "total_epochs", "seed")
_INT_KEYS = {"n_members", "total_epochs", "seed", "budget"}


def format_report(values: dict) -> str:
    """``key=value`` lines; reals with six decimals, missing metrics as ``nan``."""
    lines = []
    keys = list(REPORT_KEYS) + [k for k in values if k not in REPORT_KEYS]
    for key in keys:
        v = values.get(key, math.nan)
        if key in _INT_KEYS:
            text = str(int(v))
        elif isinstance(v, str):
            text = v
        else:
            text = "nan" if math.isnan(v) else f"{float(v):.6f}"
        lines.append(f"{key}={text}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataFormatError(f"report line {lineno} is not key=value: {line!r}", row=lineno)
        key, value = line.split("=", 1)
        if key in _INT_KEYS:
            out[key] = int(value)
        elif key in ("agreement", "total_variation", "w2"):
            out[key] = float(value)
        else:
            out[key] = value
    return out


def write_predictive(path, density: PredictiveDensity) -> None:
    """CSV with a header of ``p_k`` (probabilities) or ``s_k`` (samples) columns."""
    prefix = "p" if density.kind == "classification" else "s"
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(f"{prefix}_{k}" for k in range(density.values.shape[1])) + "\n")
        for row in density.values:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def read_predictive(path) -> PredictiveDensity:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0][:2] not in ("p_", "s_"):
            raise DataFormatError(f"{path}: header must name p_k or s_k columns")
        kind = "classification" if header[0].startswith("p_") else "regression"
        rows = []
        for r, line in enumerate(fh, start=1):
            cells = line.strip().split(",")
            if len(cells) != len(header):
                raise DataFormatError(f"{path}: row {r} has {len(cells)} cells, expected {len(header)}", row=r)
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise DataFormatError(f"{path}: row {r}: {exc}", row=r) from exc
    if not rows:
        raise DataFormatError(f"{path}: no predictive rows")
    return PredictiveDensity(kind, np.array(rows))
