"""Synthetic desk-scale datasets and a CSV loader."""

from __future__ import annotations

import csv

import numpy as np

from .errors import ConfigError, DataFormatError
from .nn_core import Dataset

GENERATORS = ("line1d", "sine1d", "twoclass2d")
MAX_INFERRED_CLASSES = 64


def generate_synthetic(name: str, n: int, noise: float, seed: int, **params) -> Dataset:
    """Deterministic toy data.

    line1d      y = slope * x + intercept + noise * eps, x ~ U(-1, 1)
    sine1d      y = sin(2 pi x) + noise * eps, x ~ U(0, 1)
    twoclass2d  two isotropic blobs of std ``noise`` whose centres sit
                ``separation`` blob-stds apart along the diagonal; labels
                alternate 0, 1 so the classes are balanced
    """
    if int(n) < 1:
        raise ConfigError(f"n must be at least 1, got {n}")
    if noise < 0:
        raise ConfigError(f"noise must be non-negative, got {noise}")
    n = int(n)
    rng = np.random.default_rng(int(seed))
    meta = {"generator": name, "n": n, "noise": float(noise), **params}
    if name == "line1d":
        slope = float(params.get("slope", 1.0))
        intercept = float(params.get("intercept", 0.0))
        x = rng.uniform(-1.0, 1.0, size=n)
        y = slope * x + intercept + noise * rng.standard_normal(n)
        return Dataset(x[:, None], y, name, {**meta, "task": "regression"})
    if name == "sine1d":
        x = rng.uniform(0.0, 1.0, size=n)
        y = np.sin(2 * np.pi * x) + noise * rng.standard_normal(n)
        return Dataset(x[:, None], y, name, {**meta, "task": "regression"})
    if name == "twoclass2d":
        separation = float(params.get("separation", 4.0))
        labels = np.arange(n) % 2
        centre = 0.5 * separation * noise * np.array([1.0, 1.0]) / np.sqrt(2.0)
        sign = np.where(labels == 1, 1.0, -1.0)[:, None]
        x = sign * centre + noise * rng.standard_normal((n, 2))
        return Dataset(x, labels, name, {**meta, "task": "classification", "num_classes": 2})
    raise ConfigError(f"unknown dataset generator {name!r}; valid names: {', '.join(GENERATORS)}")


def load_csv(path, task: str | None = None) -> Dataset:
    """Numeric CSV with a header row; the last column is the target.

    Without an explicit ``task``, integer-valued non-negative targets with at
    most 64 distinct values make a classification dataset. Row numbers in
    errors count data rows from 1 (the header is row 0); columns count from 1.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise DataFormatError(f"{path}: need at least one input column and one target column", row=0)
    if not body:
        raise DataFormatError(f"{path}: header but no data rows")
    values = np.empty((len(body), len(header)))
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataFormatError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}", row=r)
        for c, cell in enumerate(row, start=1):
            try:
                values[r - 1, c - 1] = float(cell)
            except ValueError:
                raise DataFormatError(f"{path}: cannot parse {cell!r} at (row {r}, column {c})", row=r, column=c)
    x, y = values[:, :-1], values[:, -1]
    if task is None:
        distinct = np.unique(y)
        integral = np.all(y == np.round(y)) and np.all(y >= 0)
        task = "classification" if integral and distinct.size <= MAX_INFERRED_CLASSES else "regression"
    meta = {"path": str(path), "columns": header, "task": task}
    if task == "classification":
        if np.any(y != np.round(y)) or np.any(y < 0):
            raise DataFormatError(f"{path}: classification targets must be non-negative integers")
        y = y.astype(np.int64)
        meta["num_classes"] = int(y.max()) + 1
    elif task != "regression":
        raise ConfigError(f"task must be classification or regression, got {task!r}")
    return Dataset(x, y, str(path), meta)
