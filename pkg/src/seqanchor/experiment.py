"""End-to-end runs: data, reference posterior, ensemble training, metrics, artifacts."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .datasets import generate_synthetic, load_csv
from .ensembling import (
    Ensemble,
    save_ensemble,
    train_anchored_ensemble,
    train_sequential_anchored_ensemble,
)
from .errors import ConfigError, DimensionError
from .metrics import (
    REPORT_KEYS,
    PredictiveDensity,
    agreement,
    ensemble_predictive,
    format_report,
    parse_report,
    regression_report,
    total_variation,
    write_predictive,
)
from .nn_core import Dataset, check_data
from .objectives import GaussianPrior
from .oracle import grid_posterior, linear_design, linear_posterior, reference_predictive, MAX_GRID_PARAMS
from .seeding import substream

log = logging.getLogger(__name__)

TRACE_HEADER = "cumulative_epoch,chain,member,loss"
# default grid resolution by parameter count; keeps quadrature within seconds
GRID_POINTS = {1: 401, 2: 401, 3: 61, 4: 31}


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    ds = cfg.raw["dataset"]
    if ds.get("path"):
        data = load_csv(ds["path"], ds.get("task"))
    else:
        seed = ds.get("seed")
        if seed is None:
            seed = int(substream(cfg.seed, "data").integers(2 ** 63))
        data = generate_synthetic(ds["generator"], ds["n"], float(ds["noise"]), seed, **(ds.get("params") or {}))
    try:
        check_data(cfg.arch, data)
    except DimensionError as exc:
        raise ConfigError(f"dataset does not fit the architecture: {exc}") from exc
    return data


def build_prior(cfg: ExperimentConfig) -> GaussianPrior:
    p = cfg.raw["prior"]
    return GaussianPrior.for_architecture(cfg.arch, float(p["std"]), p.get("layer_std"))


def evaluation_inputs(cfg: ExperimentConfig, data: Dataset) -> np.ndarray:
    """Equispaced grid over the data range widened by ``margin`` on each side.

    1-D inputs get ``grid_points`` (default 200) points; 2-D inputs a square
    grid with ``grid_points`` (default 20) per axis. Higher dimensions fall
    back to the training inputs.
    """
    ev = cfg.raw["evaluation"]
    d = data.inputs.shape[1]
    if d > 2:
        return data.inputs.copy()
    k = ev.get("grid_points") or (200 if d == 1 else 20)
    lo, hi = data.inputs.min(axis=0), data.inputs.max(axis=0)
    pad = float(ev.get("margin", 0.2)) * (hi - lo)
    axes = [np.linspace(a - p, b + p, int(k)) for a, b, p in zip(lo, hi, pad)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def oracle_posterior(cfg: ExperimentConfig, data: Dataset, prior: GaussianPrior):
    """Exact reference posterior for the configured model, or ``None`` when there is none."""
    oc = cfg.raw["oracle"]
    kind = oc["kind"]
    arch = cfg.arch
    linear_ok = len(arch.layer_sizes) == 2 and arch.task == "regression"
    if kind == "auto":
        kind = "linear" if linear_ok else ("grid" if arch.parameter_count <= MAX_GRID_PARAMS else "none")
    if kind == "none":
        return None
    if kind == "linear":
        X = linear_design(arch, data.inputs)
        return linear_posterior(X, data.targets.astype(np.float64), arch.noise_sigma, prior)
    points = oc["points_per_axis"] or GRID_POINTS[arch.parameter_count]
    return grid_posterior(arch, data, prior, int(points))


def compute_reference(cfg, data, prior, inputs) -> PredictiveDensity | None:
    post = oracle_posterior(cfg, data, prior)
    if post is None:
        return None
    samples = int(cfg.raw["oracle"]["samples"])
    return reference_predictive(post, inputs, cfg.arch, samples, substream(cfg.seed, "oracle"))


def train_ensemble(cfg: ExperimentConfig, data: Dataset, prior: GaussianPrior) -> Ensemble:
    if cfg.method == "ae":
        return train_anchored_ensemble(cfg.arch, prior, data, cfg.plan(), cfg.init_train, cfg.seed)
    return train_sequential_anchored_ensemble(
        cfg.arch, prior, data, cfg.plan(), cfg.init_train, cfg.seq_train, cfg.chain, cfg.seed
    )


def loss_trace_rows(ensemble: Ensemble) -> list[tuple[int, int, int, float]]:
    """(cumulative_epoch, chain, member, loss) per epoch, in training order."""
    rows = []
    epoch = 0
    for member, rec in enumerate(ensemble.provenance):
        for loss in rec.loss_trace:
            epoch += 1
            rows.append((epoch, rec.chain, member, loss))
    return rows


def evaluate(cfg, ensemble, reference, inputs) -> dict:
    values = {k: math.nan for k in REPORT_KEYS}
    values.update(
        n_members=len(ensemble),
        total_epochs=ensemble.total_epochs,
        seed=cfg.seed,
    )
    if reference is not None:
        S = int(cfg.raw["evaluation"]["samples"])
        approx = ensemble_predictive(ensemble, inputs, S, substream(cfg.seed, "predictive"))
        if reference.n != approx.n:
            raise DimensionError(f"reference covers {reference.n} inputs, ensemble {approx.n}")
        if "agreement" in cfg.metrics:
            values["agreement"] = agreement(reference, approx)
        if "total_variation" in cfg.metrics:
            values["total_variation"] = total_variation(reference, approx)
        if "w2" in cfg.metrics:
            values["w2"] = regression_report(reference, approx)
    values["method"] = cfg.method
    values["budget"] = cfg.budget
    return values


@dataclass
class RunResult:
    report: dict
    ensemble: Ensemble
    reference: PredictiveDensity | None
    paths: dict = field(default_factory=dict)


def _config_line(cfg):
    return json.dumps(cfg.provenance_dict(), sort_keys=True, separators=(",", ":"))


def write_trace(path, rows, cfg=None):
    with open(path, "w", newline="\n") as fh:
        if cfg is not None:
            fh.write(f"# config={_config_line(cfg)}\n")
        fh.write(TRACE_HEADER + "\n")
        for epoch, chain, member, loss in rows:
            fh.write(f"{epoch},{chain},{member},{format(loss, '.17g')}\n")


def read_trace(path) -> list[tuple[int, int, int, float]]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    if ",".join(header) != TRACE_HEADER:
        raise ConfigError(f"{path}: unexpected trace header {header}")
    return [(int(a), int(b), int(c), float(d)) for a, b, c, d in reader]


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None) -> RunResult:
    """Train the configured ensemble, score it against the oracle, write all artifacts.

    Files (written together at the end): ``report.txt``, ``trace.csv``,
    ``ensemble.bin``, ``config.json`` and, when an oracle applies,
    ``reference.csv``.
    """
    out_dir = out_dir or cfg.output_dir
    data = build_dataset(cfg)
    prior = build_prior(cfg)
    inputs = evaluation_inputs(cfg, data)
    reference = compute_reference(cfg, data, prior, inputs)
    ensemble = train_ensemble(cfg, data, prior)
    report = evaluate(cfg, ensemble, reference, inputs)
    log.info("%s: %d members, %d epochs", cfg.method, len(ensemble), ensemble.total_epochs)

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": os.path.join(out_dir, "report.txt"),
        "trace": os.path.join(out_dir, "trace.csv"),
        "ensemble": os.path.join(out_dir, "ensemble.bin"),
        "config": os.path.join(out_dir, "config.json"),
    }
    with open(paths["report"], "w", newline="\n") as fh:
        fh.write(format_report(report))
        fh.write(f"config={_config_line(cfg)}\n")
    write_trace(paths["trace"], loss_trace_rows(ensemble), cfg)
    save_ensemble(paths["ensemble"], ensemble, cfg.provenance_dict())
    with open(paths["config"], "w", newline="\n") as fh:
        json.dump(cfg.provenance_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if reference is not None:
        paths["reference"] = os.path.join(out_dir, "reference.csv")
        write_predictive(paths["reference"], reference)
    return RunResult(report, ensemble, reference, paths)


# -- comparison tables -----------------------------------------------------

METRIC_KEYS = ("agreement", "total_variation", "w2")


@dataclass
class ComparisonRow:
    method: str
    budget: int
    metric: str
    median: float
    plus: float
    minus: float
    count: int

    def formatted(self) -> str:
        return f"{self.median:.3f}^{{+{self.plus:.3f}}}_{{-{self.minus:.3f}}}"


def compare_runs(report_paths) -> list[ComparisonRow]:
    """Median with offsets to the max and min, per (method, budget, metric) cell."""
    reports = []
    for path in report_paths:
        with open(path) as fh:
            reports.append(parse_report(fh.read()))
    if not reports:
        raise ConfigError("compare needs at least one report")
    metric_sets = {tuple(k for k in METRIC_KEYS if not math.isnan(r.get(k, math.nan))) for r in reports}
    if len(metric_sets) != 1:
        raise ConfigError(f"reports carry different metric sets: {sorted(metric_sets)}")
    metrics = metric_sets.pop()
    cells: dict[tuple[str, int], list[dict]] = {}
    for r in reports:
        cells.setdefault((str(r.get("method", "?")), int(r.get("budget", r.get("total_epochs", 0)))), []).append(r)
    rows = []
    for (method, budget) in sorted(cells):
        group = cells[(method, budget)]
        for metric in metrics:
            vals = np.array([g[metric] for g in group])
            med = float(np.median(vals))
            rows.append(ComparisonRow(method, budget, metric, med, float(vals.max() - med),
                                      float(med - vals.min()), len(vals)))
    return rows


def format_comparison(rows) -> str:
    lines = [f"{'method':<8}{'budget':>8}  {'metric':<16}value"]
    for r in rows:
        lines.append(f"{r.method:<8}{r.budget:>8}  {r.metric:<16}{r.formatted()}  (n={r.count})")
    return "\n".join(lines) + "\n"


def comparison_csv(rows) -> str:
    lines = ["method,budget,metric,median,plus,minus,count"]
    for r in rows:
        lines.append(f"{r.method},{r.budget},{r.metric},{r.median:.6f},{r.plus:.6f},{r.minus:.6f},{r.count}")
    return "\n".join(lines) + "\n"
