"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed in the pytest terminal summary)
before asserting, so a failing criterion still reports its measured value.
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy import stats

from seqanchor.anchor_chain import ChainConfig, run_chain
from seqanchor.config import ExperimentConfig
from seqanchor.datasets import generate_synthetic
from seqanchor.ensembling import (
    TrainConfig,
    ae_member_count,
    allocate_budget,
    train,
    train_anchored_ensemble,
    train_sequential_anchored_ensemble,
)
from seqanchor.experiment import (
    build_dataset,
    build_prior,
    compute_reference,
    evaluation_inputs,
    run_experiment,
    train_ensemble,
)
from seqanchor.metrics import (
    agreement,
    ensemble_predictive,
    regression_report,
    total_variation,
    wasserstein2,
)
from seqanchor.nn_core import Dataset, MlpArchitecture, grad_log_likelihood, log_likelihood
from seqanchor.objectives import GaussianPrior, anchored_loss, grad_anchored_loss
from seqanchor.oracle import anchored_optimum, grid_posterior, linear_design, linear_posterior

from conftest import central_differences, relative_close


def test_1_budget_allocation(record_criterion):
    sae = {
        (200, 1, 100, 2): 51, (500, 2, 100, 2): 152, (1000, 3, 100, 2): 351, (10000, 10, 100, 2): 4510,
        (200, 1, 100, 10): 11, (500, 2, 100, 10): 32, (1000, 3, 100, 10): 72, (10000, 10, 100, 10): 910,
    }
    got = {k: allocate_budget(*k).total_members for k in sae}
    ae = {B: ae_member_count(B, 100) for B in (200, 500, 1000, 10000)}
    ok = got == sae and ae == {200: 2, 500: 5, 1000: 10, 10000: 100}
    record_criterion(1, "budget allocation", ok, f"SAE members {list(got.values())}, AE members {list(ae.values())}")
    assert ok


def test_2_gradient_correctness(record_criterion):
    r = np.random.default_rng(2024)
    start = time.perf_counter()
    worst, failures = 0.0, 0
    for _ in range(100):
        depth = r.integers(0, 2)
        sizes = [int(r.integers(1, 4))] + ([int(r.integers(1, 6))] if depth else [])
        task = "classification" if r.random() < 0.5 else "regression"
        sizes.append(int(r.integers(2, 4)) if task == "classification" else 1)
        arch = MlpArchitecture(tuple(sizes), r.choice(["tanh", "relu"]), task, noise_sigma=float(r.uniform(0.3, 2)))
        n = int(r.integers(1, 9))
        X = r.normal(size=(n, sizes[0]))
        y = r.integers(0, sizes[-1], size=n) if task == "classification" else r.normal(size=n)
        data = Dataset(X, y)
        theta = r.normal(size=arch.parameter_count)
        prior = GaussianPrior(r.normal(size=arch.parameter_count), r.uniform(0.5, 2, arch.parameter_count))
        anchor = r.normal(size=arch.parameter_count)
        for analytic, f in (
            (grad_log_likelihood(arch, theta, data), lambda t: log_likelihood(arch, t, data)),
            (grad_anchored_loss(arch, prior, anchor, theta, data), lambda t: anchored_loss(arch, prior, anchor, t, data)),
        ):
            fd = central_differences(f, theta)
            close = relative_close(analytic, fd)
            failures += int(not np.all(close))
            rel = np.abs(analytic - fd) / np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-3)
            worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 30
    record_criterion(2, "gradient correctness", ok, f"{failures} failing configs of 100, worst rel err {worst:.1e}, {elapsed:.1f}s")
    assert ok


def test_3_guided_walk_stationarity(record_criterion):
    start = time.perf_counter()
    x = run_chain(GaussianPrior.isotropic(1), 201_000, ChainConfig(0.1, seed=1))[1000:, 0]
    elapsed = time.perf_counter() - start
    ks = stats.kstest(x, "norm").statistic
    lag1 = np.corrcoef(x[:-1], x[1:])[0, 1]
    ok = ks < 0.01 and lag1 > 0.9 and elapsed < 10
    record_criterion(3, "guided-walk stationarity", ok, f"KS {ks:.4f}, lag-1 {lag1:.4f}, {elapsed:.1f}s")
    assert ok


def test_4_linear_gaussian_equivalence(record_criterion):
    start = time.perf_counter()
    arch = MlpArchitecture((1, 1), noise_sigma=0.5)
    data = generate_synthetic("line1d", 20, 0.5, seed=11, slope=1.2, intercept=-0.4)
    prior = GaussianPrior.isotropic(2)
    X = linear_design(arch, data.inputs)
    cfg = TrainConfig(epochs=200, learning_rate=0.01, optimizer="sgd")

    anchor = np.array([0.7, -1.3])
    theta, _ = train(arch, prior, anchor, np.zeros(2), data, cfg)
    gap = float(np.max(np.abs(theta - anchored_optimum(X, data.targets, 0.5, prior, anchor))))

    ens = train_anchored_ensemble(arch, prior, data, 1000, cfg, seed=4)
    optima = ens.member_matrix()
    post = linear_posterior(X, data.targets, 0.5, prior)
    se = optima.std(axis=0, ddof=1) / np.sqrt(len(optima))
    z = np.abs(optima.mean(axis=0) - post.mean) / se
    # each member must also sit on its own closed-form optimum
    member_gap = max(
        float(np.max(np.abs(m - anchored_optimum(X, data.targets, 0.5, prior, r.anchor))))
        for m, r in zip(ens.members, ens.provenance)
    )
    elapsed = time.perf_counter() - start
    ok = gap < 1e-4 and member_gap < 1e-4 and np.all(z < 3) and elapsed < 120
    record_criterion(4, "linear-Gaussian oracle equivalence", ok,
                     f"optimum gap {gap:.1e} (max over members {member_gap:.1e}), "
                     f"mean offsets {np.round(z, 2).tolist()} SE, {elapsed:.1f}s")
    assert ok


def test_5_grid_vs_closed_form(record_criterion):
    details, ok = [], True
    for bias in (False, True):
        arch = MlpArchitecture((1, 1), noise_sigma=0.5, bias=bias)
        data = generate_synthetic("line1d", 25, 0.5, seed=5, slope=0.8, intercept=0.5)
        prior = GaussianPrior.isotropic(arch.parameter_count)
        grid = grid_posterior(arch, data, prior, 401)
        exact = linear_posterior(linear_design(arch, data.inputs), data.targets, 0.5, prior)
        mean_err = float(np.max(np.abs(grid.mean() - exact.mean)))
        var_err = float(np.max(np.abs(np.diag(grid.covariance()) / np.diag(exact.covariance) - 1)))
        ok &= mean_err < 1e-3 and var_err < 1e-2
        details.append(f"P={arch.parameter_count}: mean {mean_err:.1e}, var rel {var_err:.1e}")
    record_criterion(5, "grid/closed-form agreement", ok, "; ".join(details))
    assert ok


def test_6_warm_start_advantage(record_criterion):
    arch = MlpArchitecture((1, 8, 1), "tanh", "regression", noise_sigma=0.1)
    plan = allocate_budget(200, 1, 100, 2)
    below = total = 0
    for seed in range(5):
        data = generate_synthetic("sine1d", 40, 0.1, seed=100 + seed)
        prior = GaussianPrior.isotropic(arch.parameter_count)
        ens = train_sequential_anchored_ensemble(
            arch, prior, data, plan, TrainConfig(100, learning_rate=0.01), TrainConfig(2, learning_rate=0.01),
            ChainConfig(0.1), seed=seed,
        )
        cold = ens.provenance[0].loss_trace[0]
        firsts = [r.loss_trace[0] for r in ens.provenance[1:]]
        below += sum(f < cold for f in firsts)
        total += len(firsts)
    frac = below / total
    ok = frac >= 0.9
    record_criterion(6, "warm-start advantage", ok, f"{below}/{total} sequential members start below the cold start ({frac:.1%})")
    assert ok


BUDGETS = (200, 500, 1000, 2000)
CHAINS = {200: 1, 500: 2, 1000: 3, 2000: 4}
SEEDS = range(20)


def convergence_config():
    return ExperimentConfig.from_dict({
        "dataset": {"generator": "twoclass2d", "n": 40, "noise": 1.0, "params": {"separation": 2.0}, "seed": 7},
        "architecture": {"layer_sizes": [2, 2], "activation": "tanh", "task": "classification", "bias": False},
        "prior": {"std": 1.0},
        "initial_epochs": 100,
        "sequential_epochs": 2,
        "train": {"learning_rate": 0.05, "optimizer": "adam"},
        "oracle": {"points_per_axis": 31},
    })


@pytest.mark.slow
def test_7_posterior_convergence(record_criterion):
    start = time.perf_counter()
    base = convergence_config()
    data = build_dataset(base)
    prior = build_prior(base)
    inputs = evaluation_inputs(base, data)
    reference = compute_reference(base, data, prior, inputs)
    tv = {}
    for method in ("ae", "sae"):
        for budget in BUDGETS:
            values = []
            for seed in SEEDS:
                cfg = base.with_overrides(method=method, budget=budget, chains=CHAINS[budget], seed=seed)
                ens = train_ensemble(cfg, data, prior)
                values.append(total_variation(reference, ensemble_predictive(ens, inputs)))
            tv[method, budget] = np.array(values)
    elapsed = time.perf_counter() - start

    ok, details = elapsed < 600, []
    for method in ("ae", "sae"):
        medians = [float(np.median(tv[method, b])) for b in BUDGETS]
        rises = [b - a for a, b in zip(medians, medians[1:]) if b > a]
        monotone = len(rises) == 0 or (len(rises) == 1 and rises[0] <= 0.005)
        worst = float(tv[method, 2000].max())
        ok &= monotone and worst < 0.05
        details.append(f"{method} medians {[round(m, 4) for m in medians]} max@2000 {worst:.4f}")
    record_criterion(7, "posterior-approximation convergence", ok, "; ".join(details) + f"; {elapsed:.0f}s")
    assert ok


def brute_force_w2(a, b):
    return math.sqrt(min(np.mean((np.asarray(a) - np.asarray(p)) ** 2) for p in itertools.permutations(b)))


def test_8_metric_unit_suite(record_criterion):
    p = np.array([[0.7, 0.3], [0.2, 0.8]])
    checks = {
        "agreement identity": agreement(p, p) == 1.0,
        "agreement hand": agreement(p, [[0.9, 0.1], [0.6, 0.4]]) == 0.5,
        "tv identity": total_variation(p, p) == 0.0,
        "tv hand": abs(total_variation([[0.6, 0.4]], [[0.5, 0.5]]) - 0.1) < 1e-15,
        "tv disjoint": total_variation([[1.0, 0.0]], [[0.0, 1.0]]) == 1.0,
        "w2 identity": wasserstein2([1.0, 2.0, 3.0], [3.0, 1.0, 2.0]) == 0.0,
        "w2 hand": wasserstein2([0.0, 0.0], [1.0, 1.0]) == 1.0,
        "w2 shift": abs(wasserstein2([0.1, 0.5, -2.0], [2.6, 3.0, 0.5]) - 2.5) < 1e-12,
        "report mean": abs(regression_report([[0.0], [0.0]], [[0.1], [0.3]]) - 0.2) < 1e-15,
    }
    r = np.random.default_rng(8)
    mismatches = 0
    for size in range(1, 7):
        for _ in range(30):
            a, b = r.normal(size=size), r.normal(size=size)
            mismatches += abs(wasserstein2(a, b) - brute_force_w2(a, b)) > 1e-12
    checks["w2 permutation oracle"] = mismatches == 0
    failed = [k for k, v in checks.items() if not v]
    ok = not failed
    record_criterion(8, "metric unit suite", ok, f"{len(checks) - len(failed)}/{len(checks)} checks" + (f", failed {failed}" if failed else ""))
    assert ok


def test_9_determinism(record_criterion, tmp_path):
    cfg = ExperimentConfig.from_dict({
        "dataset": {"n": 30, "params": {"separation": 2.0}, "seed": 3},
        "evaluation": {"grid_points": 10},
        "oracle": {"points_per_axis": 21},
        "chains": 2,
        "budget": 300,
        "seed": 42,
    })
    a = run_experiment(cfg, str(tmp_path / "a"))
    b = run_experiment(cfg, str(tmp_path / "b"))
    same = {k: open(a.paths[k], "rb").read() == open(b.paths[k], "rb").read() for k in ("report", "trace", "ensemble")}
    ok = all(same.values())
    record_criterion(9, "determinism", ok, ", ".join(f"{k} {'identical' if v else 'differs'}" for k, v in same.items()))
    assert ok
