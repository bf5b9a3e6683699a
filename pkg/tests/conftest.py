import numpy as np
import pytest

_ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    """Log one acceptance line; printed in the terminal summary."""

    def record(number, name, passed, detail=""):
        _ACCEPTANCE.append((number, name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def relative_close(analytic, numeric, rel=1e-5, floor=1e-8):
    """Per-coordinate |a - f| <= max(rel * max(|a|, |f|), floor)."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    tol = np.maximum(rel * np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) <= tol


def central_differences(f, theta, h=1e-5):
    theta = np.asarray(theta, dtype=np.float64)
    g = np.zeros_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        g[j] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g
