import numpy as np
import pytest

from ngp.data import Dataset, split


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_linear_split(J=120, P=5, coef=None, noise=0.0, seed=0, fractions=(0.5, 0.5)):
    """Noiseless (by default) linear data t = X @ coef, split in two halves."""
    g = np.random.default_rng(seed)
    X = g.standard_normal((J, P))
    if coef is None:
        coef = np.zeros(P)
        coef[0] = 1.0
    t = X @ np.asarray(coef, dtype=float) + noise * g.standard_normal(J)
    data = Dataset(X, t, true_support=frozenset(np.flatnonzero(coef)))
    return split(data, fractions, seed)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
