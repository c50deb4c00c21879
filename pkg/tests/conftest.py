import numpy as np
import pytest

from gfi.core import Dataset


class ConstantModel:
    """Predicts one value for every row, any width."""

    n_features = None

    def __init__(self, value=0.0):
        self.value = float(value)

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], self.value)


class LinearStub:
    """Fixed linear function of the columns, ``b0 + X @ beta``."""

    def __init__(self, beta, b0=0.0):
        self.beta = np.asarray(beta, dtype=float)
        self.b0 = float(b0)
        self.n_features = len(self.beta)

    def predict(self, X):
        return self.b0 + np.asarray(X, dtype=float) @ self.beta


class CountingModel:
    """Wraps a model and counts predicted rows and calls."""

    def __init__(self, inner):
        self.inner = inner
        self.n_features = getattr(inner, "n_features", None)
        self.rows = 0
        self.calls = 0

    def predict(self, X):
        self.rows += np.asarray(X).shape[0]
        self.calls += 1
        return self.inner.predict(X)


@pytest.fixture
def linear_data():
    rng = np.random.default_rng(11)
    n = 400
    X = rng.standard_normal((n, 3))
    y = 2.0 * X[:, 0] + rng.standard_normal(n)
    return Dataset(X, ["a", "b", "c"], y)


def make_dataset(X, y=None, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or [f"x{j + 1}" for j in range(X.shape[1])]
    y = np.zeros(X.shape[0]) if y is None else np.asarray(y, dtype=float)
    return Dataset(X, names, y)


#: acceptance verdicts, filled by tests/test_acceptance.py as criteria run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
