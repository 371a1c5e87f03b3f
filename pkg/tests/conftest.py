import numpy as np
import pytest

from malpipe.data import Dataset


def make_dataset(X, y=None, row_ids=None):
    return Dataset.from_arrays(np.asarray(X, dtype=np.float32), None if y is None else np.asarray(y), row_ids)


def blobs(n=400, d=6, seed=0, informative=2):
    """Two Gaussian classes separated along the first ``informative`` columns."""
    rng = np.random.default_rng(seed)
    y = np.r_[np.zeros(n // 2), np.ones(n - n // 2)].astype(np.int8)
    X = rng.normal(size=(n, d))
    X[:, :informative] += 2.0 * (2 * y[:, None] - 1)
    return make_dataset(X, y)


@pytest.fixture
def small_blobs():
    return blobs()


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p

    return _write


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
