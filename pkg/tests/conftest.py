import os
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from recsys_evalkit import _accel
from recsys_evalkit.data import InteractionDataset

ROOT = Path(__file__).resolve().parents[1]


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long-running tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow; pass --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


BACKENDS = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba disabled or missing")


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def _dataset_file(env, rel):
    p = os.environ.get(env)
    return Path(p) if p else ROOT / rel


@pytest.fixture(scope="session")
def ml100k_path():
    p = _dataset_file("ML100K_PATH", "data/ml-100k/u.data")
    if not p.exists():
        pytest.skip(f"ML100K not found at {p} (set ML100K_PATH)")
    return p


@pytest.fixture(scope="session")
def ml1m_path():
    p = _dataset_file("ML1M_PATH", "data/ml-1m/ratings.dat")
    if not p.exists():
        pytest.skip(f"ML1M not found at {p} (set ML1M_PATH)")
    return p


def random_binary(n_users, n_items, density, seed):
    g = np.random.default_rng(seed)
    X = (g.random((n_users, n_items)) < density).astype(np.float64)
    return sp.csr_matrix(X)


@pytest.fixture
def small_dataset():
    """60 users x 40 items with every user holding at least 6 items."""
    g = np.random.default_rng(7)
    X = (g.random((60, 40)) < 0.25).astype(float)
    for u in range(60):
        X[u, g.choice(40, 6, replace=False)] = 1.0
    return InteractionDataset.from_csr(sp.csr_matrix(X))


# acceptance criteria report one line each, collected here and printed at the end
_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    def record(name: str, ok: bool | None, detail: str = ""):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"[{status}] {name}" + (f" :: {detail}" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
