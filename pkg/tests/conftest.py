import numpy as np
import pytest

from helicase_hmm import _accel
from helicase_hmm.simulator import synthetic_model
from helicase_hmm.verify import random_model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def model_k1():
    return synthetic_model(1, 0.2, seed=1)


@pytest.fixture
def model_k2():
    return synthetic_model(2, 0.15, seed=2)


@pytest.fixture
def model_k3():
    return synthetic_model(3, 0.1, seed=3)


@pytest.fixture
def random_k2(rng):
    return random_model(2, rng)


@pytest.fixture(params=["jit", "numpy"])
def backend(request, monkeypatch):
    """Run a test under each kernel backend."""
    if request.param == "jit" and not _accel.NUMBA_AVAILABLE:
        pytest.skip("numba not installed")
    monkeypatch.setattr(_accel, "USE_JIT", request.param == "jit")
    return request.param


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
