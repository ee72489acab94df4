import numpy as np
import pytest

from pearlsgd.problems import generate_quadratic_minimax, scalar_game

_ACCEPTANCE = pytest.StashKey()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion, then assert it."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(label, ok, detail=""):
        lines.append(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
        print(lines[-1])
        assert ok, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def minimax():
    return generate_quadratic_minimax(d=10, M=100, seed=7)


@pytest.fixture(scope="session")
def small_minimax():
    return generate_quadratic_minimax(d=3, M=8, seed=1)


@pytest.fixture
def noisy_scalar():
    return scalar_game(mu=1.0, coupling=1.0, shift=(1.0, -1.0), noise_std=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
