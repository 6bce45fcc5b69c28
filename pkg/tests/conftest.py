import re

import numpy as np
import pytest

from sonig import Hyperparameters, InducingSet, SonigModel, online_update


def make_trained_1d(n=40, seed=3, sigma_n_sq=0.01, sigma_x=0.0):
    """Single-output model trained with deterministic updates on sin(x)."""
    rng = np.random.default_rng(seed)
    hyp = Hyperparameters(1.0, [1.0], sigma_n_sq, [sigma_x])
    ind = InducingSet(np.linspace(-3, 3, 7)[:, None], hyp)
    for x in rng.uniform(-3, 3, n):
        ind = online_update(ind, [x], np.sin(x) + 0.1 * rng.standard_normal(), sigma_n_sq)
    return SonigModel([ind])


def make_trained_2d(n=30, seed=5, n_u=6):
    rng = np.random.default_rng(seed)
    hyp = Hyperparameters(1.3, [0.8, 1.5], 0.02, [0.05, 0.02])
    ind = InducingSet(rng.uniform(-2, 2, (n_u, 2)), hyp)
    for x in rng.uniform(-2, 2, (n, 2)):
        ind = online_update(ind, x, np.sin(x[0]) * np.cos(x[1]), hyp.sigma_n_sq)
    return ind


@pytest.fixture
def trained_1d():
    return make_trained_1d()


@pytest.fixture
def trained_2d():
    return make_trained_2d()


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(number, name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number} ({name}): {detail}"
        print(line)
        lines.append((str(number), line))
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: (int(re.match(r"\d+", t[0]).group()), t[0])):
            terminalreporter.write_line(line)
