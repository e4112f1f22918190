import numpy as np
import pytest

from trtlab.metric import ConformalMetric, Domain, EuclideanMetric


@pytest.fixture
def ball3():
    return Domain(3, 1.0, 1.5)


@pytest.fixture
def euclid3(ball3):
    return EuclideanMetric(ball3)


@pytest.fixture
def conformal3(ball3):
    return ConformalMetric(ball3, 0.1)


@pytest.fixture(params=["euclidean", "conformal"])
def metric3(request, ball3):
    if request.param == "euclidean":
        return EuclideanMetric(ball3)
    return ConformalMetric(ball3, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_sym(rng, n):
    a = rng.standard_normal((n, n))
    return a + a.T


def inward_rays(rng, count, n=3, radius=1.5, spread=0.6):
    """Points on the outer sphere with directions tilted at most ``spread`` from the inward normal."""
    x = rng.standard_normal((count, n))
    x *= radius / np.linalg.norm(x, axis=1, keepdims=True)
    nu = -x / radius
    t = rng.standard_normal((count, n))
    t -= np.sum(t * nu, axis=1, keepdims=True) * nu
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    a = rng.uniform(0, spread, count)[:, None]
    return x, np.cos(a) * nu + np.sin(a) * t


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
