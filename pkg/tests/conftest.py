import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from selmut.geometry import DomainSpec, Quadrature, build_quadrature

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DISK = DomainSpec.disk()
SQUARE = DomainSpec.rectangle((0, 0), (1, 1))
UNIT = DomainSpec.interval(0, 1)


@pytest.fixture(scope="session")
def disk32():
    return build_quadrature(DISK, 1 / 32)


@pytest.fixture(scope="session")
def disk96():
    return build_quadrature(DISK, 1 / 96)


@pytest.fixture(scope="session")
def square64():
    return build_quadrature(SQUARE, 1 / 64)


def hand_quadrature(points, weights, h=1.0):
    """Quadrature with explicit nodes, for hand-checkable toy problems."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 1 and len(weights) > 1:
        pts = pts.T
    n, dim = pts.shape
    dom = DomainSpec.interval(0, n) if dim == 1 else DomainSpec.rectangle((0, 0), (n, n))
    idx = np.arange(n).reshape(n, 1) if dim == 1 else np.stack([np.arange(n), np.zeros(n, int)], axis=1)
    shape = (n,) if dim == 1 else (n, 1)
    return Quadrature(pts, np.asarray(weights, dtype=float), h, dom, idx, shape, np.zeros(dim))


def pytest_terminal_summary(terminalreporter):
    try:
        from tests.test_acceptance import LINES
    except ImportError:  # pragma: no cover
        try:
            from test_acceptance import LINES
        except ImportError:
            return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
