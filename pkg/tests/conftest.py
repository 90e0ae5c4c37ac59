import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_operator(rng, dim, lo=-2.0, hi=2.0):
    return rng.uniform(lo, hi, (dim, dim))


def q_operator(rng, dim):
    """Random operator with every eigenvalue real part in about [0.5, 3]."""
    a = rng.uniform(-0.5, 0.5, (dim, dim))
    shift = 0.5 + max(0.0, -np.linalg.eigvals(a).real.min())
    return a + (shift + rng.uniform(0, 2)) * np.eye(dim)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Criterion number -> (title, passed, detail); printed in the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"C{n:<2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
