import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from thermopatch.gibbs import GIBBS_CACHE

settings.register_profile(
    "thermopatch",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("thermopatch")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True, scope="module")
def _fresh_cache():
    yield
    GIBBS_CACHE.clear()


def random_density(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (g + g.conj().T) / 2


def ghz(n):
    psi = np.zeros(2**n)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return np.outer(psi, psi)


def pytest_terminal_summary(terminalreporter):
    from thermopatch.gibbs import CMI_STATS

    ok = CMI_STATS.min_raw >= -1e-9
    terminalreporter.write_line(
        f"{'PASS' if ok else 'FAIL'} criterion 5 (suite-wide strong subadditivity): "
        f"min raw CMI {CMI_STATS.min_raw:.3e} over {CMI_STATS.count} evaluations"
    )


def pytest_sessionfinish(session, exitstatus):
    from thermopatch.gibbs import CMI_STATS

    if CMI_STATS.min_raw < -1e-9 and exitstatus == 0:
        session.exitstatus = 1
