import numpy as np
import pytest

from floquet_bbc.evolution import evolve, restrict_half_space
from floquet_bbc.lattice import LatticeGeometry
from floquet_bbc.models import ChalkerCoddington, DrivenQWZ, build_protocol

BETA_TRIVIAL = np.pi / 8
BETA_ANOMALOUS = 3 * np.pi / 8


def haar_unitary(n, rng):
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_hopping(g, reach, rng):
    """Random operator whose elements vanish beyond ``reach`` along every axis."""
    n = g.dim
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    for j in range(1, g.dimension + 1):
        m = np.where(np.abs(g.displacement(j)) <= reach, m, 0)
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def cc_small():
    """Clean CC walk in the anomalous regime on a 10 x 10 torus with a 10 x 20 cylinder."""
    spec = ChalkerCoddington(BETA_ANOMALOUS)
    bulk = evolve(build_protocol(spec, LatticeGeometry.torus((10, 10), 2)))
    edge = evolve(restrict_half_space(build_protocol(spec, LatticeGeometry.torus((10, 20), 2))))
    return bulk, edge


@pytest.fixture(scope="session")
def qwz_small():
    spec = DrivenQWZ(1.0)
    bulk = evolve(build_protocol(spec, LatticeGeometry.torus((10, 10), 2)))
    edge = evolve(restrict_half_space(build_protocol(spec, LatticeGeometry.torus((10, 20), 2))))
    return bulk, edge


# --- acceptance reporting ------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): literal acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    measured = "; ".join(v for k, v in item.user_properties if k == "measured")
    _CRITERIA[mark.args[0]] = (mark.args[1], "PASS" if rep.passed else "FAIL", measured)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status, measured = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}" + (f"  [{measured}]" if measured else ""))
