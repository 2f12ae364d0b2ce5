import time

import numpy as np
import pytest

from passage_time import histories, shutter, verify
from passage_time.units import barrier_from_config, reference_barrier

_ACCEPTANCE = []


def record_acceptance(label, passed, detail):
    _ACCEPTANCE.append((label, bool(passed), detail))


@pytest.fixture(scope="session")
def record():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")


@pytest.fixture(scope="session")
def barrier():
    return reference_barrier()


@pytest.fixture(scope="session")
def poles(barrier):
    return shutter.cached_poles(barrier, 400)


@pytest.fixture(scope="session")
def default_grid(barrier):
    return verify.default_grid(barrier)


@pytest.fixture(scope="session")
def reference_report(barrier, default_grid):
    """Equivalence report on the default 2000-point grid and its cold wall time."""
    shutter._POLE_CACHE.clear()
    start = time.perf_counter()
    rep = verify.equivalence_report(barrier, default_grid)
    return rep, time.perf_counter() - start


OFF_REFERENCE = [(0.3, 5.0, 0.067, 0.1), (0.5, 8.0, 0.067, 0.25), (0.2, 6.0, 0.1, 0.3)]


@pytest.fixture(scope="session")
def off_reports():
    """Equivalence reports on the default grid for three barriers unlike the reference one."""
    out = []
    for params in OFF_REFERENCE:
        b = barrier_from_config(*params)
        out.append(verify.equivalence_report(b, verify.default_grid(b)))
    return out


@pytest.fixture(scope="session")
def coarse_grid(barrier):
    return np.linspace(0.05, 10.0, 40) * barrier.t_f


@pytest.fixture(scope="session")
def coarse_pole_curve(barrier, coarse_grid):
    return shutter.psi_curve(barrier.d, coarse_grid, barrier)


@pytest.fixture(scope="session")
def coarse_gp_curve(barrier, coarse_grid):
    return histories.gp_curve(coarse_grid, barrier)
