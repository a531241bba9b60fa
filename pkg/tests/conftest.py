import numpy as np
import pytest

from brakeorb import Grid1D, scalar_quartic, solve_connection, solve_pair, two_channel
from brakeorb.diagnostics import sweep_L
from brakeorb.profile1d import estimate_mu


@pytest.fixture(scope="session")
def scalar():
    return scalar_quartic()


@pytest.fixture(scope="session")
def tc():
    return two_channel()


@pytest.fixture(scope="session")
def scalar_conn(scalar):
    return solve_connection(scalar, Grid1D.from_spacing(-12.0, 12.0, 0.01))


@pytest.fixture(scope="session")
def tc_conns(tc):
    return solve_pair(tc, Grid1D.from_spacing(-10.0, 10.0, 0.1))


@pytest.fixture(scope="session")
def tc_mu(tc, tc_conns):
    return estimate_mu(tc, tc_conns[1])


@pytest.fixture(scope="session")
def strip_sweep(tc, tc_conns, tc_mu):
    """Warm-started strip minimizers for L = 20, 40, 80 (Y = 10, hx = hy = 0.1)."""
    return sweep_L(tc, tc_conns, [20.0, 40.0, 80.0], mu_hat=tc_mu.mu_hat)


@pytest.fixture(scope="session")
def strip40(strip_sweep):
    return strip_sweep.solutions[1]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def record(capsys):
    """Print and remember one PASS/FAIL line per acceptance criterion."""

    def _record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        _ACCEPTANCE[number] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
    missing = [n for n in range(1, 11) if n not in _ACCEPTANCE]
    if missing and len(_ACCEPTANCE) > 0:
        terminalreporter.write_line(f"criteria not run: {missing}")
