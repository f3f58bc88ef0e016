import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from jumpscale.coefficients import OhmicParams

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# parameter sets of the two reference runs
LINDBLAD = OhmicParams(theta_bar=1.2e-6, g_bar=0.5e-8, r=10.0)
NON_LINDBLAD = OhmicParams(theta_bar=2.4e-6, g_bar=0.5e-8, r=0.1)


@pytest.fixture
def lindblad_params():
    return LINDBLAD


@pytest.fixture
def non_lindblad_params():
    return NON_LINDBLAD


def basis(n, n_max):
    v = np.zeros(n_max + 1, dtype=complex)
    v[n] = 1.0
    return v


# acceptance verdicts, printed together at the end of the session
VERDICTS = {}


def record_verdict(number: int, ok: bool, detail: str):
    VERDICTS[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        ok, detail = VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
