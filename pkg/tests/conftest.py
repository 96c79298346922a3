"""Session-scoped simulation results reused across test modules."""
import numpy as np
import pytest

from scenarios import ALPHA, GAMMA_76US, IDEAL, PI_COUPLINGS, PULSE, T_S_16US, UNITS
from sslsim.model import MediumParams
from sslsim.protocols import SimConfig, interferometer_delta_scan, interferometer_time_scan


@pytest.fixture(scope="session")
def fig3a_scan():
    cfg = SimConfig(IDEAL, PI_COUPLINGS, PULSE)
    return interferometer_delta_scan(T_S_16US, np.arange(-18, 19) * 0.0005, cfg)


@pytest.fixture(scope="session")
def time_scans():
    """Clean storage-time scans at 2 pi x 10 and 2 pi x 20 kHz with a 76 us energy decay."""
    cfg = SimConfig(MediumParams(ALPHA, GAMMA_76US, GAMMA_76US), PI_COUPLINGS, PULSE)
    ts = UNITS.time_from_us(np.linspace(5.0, 105.0, 41))
    out = {}
    for f in (10.0, 20.0):
        out[f] = interferometer_time_scan(UNITS.freq_from_kHz(f), ts, cfg, fit=False)
    return out


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion and return the verdict."""
    def _report(crit, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {crit}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0].rstrip("ab"))):
            terminalreporter.write_line(line)
