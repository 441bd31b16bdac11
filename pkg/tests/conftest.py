import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("rydeff", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("rydeff")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hermitian(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return a + a.conj().T


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion and echo it immediately."""
    lines = request.config.__dict__.setdefault("_rydeff_acceptance", {})
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[str(criterion)] = line
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get("_rydeff_acceptance")
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=lambda k: (len(k), k)):
            terminalreporter.write_line(lines[key])
