import pytest
from hypothesis import HealthCheck, settings

from gllab import scenarios, spectra

settings.register_profile("gllab", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("gllab")


@pytest.fixture(scope="session")
def square():
    return scenarios.unit_square(16)


@pytest.fixture(scope="session")
def annulus():
    return scenarios.half_flux_annulus(32)


@pytest.fixture(scope="session")
def disk():
    return scenarios.field_disk(32)


@pytest.fixture(scope="session")
def small_disk():
    return scenarios.field_disk(16)


def _spectrum(sc, k=4):
    return spectra.ground_state(spectra.assemble(sc.gauge, sc.domain), k)


@pytest.fixture(scope="session")
def annulus_spectrum(annulus):
    return _spectrum(annulus)


@pytest.fixture(scope="session")
def disk_spectrum(disk):
    return _spectrum(disk)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
