"""Shared fixtures: an isolated cache directory and session-wide expensive objects."""

from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session", autouse=True)
def isolated_cache(tmp_path_factory):
    """Route every disk cache to a fresh directory so runs are reproducible."""
    from dnls_phase.free_field_thermo import CACHE_ENV

    previous = os.environ.get(CACHE_ENV)
    path = tmp_path_factory.mktemp("dnls_cache")
    os.environ[CACHE_ENV] = str(path)
    yield path
    if previous is None:
        os.environ.pop(CACHE_ENV, None)
    else:
        os.environ[CACHE_ENV] = previous


@pytest.fixture(scope="session")
def thermo3():
    from dnls_phase.free_field_thermo import ThermoFunctions

    return ThermoFunctions(3)


@pytest.fixture(scope="session")
def threshold_p3():
    from dnls_phase.soliton_solver import excitation_threshold_R_p

    return excitation_threshold_R_p(3.0, 3)


@pytest.fixture(scope="session")
def phase_model(isolated_cache):
    from dnls_phase.phase_diagram import default_model

    return default_model(3.0, 3)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collector for the one-line PASS/FAIL verdicts of the acceptance criteria."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
