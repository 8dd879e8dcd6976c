import numpy as np
import pytest

from hacsim.analysis import solve_equilibrium
from hacsim.controller import HacParams
from hacsim.plant import CoiParams, InfiniteBus, PlantParams


@pytest.fixture(scope="session")
def pp():
    return PlantParams.table1()


@pytest.fixture(scope="session")
def hp(pp):
    return HacParams.table1(pp)


@pytest.fixture(scope="session")
def cp(pp):
    return CoiParams.table1(pp)


@pytest.fixture(scope="session")
def eq_ib(pp, hp):
    return solve_equilibrium(pp, hp, InfiniteBus())


@pytest.fixture(scope="session")
def eq_coi(pp, hp, cp):
    return solve_equilibrium(pp, hp, cp)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line, then assert it."""
    log = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(label, ok, detail, informational=False):
        tag = "INFO" if informational else ("PASS" if ok else "FAIL")
        log.append(f"{label}: {tag}  {detail}")
        if not informational:
            assert ok, f"{label}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (int(s.split()[1].rstrip(":").split("-")[0])
                                                 if s.startswith("criterion") else 99, s)):
            terminalreporter.write_line(line)
