import numpy as np
import pytest

from splitpoint.delaymodel import TrainingConfig
from splitpoint.netprofile import build_profile, random_architecture, reference_architecture
from splitpoint.ocla import offline_phase

DK = 9992


@pytest.fixture(scope="session")
def arch():
    return reference_architecture()


@pytest.fixture(scope="session")
def profile(arch):
    return build_profile(arch)


@pytest.fixture(scope="session")
def offline(profile):
    return offline_phase(profile, DK)


@pytest.fixture(scope="session")
def table(offline):
    return offline.table


@pytest.fixture
def cfg():
    return TrainingConfig(dataset_size=DK, batch_size=100)


@pytest.fixture(scope="session")
def synthetic_profiles():
    rng = np.random.default_rng(20240611)
    out = []
    for _ in range(50):
        arch = random_architecture(rng, int(rng.integers(3, 16)))
        out.append(build_profile(arch))
    return out


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion; printed at the end of the run."""
    state = {"name": request.node.name, "detail": ""}

    def note(detail):
        state["detail"] = detail

    yield note
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {state['name']}  {state['detail']}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
