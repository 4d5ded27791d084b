
import pytest
from hypothesis import settings

from meco.model import INFINITE, Scenario, SystemParams, UserParams
from meco.scalarfn import RadioConstants

settings.register_profile("meco", max_examples=200, deadline=None, derandomize=True)
settings.load_profile("meco")

RC = RadioConstants(B=1e7, N0=1e-9)

# filled by tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def make_cell(users, T=0.1, F=INFINITE, rc=RC):
    return Scenario(SystemParams(T, rc, F), tuple(UserParams(**u) for u in users))


def user(beta=1.0, C=1000.0, P=1e-10, h2=1e-6, R=1e5, Fk=1e9):
    return dict(beta=beta, C=C, P=P, h2=h2, R=R, Fk=Fk)


@pytest.fixture
def rc():
    return RC


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
