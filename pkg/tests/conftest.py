import numpy as np
import pytest
from hypothesis import settings

from pmp_gdth.params import default_params

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return default_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_states(rng, n, r_hi=0.1016):
    """Joint configurations spread over the stroke and all angles."""
    q = rng.uniform([0.0, -np.pi, -np.pi, -np.pi], [r_hi, np.pi, np.pi, np.pi], size=(n, 4))
    return q


CRITERIA: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
