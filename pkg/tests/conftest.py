import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from meshqa.synthetic import demo_sequence, unit_cube

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def demo():
    """25-frame textured demo sequence (5 s at 5 fps)."""
    return demo_sequence(duration_s=5, fps=5, texture_size=128)


@pytest.fixture
def cube():
    return unit_cube()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --------------------------------------------------------------------------
# Acceptance report: one line per criterion, repeated in the terminal summary

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    def record(name, ok, detail="", status=None):
        status = status or ("PASS" if ok else "FAIL")
        line = f"[{status}] {name}: {detail}" if detail else f"[{status}] {name}"
        print(line)
        _ACCEPTANCE.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
