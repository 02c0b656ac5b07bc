import numpy as np
import pytest

from wvcal.model import CompositeModel, ScaleGrid


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_model(rng, active):
    """Interior point with parameters spread over a few decades."""
    scales = {"QN": 1e-2, "WN": 1.0, "BI": 1e-2, "RW": 1e-5, "DR": 1e-4}
    return CompositeModel({k: scales[k] * 10 ** rng.uniform(-1, 1) for k in active})


def grid(J, T=2**16):
    return ScaleGrid.first(T, J)


# one PASS/FAIL line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def report(number: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
