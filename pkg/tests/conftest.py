import numpy as np
import pytest

from whittle_kit.arm import Arm, random_arm
from whittle_kit.experiments import load_fixture


@pytest.fixture
def identical_arm():
    return load_fixture("identical_dynamics")


@pytest.fixture
def restart_arm():
    return load_fixture("restart5")


@pytest.fixture
def non_indexable_arm():
    return load_fixture("non_indexable4")


@pytest.fixture
def rng():
    return np.random.default_rng(20241019)


def two_state(a=0.3, b=0.6, r0=(0.0, 1.0), r1=(1.0, 0.5), discount=None):
    P = [[1 - a, a], [b, 1 - b]]
    return Arm(2, P, P, r0, r1, discount)


def random_arms(count, seed, sizes=range(3, 9), discounted=None):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        S = int(rng.choice(list(sizes)))
        flag = bool(i % 2) if discounted is None else discounted
        disc = 0.9 if flag else None
        out.append(random_arm(rng, S, disc))
    return out


# one line per acceptance criterion, printed after the run
CRITERIA: dict[int, tuple[bool, str]] = {}


def report(number: int, ok: bool, detail: str) -> bool:
    CRITERIA[number] = (bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
