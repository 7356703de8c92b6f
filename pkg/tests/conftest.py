import math

import pytest

from renewal_ldp import (
    Constant,
    Deterministic,
    DiscreteJoint,
    Exponential,
    IndependentProduct,
    Uniform,
    fixture_path,
    load_model,
)

TWO_ATOM = [((1.0, 0.0), 0.5), ((1.0, 2.0), 0.5)]
THREE_ATOM = [((0.5, -1.0), 0.3), ((1.0, 1.0), 0.5), ((2.0, 3.0), 0.2)]
FOUR_ATOM = [((0.5, -1.0), 0.25), ((1.0, 0.5), 0.25), ((1.5, 2.0), 0.25), ((3.0, 4.0), 0.25)]


def poisson_rate(m: float) -> float:
    """Closed form ``1 - m + m log m`` (``inf`` for ``m < 0``, ``1`` at ``0``)."""
    if m < 0:
        return math.inf
    if m == 0:
        return 1.0
    return 1.0 - m + m * math.log(m)


@pytest.fixture
def poisson():
    return IndependentProduct(Exponential(1.0), Constant(1.0))


@pytest.fixture
def exp_exp():
    return IndependentProduct(Exponential(1.0), Exponential(1.0))


@pytest.fixture
def two_atom():
    return DiscreteJoint(TWO_ATOM)


@pytest.fixture
def three_atom():
    return DiscreteJoint(THREE_ATOM)


@pytest.fixture
def four_atom():
    return DiscreteJoint(FOUR_ATOM)


@pytest.fixture
def det_model():
    return IndependentProduct(Deterministic(1.0), Constant(2.0))


@pytest.fixture
def bounded():
    return IndependentProduct(Deterministic(2.0), Uniform(0.0, 1.0))


@pytest.fixture
def shipped():
    return lambda name: load_model(fixture_path(name))


# ---------------------------------------------------------------------------
# acceptance summary: one pass/fail line per criterion at the end of the run
# ---------------------------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, ok, detail)``; lines are printed in the terminal summary."""
    log = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        log.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
