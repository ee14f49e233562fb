import numpy as np
import pytest
from hypothesis import settings

from katolab.coefficients import GeneratorSpec, generate
from katolab.lattice import GridSpec
from katolab.operator import ParabolicOperator

settings.register_profile("katolab", deadline=None, max_examples=25)
settings.load_profile("katolab")

# acceptance outcomes per criterion, summarized as one line each at the end of the run
CRITERIA: dict[int, list[tuple[bool, str]]] = {}


def record(k: int, ok: bool, detail: str) -> None:
    CRITERIA.setdefault(k, []).append((bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        rows = CRITERIA[k]
        bad = [d for ok, d in rows if not ok]
        verdict = "PASS" if not bad else "FAIL"
        shown = "; ".join(bad) if bad else "; ".join(d for _, d in rows)
        terminalreporter.write_line(f"CRITERION {k}: {verdict} ({len(rows) - len(bad)}/{len(rows)}) {shown}")


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(n=2, Nx=8, Nt=8)


@pytest.fixture(scope="session")
def grid16():
    return GridSpec(n=2, Nx=16, Nt=16)


def make_op(grid, family="identity", magnitude=0.0, adjoint=False, **extra):
    return ParabolicOperator(generate(GeneratorSpec(family, magnitude, extra=extra), grid), adjoint=adjoint)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
