"""Shared pytest setup: single-threaded BLAS, warm kernels, acceptance log."""

import os

# The acceptance runtime budgets are single-threaded numbers, so the pools
# must be pinned before numpy first loads (conftest runs ahead of every
# test module, making this the one reliable place).
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import pytest

from ridgerisk import _kernels

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # Compile the jit kernels up front so no timed test pays for it.
    _kernels.warmup()
    yield


@pytest.fixture(scope="session")
def record_criterion():
    """Collector for the one-line-per-criterion acceptance verdicts."""

    def _record(index: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE_LINES.append(
            f"criterion {index:2d}: {'PASS' if passed else 'FAIL'} - {detail}"
        )
        return passed

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
