"""Shared fixtures.

The expensive objects (the order-200 series, its Pade table and the desk
grids) are built once per session.  Set ``RESURGENCE_CACHE_DIR`` to reuse the
series and Pade caches across runs; by default everything is computed from
scratch in a temporary directory.
"""

from __future__ import annotations

import os
from pathlib import Path

import pytest

from resurgence.analysis import log_grid
from resurgence.borel import ContourSpec, inverse_borel
from resurgence.cli import get_pade, get_series
from resurgence.fock import converged_fock_energy

BOREL_DIGITS = 80
FOCK_DIGITS = 64

_criteria: dict[int, list[str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    _criteria.setdefault(number, []).append(f"{'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        lines = _criteria[n]
        status = "PASS" if all(x.startswith("PASS") for x in lines) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}")
        for line in lines:
            terminalreporter.write_line(f"    {line}")


@pytest.fixture(scope="session")
def cache(tmp_path_factory) -> Path:
    env = os.environ.get("RESURGENCE_CACHE_DIR")
    return Path(env) if env else tmp_path_factory.mktemp("cache")


@pytest.fixture(scope="session")
def series200(cache):
    return get_series(200, cache)[0]


@pytest.fixture(scope="session")
def pade200(cache, series200):
    return get_pade(200, cache)


@pytest.fixture(scope="session")
def pade100(cache, series200):
    return get_pade(100, cache)


@pytest.fixture(scope="session")
def desk_grid():
    return log_grid("0.005", "0.05", 12)


@pytest.fixture(scope="session")
def desk_borel(pade200, desk_grid):
    contour = ContourSpec.for_branch("upper")
    return {g: inverse_borel(pade200, g, contour, BOREL_DIGITS) for g in desk_grid}


@pytest.fixture(scope="session")
def desk_fock(desk_grid):
    return {g: converged_fock_energy(g, FOCK_DIGITS, M_start=100) for g in desk_grid}


@pytest.fixture(scope="session")
def extraction_grid():
    return log_grid("0.005", "0.015", 24)


@pytest.fixture(scope="session")
def extraction_borel(pade200, extraction_grid):
    contour = ContourSpec.for_branch("upper")
    return {g: inverse_borel(pade200, g, contour, BOREL_DIGITS) for g in extraction_grid}
