import math
import os

import pytest

from stochwishart.ensemble import ExperimentGeometry, ObservableSpec
from stochwishart.entry_process import EntryProcessSpec, Family, ScalarField, TimeGrid

LN2 = math.log(2.0)


def example1(L=100):
    """(4,2) block at t=0 containing the (1,1) block read at t=1; OU with c1 = 1/2."""
    return ExperimentGeometry(
        L,
        TimeGrid((0.0, 1.0)),
        (ObservableSpec(4, 2, 1, 0), ObservableSpec(1, 1, 1, 1)),
        EntryProcessSpec(ScalarField.REAL, Family.OU, LN2),
    )


def example2(L=100, corner=False):
    """(5,2) and (3,1) blocks with p = 2; full containment unless ``corner``."""
    small = ObservableSpec(3, 1, 2, 1, row_offset=4, col_offset=1) if corner else ObservableSpec(3, 1, 2, 1)
    return ExperimentGeometry(
        L,
        TimeGrid((0.0, 1.0)),
        (ObservableSpec(5, 2, 2, 0), small),
        EntryProcessSpec(ScalarField.REAL, Family.OU, LN2),
    )


@pytest.fixture
def geom1():
    return example1(20)


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}
ACCEPTANCE_COUNT = 10


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not any("test_acceptance" in str(getattr(item, "fspath", "")) for item in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", [])):
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN (deselected or errored before recording)")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("STOCHWISHART_FULLSCALE") not in ("1", "true", "yes"):
        skip = pytest.mark.skip(reason="paper-scale run; set STOCHWISHART_FULLSCALE=1")
        for item in items:
            if "fullscale" in item.keywords:
                item.add_marker(skip)
