import sys
from pathlib import Path

import pytest
from loguru import logger

from fidbound.model.data import CountsTable, write_counts

# Vitamin A supplementation trial, cell order (a, y) = 00, 01, 10, 11 per arm
vitamin_a_arm0 = (74, 11514, 0, 0)
vitamin_a_arm1 = (34, 2385, 12, 9663)

# arm 0 entirely in cell (a, y) = (0, 0), arm 1 entirely in (0, 1): Y_0 would
# have to be both 0 and 1
infeasible_arm0 = (500, 0, 0, 0)
infeasible_arm1 = (0, 500, 0, 0)

# every proposal is feasible: complier-helped point mass reproduces any draw
always_feasible_arm0 = (200, 0, 0, 0)
always_feasible_arm1 = (0, 0, 0, 200)


@pytest.fixture(autouse=True)
def reset_logger():
    yield
    logger.remove()
    logger.add(sys.stderr, level="WARNING")


@pytest.fixture
def vitamin_a_counts() -> CountsTable:
    return CountsTable.from_arms(vitamin_a_arm0, vitamin_a_arm1)


@pytest.fixture
def infeasible_counts() -> CountsTable:
    return CountsTable.from_arms(infeasible_arm0, infeasible_arm1)


@pytest.fixture
def always_feasible_counts() -> CountsTable:
    return CountsTable.from_arms(always_feasible_arm0, always_feasible_arm1)


def write_counts_csv(directory: Path, counts: CountsTable, name: str = "counts.csv") -> Path:
    path = directory / name
    write_counts(counts, path)
    return path
