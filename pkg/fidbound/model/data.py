from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np
import pandas as pd
from loguru import logger

from fidbound.errors import DataError, EmptyData, MalformedRow, MissingArm
from fidbound.model.strata import CELLS, ObservableDist, cell_index

RECORD_COLUMNS = ["z", "a", "y"]
COUNT_COLUMNS = ["z", "a", "y", "count"]


@dataclass(frozen=True)
class TrialRecord:
    z: int
    a: int
    y: int

    def __post_init__(self):
        for name in ("z", "a", "y"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(
                    f"TrialRecord.{name} must be 0 or 1, got {getattr(self, name)!r}"
                )


@dataclass(frozen=True, eq=False)
class RecordBatch(Sequence):
    """Column-oriented records, e.g. a simulated dataset.

    Behaves as a sequence of TrialRecord while keeping the columns as
    int8 arrays so that large datasets stay cheap to tally.
    """

    z: np.ndarray
    a: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        columns = [np.asarray(getattr(self, name), dtype=np.int8) for name in "zay"]
        assert len({len(c) for c in columns}) == 1, "Columns must have equal length."
        for name, column in zip("zay", columns):
            if column.size and (column.min() < 0 or column.max() > 1):
                raise ValueError(f"Column {name} must only contain 0/1 values.")
            column.flags.writeable = False
            object.__setattr__(self, name, column)

    def __len__(self) -> int:
        return len(self.z)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return RecordBatch(self.z[index], self.a[index], self.y[index])
        return TrialRecord(int(self.z[index]), int(self.a[index]), int(self.y[index]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"z": self.z, "a": self.a, "y": self.y})


@dataclass(frozen=True, eq=False)
class CountsTable:
    """Observed cell counts n[z][a][y] of the two independent multinomials."""

    n: np.ndarray

    def __post_init__(self):
        n = np.array(self.n, dtype=np.int64).reshape(2, 2, 2)
        if np.any(n < 0):
            raise ValueError(f"Counts must be nonnegative: {n.ravel().tolist()}")
        n.flags.writeable = False
        object.__setattr__(self, "n", n)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CountsTable) and np.array_equal(self.n, other.n)

    __hash__ = None

    def __getitem__(self, cell: tuple[int, int, int]) -> int:
        return int(self.n[cell])

    @property
    def n_z(self) -> tuple[int, int]:
        return int(self.n[0].sum()), int(self.n[1].sum())

    @property
    def total(self) -> int:
        return int(self.n.sum())

    def arm(self, z: int) -> np.ndarray:
        """Counts (n_z00, n_z01, n_z10, n_z11) of one instrument arm."""
        return self.n[z].reshape(4)

    def require_both_arms(self):
        for z, size in enumerate(self.n_z):
            if size == 0:
                raise MissingArm(z)

    @staticmethod
    def from_arms(arm0: Sequence[int], arm1: Sequence[int]) -> CountsTable:
        return CountsTable(np.array([arm0, arm1]).reshape(2, 2, 2))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(z, a, y, int(self.n[z, a, y])) for z, a, y in CELLS],
            columns=COUNT_COLUMNS,
        )


def summarize(records: Iterable[TrialRecord]) -> CountsTable:
    """Tally records into the 2x2x2 table of cell counts.

    Raises:
        EmptyData: if there are no records.
        MissingArm: if either instrument arm has no records.
    """
    if isinstance(records, RecordBatch):
        flat = 4 * records.z.astype(np.int64) + 2 * records.a + records.y
        n = np.bincount(flat, minlength=8)
    else:
        n = np.zeros(8, dtype=np.int64)
        for record in records:
            n[cell_index(record.z, record.a, record.y)] += 1

    if n.sum() == 0:
        raise EmptyData("No records to summarize.")

    counts = CountsTable(n)
    counts.require_both_arms()
    logger.debug(f"Summarized {counts.total} records, arm sizes {counts.n_z}")
    return counts


def empirical_proportions(counts: CountsTable) -> ObservableDist:
    """Plug-in q_hat[z][a][y] = n[z][a][y] / n_z, normalized within each arm."""
    counts.require_both_arms()
    n = counts.n.astype(float)
    q = n / n.sum(axis=(1, 2), keepdims=True)
    return ObservableDist(q / q.sum(axis=(1, 2), keepdims=True))


def _parse_binary(value: str, column: str, row: int) -> int:
    value = value.strip()
    if value not in ("0", "1"):
        raise MalformedRow(row, f"column '{column}' must be 0 or 1, got {value!r}")
    return int(value)


def _parse_count(value: str, row: int) -> int:
    value = value.strip()
    if not value.isdigit():
        raise MalformedRow(row, f"count must be a nonnegative integer, got {value!r}")
    return int(value)


def load_counts(path: Path | TextIO) -> CountsTable:
    """Load data from a CSV file, either records or pre-aggregated counts.

    The format is detected from the header: `z,a,y` means one record per row,
    `z,a,y,count` means one cell per row. Row numbers in error messages are
    1-based data rows (the header is not counted).

    Raises:
        MalformedRow: for any value outside {0, 1}, negative or non-integer
            counts, missing fields, or duplicated cells.
        EmptyData, MissingArm: as in `summarize`.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyData(f"{path} is empty.") from None
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: cannot parse CSV ({e})") from None

    columns = [c.strip().lower() for c in frame.columns]
    logger.debug(f"Loading {path} with columns {columns} and {len(frame)} rows")

    if columns == RECORD_COLUMNS:
        n = np.zeros(8, dtype=np.int64)
        for row, values in enumerate(frame.itertuples(index=False), start=1):
            z, a, y = (_parse_binary(v, c, row) for v, c in zip(values, RECORD_COLUMNS))
            n[cell_index(z, a, y)] += 1
    elif columns == COUNT_COLUMNS:
        n = np.zeros(8, dtype=np.int64)
        seen: set[int] = set()
        for row, values in enumerate(frame.itertuples(index=False), start=1):
            z, a, y = (_parse_binary(v, c, row) for v, c in zip(values[:3], COUNT_COLUMNS))
            cell = cell_index(z, a, y)
            if cell in seen:
                raise MalformedRow(row, f"cell (z={z}, a={a}, y={y}) appears twice")
            seen.add(cell)
            n[cell] = _parse_count(values[3], row)
    else:
        raise DataError(
            f"{path}: header must be 'z,a,y' (records) or 'z,a,y,count' (counts), "
            f"got '{','.join(frame.columns)}'"
        )

    if n.sum() == 0:
        raise EmptyData(f"{path} contains no records.")
    counts = CountsTable(n)
    counts.require_both_arms()
    return counts


def write_records(records: RecordBatch, path_or_buffer) -> None:
    records.to_frame().to_csv(path_or_buffer, index=False, lineterminator="\n")


def write_counts(counts: CountsTable, path_or_buffer) -> None:
    counts.to_frame().to_csv(path_or_buffer, index=False, lineterminator="\n")
