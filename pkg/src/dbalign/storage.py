"""
Module implements the file formats: databases, ground truth and alignments as CSV, records as JSON lines.

Files carry 1-based indices; everything in memory is 0-based.
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import os
import csv
import json
import logging
import tempfile
import contextlib

import numpy as np

from dbalign.errors import DataFormatError
from dbalign.recovery import PartialAlignment

if TYPE_CHECKING:
    from typing import Iterator, List, Iterable, Dict, Any, TextIO, Tuple, Sequence

LOG: logging.Logger = logging.getLogger("dbalign.storage")


@contextlib.contextmanager
def atomic_write(path: str) -> Iterator[TextIO]:
    """
    Opens a temporary file next to path for writing and renames it onto path on success.

    An interrupted write leaves any previous file untouched and never a truncated one.
    """
    directory = os.path.dirname(os.path.abspath(path))
    handle = tempfile.NamedTemporaryFile('w', encoding='utf-8', newline='', dir=directory, prefix='.dbalign-', suffix='.tmp',
                                         delete=False)
    try:
        with handle:
            yield handle
        os.replace(handle.name, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(handle.name)
        raise
    LOG.debug('wrote %s', path)


def _rows(path: str) -> Iterator[Tuple[int, List[str]]]:
    try:
        with open(path, encoding='utf-8', newline='') as csv_file:
            for line, row in enumerate(csv.reader(csv_file), start=1):
                if not row or all(cell.strip() == '' for cell in row):
                    continue
                yield line, row
    except UnicodeDecodeError as err:
        raise DataFormatError(f'file is not UTF-8 text: {err}', path) from err


def read_database(path: str) -> np.ndarray:
    """
    Reads a database: one row per line, d comma-separated decimal numbers.

    Raises:
        DataFormatError: On a non-numeric cell, a non-finite value, a row with a different
            column count or an empty file. The error names the 1-based line.
        FileNotFoundError: If the file does not exist.
    """
    values: List[List[float]] = []
    width = None
    for line, row in _rows(path):
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataFormatError(f'expected {width} columns, found {len(row)}', path, line)
        try:
            parsed = [float(cell) for cell in row]
        except ValueError as err:
            raise DataFormatError(f'non-numeric cell: {err}', path, line) from err
        if not all(np.isfinite(parsed)):
            raise DataFormatError('non-finite value', path, line)
        values.append(parsed)
    if not values:
        raise DataFormatError('database is empty', path)
    return np.array(values, dtype=np.float64)


def write_database(path: str, matrix: np.ndarray) -> None:
    """
    Writes a database with the shortest decimal representation that reads back to the same doubles.
    """
    with atomic_write(path) as sink:
        writer = csv.writer(sink, lineterminator='\n')
        for row in np.asarray(matrix, dtype=np.float64):
            writer.writerow([repr(float(value)) for value in row])


def _read_index_pairs(path: str) -> List[Tuple[int, int, int]]:
    pairs: List[Tuple[int, int, int]] = []
    for line, row in _rows(path):
        if len(row) != 2:
            raise DataFormatError(f'expected 2 columns, found {len(row)}', path, line)
        try:
            first, second = int(row[0]), int(row[1])
        except ValueError as err:
            raise DataFormatError(f'non-integer index: {err}', path, line) from err
        if first < 1 or second < 1:
            raise DataFormatError('indices are 1-based', path, line)
        pairs.append((line, first - 1, second - 1))
    return pairs


def read_truth(path: str, n: int) -> np.ndarray:
    """
    Reads a truth file of n lines "i,sigma_i" (1-based) and returns the 0-based sigma.

    Raises:
        DataFormatError: If the lines do not describe a permutation of n elements.
    """
    sigma = np.full(n, -1, dtype=np.int64)
    for line, row, column in _read_index_pairs(path):
        if row >= n or column >= n:
            raise DataFormatError(f'index exceeds n={n}', path, line)
        if sigma[row] >= 0:
            raise DataFormatError(f'row {row + 1} appears twice', path, line)
        sigma[row] = column
    if np.any(sigma < 0) or not np.array_equal(np.sort(sigma), np.arange(n)):
        raise DataFormatError(f'truth is not a permutation of {n} elements', path)
    return sigma


def write_truth(path: str, sigma: Sequence[int]) -> None:
    """
    Writes sigma as n lines "i,sigma_i" (1-based).
    """
    with atomic_write(path) as sink:
        writer = csv.writer(sink, lineterminator='\n')
        for row, column in enumerate(sigma):
            writer.writerow([row + 1, int(column) + 1])


def write_alignment(path: str, alignment: PartialAlignment) -> None:
    """
    Writes an alignment as lines "i,j" (1-based), sorted by row. An empty alignment gives an empty file.
    """
    with atomic_write(path) as sink:
        write_alignment_to(sink, alignment)


def write_alignment_to(sink: TextIO, alignment: PartialAlignment) -> None:
    """
    Writes the lines of an alignment to an open text stream.
    """
    writer = csv.writer(sink, lineterminator='\n')
    for row, column in alignment.pairs:
        writer.writerow([row + 1, column + 1])


def read_alignment(path: str, n: int) -> PartialAlignment:
    """
    Reads an alignment file written by write_alignment.

    Raises:
        DataFormatError: If an index exceeds n or a row or column repeats.
    """
    pairs: List[Tuple[int, int]] = []
    for line, row, column in _read_index_pairs(path):
        if row >= n or column >= n:
            raise DataFormatError(f'index exceeds n={n}', path, line)
        pairs.append((row, column))
    try:
        return PartialAlignment(n=n, pairs=tuple(pairs))
    except ValueError as err:
        raise DataFormatError(str(err), path) from err


def json_ready(record: Dict[str, Any]) -> Dict[str, Any]:
    """
    Converts numpy scalars and non-finite floats of a record into JSON values.
    """
    ready: Dict[str, Any] = {}
    for key, value in record.items():
        if isinstance(value, np.generic):
            value = value.item()
        if isinstance(value, float) and not np.isfinite(value):
            value = str(value)
        ready[key] = value
    return ready


def write_json_lines(sink: TextIO, records: Iterable[Dict[str, Any]]) -> None:
    """
    Writes one compact JSON object per line.
    """
    for record in records:
        sink.write(json.dumps(json_ready(record), sort_keys=False) + '\n')
