"""
Module implements the alignment estimators working on a score table.

Indices are 0-based here; the storage module converts to the 1-based indices of the files.
"""
from __future__ import annotations
from typing import TYPE_CHECKING, NamedTuple

import math
import logging
import itertools
from enum import Enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from dbalign.errors import ParameterError, OracleLimitError
from dbalign.model import ScoreTable

if TYPE_CHECKING:
    from typing import Tuple, Iterable, Optional

LOG: logging.Logger = logging.getLogger("dbalign.recovery")

BRUTE_FORCE_MAX_N: int = 8


class Algorithm(Enum):
    """
    Available recovery algorithms.

    Attributes:
        TC: Threshold-and-Clean partial recovery.
        ML: Maximum likelihood full recovery with the Hungarian algorithm.
        MP: Maximum-Path partial recovery, the top fraction of the ML assignment.
        TWO_STAGE: Threshold-and-Clean followed by the Hungarian algorithm on the residual table.
    """
    TC = 'tc'
    ML = 'ml'
    MP = 'mp'
    TWO_STAGE = 'two-stage'

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class PartialAlignment:
    """
    A member of L_n: pairs (row, column) with all rows distinct and all columns distinct.

    Attributes:
        n (int): Size of the databases.
        pairs (Tuple[Tuple[int, int], ...]): 0-based pairs sorted by row.
    """
    n: int
    pairs: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ParameterError('n must be at least 1')
        pairs = tuple(sorted((int(row), int(column)) for row, column in self.pairs))
        rows = [row for row, _ in pairs]
        columns = [column for _, column in pairs]
        if len(set(rows)) != len(rows) or len(set(columns)) != len(columns):
            raise ParameterError('an alignment must not use a row or a column twice')
        if any(not 0 <= index < self.n for index in rows + columns):
            raise ParameterError(f'alignment indices must be in 0..{self.n - 1}')
        object.__setattr__(self, 'pairs', pairs)

    @classmethod
    def from_permutation(cls, sigma: Iterable[int]) -> PartialAlignment:
        """
        Builds the full alignment {(i, sigma_i)}.
        """
        sigma = np.asarray(list(sigma))
        return cls(n=len(sigma), pairs=tuple((row, int(column)) for row, column in enumerate(sigma)))

    @property
    def size(self) -> int:
        """
        Number of pairs.
        """
        return len(self.pairs)

    @property
    def is_full(self) -> bool:
        """
        True iff every row is aligned.
        """
        return self.size == self.n

    def as_permutation(self) -> np.ndarray:
        """
        Returns sigma with pairs (i, sigma_i) of a full alignment.

        Raises:
            ParameterError: If the alignment is partial.
        """
        if not self.is_full:
            raise ParameterError(f'alignment with {self.size} of {self.n} pairs is not a permutation')
        return np.array([column for _, column in self.pairs])


@dataclass(frozen=True, eq=False)
class RecoveryOutcome:
    """
    Result of a recovery algorithm.

    Attributes:
        alignment (PartialAlignment): The estimated pairs.
        scores (np.ndarray): s_ij of each pair, in the order of alignment.pairs.
    """
    alignment: PartialAlignment
    scores: np.ndarray

    @property
    def is_full(self) -> bool:
        """
        True iff the alignment covers all n rows.
        """
        return self.alignment.is_full


class AlignmentEvaluation(NamedTuple):
    """
    Errors of an estimated alignment against the true permutation.

    err1 is set unless the output is the full true permutation, err2 is set when at least
    one output pair is wrong. Missing pairs do not count towards err2.
    """
    err1: bool
    err2: bool
    size: int


def _pairs_with_scores(table: ScoreTable, pairs: Iterable[Tuple[int, int]]) -> RecoveryOutcome:
    alignment = PartialAlignment(n=table.n, pairs=tuple(pairs))
    scores = np.array([table.s[row, column] for row, column in alignment.pairs], dtype=np.float64)
    return RecoveryOutcome(alignment=alignment, scores=scores)


def _clean(dots: np.ndarray) -> np.ndarray:
    # a dot survives iff it is alone in its row and in its column of the original dot set
    row_counts = dots.sum(axis=1)
    column_counts = dots.sum(axis=0)
    return dots & (row_counts == 1)[:, np.newaxis] & (column_counts == 1)[np.newaxis, :]


def threshold_and_clean(table: ScoreTable, theta: float) -> PartialAlignment:
    """
    Threshold-and-Clean partial recovery.

    Marks every entry s_ij >= theta as a dot, erases all dots in rows or columns that contain
    more than one dot and returns the surviving dots.

    Args:
        table (ScoreTable): The score table.
        theta (float): Dot threshold.

    Returns:
        PartialAlignment: The survivors, always a member of L_n.
    """
    survivors = _clean(table.s >= theta)
    rows, columns = np.nonzero(survivors)
    LOG.debug('threshold-and-clean kept %d of %d rows at theta=%s', len(rows), table.n, theta)
    return PartialAlignment(n=table.n, pairs=tuple(zip(rows.tolist(), columns.tolist())))


def hungarian_max(table: ScoreTable) -> np.ndarray:
    """
    Maximum likelihood permutation: the assignment maximizing sum_i s_{i, sigma_i}.

    Solved exactly as the minimum cost assignment of max(s) - s.

    Returns:
        np.ndarray: 0-based sigma, row i is assigned to column sigma[i].
    """
    cost = table.s.max() - table.s
    rows, columns = linear_sum_assignment(cost)
    sigma = np.empty(table.n, dtype=np.int64)
    sigma[rows] = columns
    return sigma


def brute_force_ml(table: ScoreTable) -> Tuple[np.ndarray, float]:
    """
    Exhaustive maximization over all n! permutations, the oracle for hungarian_max.

    The first maximizer in lexicographic order is returned.

    Raises:
        OracleLimitError: If n > 8.
    """
    if table.n > BRUTE_FORCE_MAX_N:
        raise OracleLimitError(f'brute force ML enumerates n <= {BRUTE_FORCE_MAX_N}, got n={table.n}')
    rows = np.arange(table.n)
    best: Optional[Tuple[int, ...]] = None
    best_objective = -math.inf
    for candidate in itertools.permutations(range(table.n)):
        value = float(table.s[rows, list(candidate)].sum())
        if value > best_objective:
            best, best_objective = candidate, value
    return np.array(best, dtype=np.int64), best_objective


def objective(table: ScoreTable, sigma: np.ndarray) -> float:
    """
    Returns sum_i s_{i, sigma_i}.
    """
    return float(table.s[np.arange(table.n), sigma].sum())


def maximum_path(table: ScoreTable, r: float) -> PartialAlignment:
    """
    Maximum-Path partial recovery.

    Runs hungarian_max, sorts the matched pairs by score in descending order and keeps the
    top ceil(r * n). Ties are broken by the row index in ascending order.

    Args:
        table (ScoreTable): The score table.
        r (float): Fraction of pairs to keep, in (0, 1].

    Returns:
        PartialAlignment: The kept pairs.
    """
    if not 0.0 < r <= 1.0:
        raise ParameterError(f'r must be in (0, 1], got {r}')
    sigma = hungarian_max(table)
    rows = np.arange(table.n)
    scores = table.s[rows, sigma]
    keep = min(table.n, max(1, math.ceil(r * table.n - 1e-9)))
    order = np.lexsort((rows, -scores))[:keep]
    return PartialAlignment(n=table.n, pairs=tuple((int(row), int(sigma[row])) for row in order))


def two_stage_full(table: ScoreTable, theta: float) -> np.ndarray:
    """
    Full recovery in two stages.

    Threshold-and-Clean fixes the pairs it is sure about; the rows and columns it leaves
    unmatched form a smaller table that the Hungarian algorithm solves. With (1 - R) n rows
    left the second stage costs (1 - R)^3 of a full Hungarian run.

    Returns:
        np.ndarray: 0-based sigma, always a bijection.
    """
    fixed = threshold_and_clean(table, theta)
    sigma = np.full(table.n, -1, dtype=np.int64)
    for row, column in fixed.pairs:
        sigma[row] = column
    free_rows = np.flatnonzero(sigma < 0)
    used_columns = np.zeros(table.n, dtype=bool)
    used_columns[sigma[sigma >= 0]] = True
    free_columns = np.flatnonzero(~used_columns)
    if free_rows.size > 0:
        residual = ScoreTable(s=table.s[np.ix_(free_rows, free_columns)])
        sigma[free_rows] = free_columns[hungarian_max(residual)]
    LOG.debug('two-stage recovery fixed %d pairs, solved a residual of size %d', fixed.size, free_rows.size)
    return sigma


def evaluate_alignment(out: PartialAlignment, truth: np.ndarray) -> AlignmentEvaluation:
    """
    Compares an estimated alignment with the true permutation.

    Args:
        out (PartialAlignment): The estimate.
        truth (np.ndarray): 0-based true sigma.

    Returns:
        AlignmentEvaluation: (err1, err2, size).
    """
    truth = np.asarray(truth)
    if truth.shape != (out.n,) or not np.array_equal(np.sort(truth), np.arange(out.n)):
        raise ParameterError(f'truth must be a permutation of {out.n} elements')
    err2 = any(truth[row] != column for row, column in out.pairs)
    err1 = err2 or not out.is_full
    return AlignmentEvaluation(err1=err1, err2=err2, size=out.size)


def recover(table: ScoreTable, algorithm: Algorithm, theta: Optional[float] = None, r: Optional[float] = None) -> RecoveryOutcome:
    """
    Runs a recovery algorithm on a score table.

    Args:
        table (ScoreTable): The score table.
        algorithm (Algorithm): The estimator.
        theta (Optional[float]): Dot threshold, required by TC and TWO_STAGE.
        r (Optional[float]): Kept fraction, required by MP.

    Returns:
        RecoveryOutcome: The alignment with the score of every pair.
    """
    if algorithm in (Algorithm.TC, Algorithm.TWO_STAGE) and theta is None:
        raise ParameterError(f'{algorithm} recovery needs theta')
    if algorithm == Algorithm.MP and r is None:
        raise ParameterError('mp recovery needs r')
    if algorithm == Algorithm.TC:
        alignment = threshold_and_clean(table, theta)
    elif algorithm == Algorithm.ML:
        alignment = PartialAlignment.from_permutation(hungarian_max(table))
    elif algorithm == Algorithm.MP:
        alignment = maximum_path(table, r)
    elif algorithm == Algorithm.TWO_STAGE:
        alignment = PartialAlignment.from_permutation(two_stage_full(table, theta))
    else:
        raise ParameterError(f'unknown recovery algorithm {algorithm}')
    return _pairs_with_scores(table, alignment.pairs)
