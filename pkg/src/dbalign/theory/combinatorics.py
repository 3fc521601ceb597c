"""
Module implements the exact combinatorics behind the moment bound of the threshold-count test.

S(k, l) are the Stirling numbers of the second kind and the moment weights are

    B(k) = sum_{l=1}^{k} S(k, l) * k^(2l) / l!

B(k) is rational, so it is accumulated exactly with fractions and only its logarithm is
handed to floating point code.
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import math
import logging
import itertools
from fractions import Fraction
from functools import lru_cache
from dataclasses import dataclass

import numpy as np

from dbalign.errors import ParameterError, OracleLimitError

if TYPE_CHECKING:
    from typing import Tuple, List, Optional

LOG: logging.Logger = logging.getLogger("dbalign.theory")

K_MAX_LIMIT: int = 64

ORACLE_MAX_N: int = 3
ORACLE_MAX_M: int = 3
ORACLE_MAX_K: int = 5


def _check_k_max(k_max: int) -> None:
    if not 1 <= k_max <= K_MAX_LIMIT:
        raise ParameterError(f'k_max must be in 1..{K_MAX_LIMIT}, got {k_max}')


@dataclass(frozen=True)
class StirlingTable:
    """
    Triangular table of Stirling numbers of the second kind S(k, l), 1 <= l <= k <= k_max.

    Attributes:
        k_max (int): Largest k in the table.
        rows (Tuple[Tuple[int, ...], ...]): rows[k - 1][l - 1] = S(k, l), exact integers.
    """
    k_max: int
    rows: Tuple[Tuple[int, ...], ...]

    def value(self, k: int, l: int) -> int:  # noqa: E741
        """
        Returns S(k, l); zero outside 1 <= l <= k.

        Raises:
            ParameterError: If k is outside 1..k_max.
        """
        if not 1 <= k <= self.k_max:
            raise ParameterError(f'k={k} is outside the table (k_max={self.k_max})')
        if not 1 <= l <= k:
            return 0
        return self.rows[k - 1][l - 1]


@lru_cache(maxsize=None)
def stirling_table(k_max: int) -> StirlingTable:
    """
    Builds the Stirling table with the recurrence S(k, l) = l * S(k-1, l) + S(k-1, l-1).

    Args:
        k_max (int): Largest k, in 1..64.

    Returns:
        StirlingTable: The table. Tables are cached and immutable.
    """
    _check_k_max(k_max)
    rows: List[Tuple[int, ...]] = [(1,)]
    for k in range(2, k_max + 1):
        previous = rows[-1]
        row: List[int] = []
        for l in range(1, k + 1):  # noqa: E741
            same = previous[l - 1] if l <= k - 1 else 0
            lower = previous[l - 2] if l >= 2 else 0
            row.append(l * same + lower)
        rows.append(tuple(row))
    return StirlingTable(k_max=k_max, rows=tuple(rows))


def bell_numbers(k_max: int) -> List[int]:
    """
    Returns the Bell numbers B_1..B_{k_max} as row sums of the Stirling table.
    """
    table = stirling_table(k_max)
    return [sum(row) for row in table.rows]


@dataclass(frozen=True, eq=False)
class BWeights:
    """
    The moment weights B(1)..B(k_max).

    Attributes:
        k_max (int): Number of weights.
        exact (Tuple[Fraction, ...]): exact[k - 1] = B(k).
        log_b (np.ndarray): Natural logarithms of the weights.
    """
    k_max: int
    exact: Tuple[Fraction, ...]
    log_b: np.ndarray

    def log(self, k: int) -> float:
        """
        Returns ln B(k).
        """
        if not 1 <= k <= self.k_max:
            raise ParameterError(f'k={k} is outside 1..{self.k_max}')
        return float(self.log_b[k - 1])


def _log_fraction(value: Fraction) -> float:
    # math.log accepts integers of any size, the float conversion of value would overflow
    return math.log(value.numerator) - math.log(value.denominator)


@lru_cache(maxsize=None)
def b_numbers(k_max: int) -> BWeights:
    """
    Computes B(k) = sum_l S(k, l) k^(2l) / l! exactly for k = 1..k_max.

    Args:
        k_max (int): Largest k, in 1..64.

    Returns:
        BWeights: Exact values and their logarithms.
    """
    _check_k_max(k_max)
    table = stirling_table(k_max)
    exact: List[Fraction] = []
    for k in range(1, k_max + 1):
        total = Fraction(0)
        for l in range(1, k + 1):  # noqa: E741
            total += Fraction(table.value(k, l) * k ** (2 * l), math.factorial(l))
        exact.append(total)
    log_b = np.array([_log_fraction(value) for value in exact], dtype=np.float64)
    log_b.setflags(write=False)
    LOG.debug('computed moment weights up to k=%d, ln B(k_max)=%.6g', k_max, log_b[-1])
    return BWeights(k_max=k_max, exact=tuple(exact), log_b=log_b)


def log_moment_bound_rhs(n: int, q: float, k: int, weights: Optional[BWeights] = None) -> float:
    """
    Natural logarithm of k(k+1)B(k) * [(n^2 Q)^k if n^2 Q >= 1 else n^2 Q].

    Returns -inf when Q = 0.
    """
    if n < 1:
        raise ParameterError('n must be at least 1')
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f'q must be in [0, 1], got {q}')
    if k < 1:
        raise ParameterError('k must be at least 1')
    if weights is None or weights.k_max < k:
        weights = b_numbers(max(k, 1))
    if q == 0.0:
        return -math.inf
    n2q = n * n * q
    log_prefactor = math.log(k * (k + 1)) + weights.log(k)
    if n2q >= 1.0:
        return log_prefactor + k * math.log(n2q)
    return log_prefactor + math.log(n2q)


def moment_bound_rhs(n: int, q: float, k: int) -> float:
    """
    Upper bound on the k-th moment of the number of coincidences between two i.i.d. sets.

    For X_1..X_n and Y_1..Y_n i.i.d. and a symmetric indicator J with Pr{J(X, Y) = 1} = Q,
    E[(sum_i sum_j J(X_i, Y_j))^k] <= k(k+1)B(k) * [(n^2 Q)^k if n^2 Q >= 1 else n^2 Q].

    Args:
        n (int): Size of each set.
        q (float): Probability that an independent pair is a coincidence.
        k (int): Order of the moment, 1..64.

    Returns:
        float: The right-hand side, inf if it does not fit a float.
    """
    log_value = log_moment_bound_rhs(n, q, k)
    if log_value > 709.0:
        return math.inf
    return math.exp(log_value)


def exact_moment_small(n: int, m: int, k: int) -> Fraction:
    """
    Exact k-th moment of N = sum_i sum_j 1{X_i = Y_j} for X, Y uniform on an alphabet of size m.

    All m^(2n) outcomes are enumerated, so Q = 1/m and the result is exact.

    Args:
        n (int): Size of each set, 1..3.
        m (int): Alphabet size, 1..3.
        k (int): Order of the moment, 1..5.

    Returns:
        Fraction: E[N^k].

    Raises:
        OracleLimitError: If a size limit is exceeded.
    """
    if not 1 <= n <= ORACLE_MAX_N or not 1 <= m <= ORACLE_MAX_M or not 1 <= k <= ORACLE_MAX_K:
        raise OracleLimitError(f'moment oracle enumerates n <= {ORACLE_MAX_N}, m <= {ORACLE_MAX_M}, k <= {ORACLE_MAX_K}; '
                               f'got n={n}, m={m}, k={k}')
    total = 0
    for outcome in itertools.product(range(m), repeat=2 * n):
        xs, ys = outcome[:n], outcome[n:]
        coincidences = sum(1 for x in xs for y in ys if x == y)
        total += coincidences ** k
    return Fraction(total, m ** (2 * n))
