"""Module implements the Gaussian database model: sampling under both hypotheses, normalization and the score table."""
from __future__ import annotations
from typing import TYPE_CHECKING

import logging
from enum import Enum
from dataclasses import dataclass, field

import numpy as np

from dbalign.errors import ParameterError, DegenerateInputError

if TYPE_CHECKING:
    from typing import Optional, Tuple, Union

    SeedLike = Union[int, np.random.SeedSequence]

LOG: logging.Logger = logging.getLogger("dbalign.model")


class Hypothesis(Enum):
    """
    The two hypotheses of the detection problem.

    Attributes:
        H0: The databases are independent.
        H1: The databases are row-permuted and correlated with coefficient rho.
    """
    H0 = 0
    H1 = 1

    def __str__(self) -> str:
        return self.name


def make_rng(seed: SeedLike, *stream: int) -> np.random.Generator:
    """
    Creates the random generator for a master seed and an optional stream index.

    The master seed and the stream indices form a numpy SeedSequence (the stream indices
    are its spawn key), which feeds a PCG64 bit generator. Gaussian variates are drawn with
    numpy's ziggurat sampler. Streams with different indices are statistically independent,
    so trial t of an experiment can be generated from (seed, t) on any thread.

    Args:
        seed (SeedLike): Non-negative master seed, at most 64 bits, or an existing SeedSequence.
        *stream (int): Non-negative stream indices.

    Returns:
        np.random.Generator: The generator.

    Raises:
        ParameterError: If the seed or a stream index is negative or the seed exceeds 64 bits.
    """
    if isinstance(seed, np.random.SeedSequence):
        sequence = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(stream))
    else:
        if int(seed) < 0 or int(seed) >= 2**64:
            raise ParameterError(f'seed must be a non-negative 64-bit integer, got {seed}')
        if any(index < 0 for index in stream):
            raise ParameterError('stream indices must be non-negative')
        sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(index) for index in stream))
    return np.random.Generator(np.random.PCG64(sequence))


def random_permutation(n: int, seed: SeedLike) -> np.ndarray:
    """
    Draws a permutation uniformly from S_n with an unbiased Fisher-Yates shuffle.

    Args:
        n (int): Size of the permutation, at least 1.
        seed (SeedLike): Seed of the draw.

    Returns:
        np.ndarray: 0-based permutation of range(n).
    """
    if n < 1:
        raise ParameterError('n must be at least 1')
    return make_rng(seed).permutation(n)


def inverse_permutation(sigma: np.ndarray) -> np.ndarray:
    """
    Returns the inverse of a 0-based permutation.
    """
    inverse = np.empty_like(sigma)
    inverse[sigma] = np.arange(len(sigma))
    return inverse


def _validate_permutation(sigma: np.ndarray, n: int) -> None:
    if sigma.shape != (n,) or not np.array_equal(np.sort(sigma), np.arange(n)):
        raise ParameterError(f'sigma must be a permutation of {n} elements')


@dataclass(frozen=True)
class ModelParams:
    """
    Parameters of the database model.

    Attributes:
        n (int): Number of rows of each database.
        d (int): Number of features per row.
        rho (Optional[float]): Correlation coefficient of matched rows, in (0, 1). Only needed under H1.
        sigma (Optional[Tuple[int, ...]]): 0-based permutation, X_i is matched with Y_sigma_i. Identity if omitted.
    """
    n: int
    d: int
    rho: Optional[float] = None
    sigma: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ParameterError('n must be at least 1')
        if self.d < 1:
            raise ParameterError('d must be at least 1')
        if self.rho is not None and not 0.0 < self.rho < 1.0:
            raise ParameterError(f'rho must be in (0, 1), got {self.rho}')
        if self.sigma is not None:
            object.__setattr__(self, 'sigma', tuple(int(index) for index in self.sigma))
            _validate_permutation(np.asarray(self.sigma), self.n)

    @property
    def permutation(self) -> np.ndarray:
        """
        The matching permutation as a 0-based array (identity when none was given).
        """
        if self.sigma is None:
            return np.arange(self.n)
        return np.asarray(self.sigma)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """
    The hypothesis a database pair was generated under and, for H1, its permutation.
    """
    hypothesis: Hypothesis
    sigma: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class DatabasePair:
    """
    Two n x d databases X and Y.

    Attributes:
        x (np.ndarray): First database, one subject per row.
        y (np.ndarray): Second database with the same shape.
        truth (Optional[GroundTruth]): How the pair was generated, if known.
    """
    x: np.ndarray
    y: np.ndarray
    truth: Optional[GroundTruth] = None

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 2 or y.ndim != 2:
            raise ParameterError('databases must be two-dimensional')
        if x.shape != y.shape:
            raise ParameterError(f'databases must have identical dimensions, got {x.shape} and {y.shape}')
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ParameterError('databases must only contain finite entries')
        if self.truth is not None and self.truth.sigma is not None:
            _validate_permutation(np.asarray(self.truth.sigma), x.shape[0])
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'y', y)

    @property
    def n(self) -> int:
        """
        Number of rows.
        """
        return self.x.shape[0]

    @property
    def d(self) -> int:
        """
        Number of features.
        """
        return self.x.shape[1]


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """
    The n x n table of normalized inner products between the rows of X and Y.

    Tables built by score_table() have every entry in [-1, 1]; tables built by hand for the
    assignment solvers may carry any finite score.
    """
    s: np.ndarray
    n: int = field(init=False)

    def __post_init__(self) -> None:
        s = np.asarray(self.s, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] < 1:
            raise ParameterError(f'score table must be square and non-empty, got shape {s.shape}')
        if not np.all(np.isfinite(s)):
            raise ParameterError('score table must only contain finite entries')
        object.__setattr__(self, 's', s)
        object.__setattr__(self, 'n', s.shape[0])


def sample_h0(params: ModelParams, seed: SeedLike) -> DatabasePair:
    """
    Draws two independent databases with i.i.d. standard Gaussian entries.

    X is drawn before Y from the same stream, so the pair is a deterministic function of the seed.

    Args:
        params (ModelParams): Shape of the databases; rho and sigma are ignored.
        seed (SeedLike): Seed of the draw.

    Returns:
        DatabasePair: The pair, labelled with H0.
    """
    rng: np.random.Generator = make_rng(seed)
    x = rng.standard_normal((params.n, params.d))
    y = rng.standard_normal((params.n, params.d))
    return DatabasePair(x=x, y=y, truth=GroundTruth(hypothesis=Hypothesis.H0))


def sample_h1(params: ModelParams, seed: SeedLike) -> DatabasePair:
    """
    Draws a correlated, row-permuted database pair.

    The partner of X_i is rho * X_i + sqrt(1 - rho^2) * Z_i with Z_i standard Gaussian and
    independent of X_i; it is stored in row sigma_i of Y.

    Args:
        params (ModelParams): Shape, correlation and permutation of the pair.
        seed (SeedLike): Seed of the draw.

    Returns:
        DatabasePair: The pair, labelled with H1 and sigma.

    Raises:
        ParameterError: If rho is missing or not in (0, 1).
    """
    if params.rho is None or not 0.0 < params.rho < 1.0:
        raise ParameterError(f'rho must be in (0, 1) under H1, got {params.rho}')
    rng: np.random.Generator = make_rng(seed)
    x = rng.standard_normal((params.n, params.d))
    z = rng.standard_normal((params.n, params.d))
    partners = params.rho * x + np.sqrt(1.0 - params.rho ** 2) * z
    sigma: np.ndarray = params.permutation
    y = np.empty_like(partners)
    y[sigma] = partners
    return DatabasePair(x=x, y=y, truth=GroundTruth(hypothesis=Hypothesis.H1, sigma=sigma.copy()))


def _normalized_rows(matrix: np.ndarray, name: str) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    zero_rows = np.flatnonzero(norms == 0.0)
    if zero_rows.size > 0:
        raise DegenerateInputError(f'row {zero_rows[0] + 1} of {name} has zero norm and cannot be normalized')
    return matrix / norms[:, np.newaxis]


def score_table(db: DatabasePair) -> ScoreTable:
    """
    Computes the table of normalized inner products s_ij = (X_i/|X_i|)^T (Y_j/|Y_j|).

    Args:
        db (DatabasePair): The databases.

    Returns:
        ScoreTable: The table, invariant to positive rescaling of any row.

    Raises:
        DegenerateInputError: If a row of X or Y is all zeros.
    """
    x_tilde = _normalized_rows(db.x, 'X')
    y_tilde = _normalized_rows(db.y, 'Y')
    return ScoreTable(s=x_tilde @ y_tilde.T)
