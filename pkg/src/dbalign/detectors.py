"""Module implements the two correlation detectors: the sum-of-inner-products test and the threshold-count test."""
from __future__ import annotations
from typing import TYPE_CHECKING

import math
import logging
from enum import Enum
from dataclasses import dataclass, field

import numpy as np

from dbalign.errors import ParameterError
from dbalign.model import Hypothesis
from dbalign.theory.special import p_prob

if TYPE_CHECKING:
    from typing import Optional, Dict, Any

    from dbalign.model import DatabasePair, ScoreTable

LOG: logging.Logger = logging.getLogger("dbalign.detectors")


class Detector(Enum):
    """
    Available correlation detectors.

    Attributes:
        SOP: Sum of all raw inner products compared to sqrt(gamma) * d * n / 2.
        COUNT: Number of dots s_ij >= theta compared to test_beta * n * P.
    """
    SOP = 'sop'
    COUNT = 'count'

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SopTestConfig:
    """
    Configuration of the sum-of-inner-products test.

    Attributes:
        gamma (float): Threshold parameter in (0, 4 rho^2).
        rho (float): Correlation the test is tuned for.
        n (int): Number of rows.
        d (int): Number of features.
        threshold (float): Derived decision threshold t = sqrt(gamma) * d * n / 2.
    """
    gamma: float
    rho: float
    n: int
    d: int
    threshold: float = field(init=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ParameterError(f'rho must be in (0, 1), got {self.rho}')
        if not 0.0 < self.gamma < 4.0 * self.rho ** 2:
            raise ParameterError(f'gamma must be in (0, 4 rho^2) = (0, {4.0 * self.rho ** 2:.6g}), got {self.gamma}')
        if self.n < 1 or self.d < 1:
            raise ParameterError('n and d must be at least 1')
        object.__setattr__(self, 'threshold', math.sqrt(self.gamma) * self.d * self.n / 2.0)


@dataclass(frozen=True)
class CountTestConfig:
    """
    Configuration of the threshold-count test.

    Attributes:
        theta (float): Dot threshold in (0, 1).
        test_beta (float): Threshold factor in (0, 1].
        p_ref (float): The P used in the decision threshold test_beta * n * P.
    """
    theta: float
    test_beta: float
    p_ref: float

    def __post_init__(self) -> None:
        if not -1.0 <= self.theta <= 1.0:
            raise ParameterError(f'theta must be in [-1, 1], got {self.theta}')
        if not 0.0 < self.test_beta <= 1.0:
            raise ParameterError(f'test_beta must be in (0, 1], got {self.test_beta}')
        if not 0.0 < self.p_ref <= 1.0:
            raise ParameterError(f'p_ref must be in (0, 1] so that the decision threshold is positive, got {self.p_ref}')

    @classmethod
    def for_model(cls, d: int, rho: float, theta: float, test_beta: float, p_ref: Optional[float] = None) -> CountTestConfig:
        """
        Builds the configuration with p_ref = P(d, rho, theta) unless an empirical P is injected.
        """
        if p_ref is None:
            p_ref = p_prob(d, rho, theta)
            LOG.debug('using P(d=%d, rho=%s, theta=%s) = %.10g as reference', d, rho, theta, p_ref)
        return cls(theta=theta, test_beta=test_beta, p_ref=p_ref)

    def threshold(self, n: int) -> float:
        """
        Returns test_beta * n * p_ref.
        """
        return self.test_beta * n * self.p_ref


def sop_statistic(db: DatabasePair) -> float:
    """
    T = sum_i sum_j X_i^T Y_j on the raw rows, evaluated as (sum_i X_i)^T (sum_j Y_j).
    """
    return float(np.dot(db.x.sum(axis=0), db.y.sum(axis=0)))


def sop_decide(t_stat: float, cfg: SopTestConfig) -> Hypothesis:
    """
    Returns H1 iff T >= t.
    """
    return Hypothesis.H1 if t_stat >= cfg.threshold else Hypothesis.H0


def count_statistic(table: ScoreTable, theta: float) -> int:
    """
    N(theta), the number of dots s_ij >= theta in the table. Ties count as dots.
    """
    return int(np.count_nonzero(table.s >= theta))


def count_decide(n_stat: int, n: int, cfg: CountTestConfig) -> Hypothesis:
    """
    Returns H1 iff N(theta) >= test_beta * n * P.
    """
    return Hypothesis.H1 if n_stat >= cfg.threshold(n) else Hypothesis.H0


def detection_record(detector: Detector, statistic: float, threshold: float, decision: Hypothesis) -> Dict[str, Any]:
    """
    Returns the record written by the detect command: the statistic (T or N), the threshold and the decision.
    """
    key = 'T' if detector == Detector.SOP else 'N'
    return {'detector': str(detector), key: statistic, 'threshold': threshold, 'decision': str(decision)}
