"""
Module implements the error bounds of the two detectors and of Threshold-and-Clean recovery.

Two thresholds share the letter beta in the literature: test_beta scales the decision
threshold test_beta * n * P of the threshold-count test, split_beta(rho, theta) is the
second split point of the integral for P (see dbalign.theory.special).
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import math
import logging
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import optimize

from dbalign.errors import ParameterError, UndefinedThresholdError
from dbalign.theory.special import p_prob, q_prob, LocalProbs, DEFAULT_REL_TOL
from dbalign.theory.combinatorics import b_numbers, log_moment_bound_rhs

if TYPE_CHECKING:
    from typing import Tuple, Iterator, Sequence, Dict, Any

LOG: logging.Logger = logging.getLogger("dbalign.theory")

DEFAULT_K_MAX: int = 40

BOUND_SWEEP_AXES: Tuple[str, ...] = ('beta', 'theta', 'rho', 'n', 'd')

BOUND_COLUMNS: Tuple[str, ...] = ('n', 'd', 'rho', 'theta', 'beta', 'P', 'Q', 'fa_bound', 'argmin_k', 'md_bound', 'pe1_lo', 'pe1_up', 'pe2_up')

_LOG_FLOAT_MAX: float = 709.0


def _exp_or_inf(log_value: float) -> float:
    if log_value > _LOG_FLOAT_MAX:
        return math.inf
    return math.exp(log_value)


def _check_probs(p: float, q: float) -> None:
    if not 0.0 <= p <= 1.0 or not 0.0 <= q <= 1.0:
        raise ParameterError(f'p and q must be in [0, 1], got p={p}, q={q}')


def _check_n(n: int, minimum: int = 1) -> None:
    if n < minimum:
        raise ParameterError(f'n must be at least {minimum}, got {n}')


@lru_cache(maxsize=4096)
def cached_local_probs(d: int, rho: float, theta: float, rel_tol: float = DEFAULT_REL_TOL) -> LocalProbs:
    """
    Returns P and Q for (d, rho, theta), memoized across bound evaluations and sweeps.
    """
    return LocalProbs(p=p_prob(d, rho, theta, rel_tol=rel_tol), q=q_prob(d, theta))


def type1_bound_from_probs(n: int, p: float, q: float, test_beta: float, k_max: int = DEFAULT_K_MAX,
                           clip: bool = True) -> Tuple[float, int]:
    """
    Moment bound on the false-alarm probability of the threshold-count test for given P and Q.

    Evaluates min over k = 1..k_max of

        k(k+1)B(k) * [(n^2 Q)^k if n^2 Q >= 1 else n^2 Q] / (test_beta * n * P)^k

    term by term in the log domain.

    Args:
        n (int): Number of rows.
        p (float): Local detect probability P.
        q (float): Local false-alarm probability Q.
        test_beta (float): Threshold factor in (0, 1].
        k_max (int): Truncation of the minimization, 1..64.
        clip (bool): Clip the bound at 1.

    Returns:
        Tuple[float, int]: The bound and the minimizing k.

    Raises:
        UndefinedThresholdError: If P = 0, so the decision threshold vanishes.
    """
    _check_n(n)
    _check_probs(p, q)
    if not 0.0 < test_beta <= 1.0:
        raise ParameterError(f'test_beta must be in (0, 1], got {test_beta}')
    if p == 0.0:
        raise UndefinedThresholdError('the decision threshold test_beta * n * P is zero because P = 0')
    if q == 0.0:
        return 0.0, 1

    weights = b_numbers(k_max)
    log_threshold = math.log(test_beta * n * p)
    log_terms = np.array([log_moment_bound_rhs(n, q, k, weights) - k * log_threshold for k in range(1, k_max + 1)])
    index = int(np.argmin(log_terms))
    bound = _exp_or_inf(float(log_terms[index]))
    if clip:
        bound = min(bound, 1.0)
    return bound, index + 1


def type1_bound(n: int, d: int, rho: float, theta: float, test_beta: float, k_max: int = DEFAULT_K_MAX,
                rel_tol: float = DEFAULT_REL_TOL) -> Tuple[float, int]:
    """
    Upper bound on the type-I error of the threshold-count test, clipped at 1.

    Args:
        n (int): Number of rows.
        d (int): Number of features.
        rho (float): Correlation in (0, 1).
        theta (float): Dot threshold.
        test_beta (float): Threshold factor in (0, 1].
        k_max (int): Truncation of the minimization over k.
        rel_tol (float): Relative tolerance used for P.

    Returns:
        Tuple[float, int]: The bound and the minimizing k.
    """
    probs = cached_local_probs(d, rho, theta, rel_tol)
    return type1_bound_from_probs(n, probs.p, probs.q, test_beta, k_max)


def type2_bound_from_probs(n: int, p: float, q: float, test_beta: float) -> float:
    """
    Returns exp{-min((1-test_beta)^2 * nP / (16nQ + 2), (1-test_beta) * n / 12)}.
    """
    _check_n(n)
    _check_probs(p, q)
    if not 0.0 < test_beta <= 1.0:
        raise ParameterError(f'test_beta must be in (0, 1], got {test_beta}')
    exponent = min((1.0 - test_beta) ** 2 * n * p / (16.0 * n * q + 2.0), (1.0 - test_beta) * n / 12.0)
    return math.exp(-exponent)


def type2_bound(n: int, d: int, rho: float, theta: float, test_beta: float, rel_tol: float = DEFAULT_REL_TOL) -> float:
    """
    Upper bound on the type-II error of the threshold-count test, from Janson's lower-tail inequality.

    Args:
        n (int): Number of rows.
        d (int): Number of features.
        rho (float): Correlation in (0, 1).
        theta (float): Dot threshold.
        test_beta (float): Threshold factor in (0, 1]; test_beta = 1 gives the trivial bound 1.
        rel_tol (float): Relative tolerance used for P.

    Returns:
        float: The bound, in (0, 1].
    """
    probs = cached_local_probs(d, rho, theta, rel_tol)
    return type2_bound_from_probs(n, probs.p, probs.q, test_beta)


@dataclass(frozen=True)
class JansonQuantities:
    """
    Mean and dependence masses of the dot count under H1.

    Attributes:
        delta (float): nP + n(n-1)Q, the expected number of dots.
        theta_big (float): 2PQn(n-1) + Q^2 n(n-1)(n-2), half the correlated pair mass.
        omega (float): 2P + (2n-4)Q, the largest neighbourhood mass (0 for n = 1).
    """
    delta: float
    theta_big: float
    omega: float


def janson_quantities(n: int, p: float, q: float) -> JansonQuantities:
    """
    Computes Delta, Theta and Omega of the dependency graph whose cells share a row or a column.

    A single cell has no neighbours, so n = 1 gives Theta = Omega = 0.
    """
    _check_n(n)
    _check_probs(p, q)
    delta = n * p + n * (n - 1) * q
    theta_big = 2.0 * p * q * n * (n - 1) + q * q * n * (n - 1) * (n - 2)
    omega = 2.0 * p + (2 * n - 4) * q if n >= 2 else 0.0
    return JansonQuantities(delta=delta, theta_big=theta_big, omega=omega)


def type2_bound_janson(n: int, p: float, q: float, test_beta: float) -> float:
    """
    Janson's inequality for the dot count with the exact Delta, Theta and Omega.

    Pr{N <= test_beta * Delta} <= exp{-min((1-b)^2 Delta^2 / (8 Theta + 2 Delta), (1-b) Delta / (6 Omega))}.
    Since test_beta * n * P <= test_beta * Delta, this also bounds the type-II error and is never
    looser than type2_bound_from_probs.

    Raises:
        ParameterError: If n < 2.
    """
    _check_n(n, 2)
    if not 0.0 < test_beta <= 1.0:
        raise ParameterError(f'test_beta must be in (0, 1], got {test_beta}')
    quantities = janson_quantities(n, p, q)
    if quantities.delta == 0.0:
        return 1.0
    first = (1.0 - test_beta) ** 2 * quantities.delta ** 2 / (8.0 * quantities.theta_big + 2.0 * quantities.delta)
    second = (1.0 - test_beta) * quantities.delta / (6.0 * quantities.omega) if quantities.omega > 0.0 else math.inf
    return math.exp(-min(first, second))


def pe1_upper(n: int, p: float, q: float, clip: bool = True) -> float:
    """
    Union bound on the probability that Threshold-and-Clean misses the full permutation: n(1-P) + n(n-1)Q.
    """
    _check_n(n)
    _check_probs(p, q)
    value = n * (1.0 - p) + n * (n - 1) * q
    return min(value, 1.0) if clip else value


def pe1_lower(n: int, p: float, q: float) -> float:
    """
    de Caen type lower bound A / (max{P, 1-Q} + A) with A = n(1-P) + n(n-1)Q.
    """
    _check_n(n)
    _check_probs(p, q)
    union = n * (1.0 - p) + n * (n - 1) * q
    if union == 0.0:
        return 0.0
    return union / (max(p, 1.0 - q) + union)


def pe2_upper(n: int, p: float, q: float, clip: bool = True) -> float:
    """
    Upper bound on the probability that Threshold-and-Clean outputs at least one wrong pair.

    n(n-1) Q (1-P)^2 (1-Q)^(2n-4): a wrong dot survives the cleaning only if both true dots in
    its row and column are missing and no other dot shares its row or column.

    Raises:
        ParameterError: If n < 2.
    """
    _check_n(n, 2)
    _check_probs(p, q)
    value = n * (n - 1) * q * (1.0 - p) ** 2 * (1.0 - q) ** (2 * n - 4)
    return min(value, 1.0) if clip else value


def expected_success_rate(n: int, p: float, q: float) -> float:
    """
    Approximate averaged success rate of Threshold-and-Clean under H1.

    A matched pair survives when it is a dot and none of the 2(n-1) other cells in its row
    and column is one: P (1-Q)^(2(n-1)).
    """
    _check_n(n)
    _check_probs(p, q)
    return p * (1.0 - q) ** (2 * (n - 1))


def sop_g_functions(gamma: float, rho: float) -> Tuple[float, float]:
    """
    Exponent functions of the sum-of-inner-products test.

    Args:
        gamma (float): Threshold parameter in (0, 4 rho^2).
        rho (float): Correlation in (0, 1).

    Returns:
        Tuple[float, float]: (G_FA(gamma), G_MD(gamma)).

    Raises:
        ParameterError: If gamma or rho is out of range.
    """
    if not 0.0 < rho < 1.0:
        raise ParameterError(f'rho must be in (0, 1), got {rho}')
    if not 0.0 < gamma < 4.0 * rho ** 2:
        raise ParameterError(f'gamma must be in (0, 4 rho^2) = (0, {4.0 * rho ** 2:.6g}), got {gamma}')
    root = math.sqrt(1.0 + gamma)
    g_fa = root - 1.0 - math.log((1.0 + root) / 2.0)
    one_minus = 1.0 - rho ** 2
    root_md = math.sqrt(one_minus ** 2 + gamma)
    g_md = (root_md - math.sqrt(rho ** 2 * gamma)) / one_minus - 1.0 - math.log((one_minus + root_md) / 2.0)
    return g_fa, g_md


def sop_threshold(n: int, d: int, gamma: float) -> float:
    """
    Decision threshold t = sqrt(gamma) * d * n / 2 of the sum-of-inner-products test.
    """
    _check_n(n)
    if d < 1:
        raise ParameterError(f'd must be at least 1, got {d}')
    if gamma <= 0.0:
        raise ParameterError(f'gamma must be positive, got {gamma}')
    return math.sqrt(gamma) * d * n / 2.0


def sop_bounds(n: int, d: int, gamma: float, rho: float) -> Tuple[float, float]:
    """
    Chernoff bounds exp(-d G_FA / 2) and exp(-d G_MD / 2) of the sum-of-inner-products test.

    The bounds depend on n only through the threshold t = sqrt(gamma) * d * n / 2.
    """
    _check_n(n)
    if d < 1:
        raise ParameterError(f'd must be at least 1, got {d}')
    g_fa, g_md = sop_g_functions(gamma, rho)
    return math.exp(-d * g_fa / 2.0), math.exp(-d * g_md / 2.0)


@dataclass(frozen=True)
class BoundParams:
    """
    Point of a bound evaluation or the base of a bound sweep.
    """
    n: int
    d: int
    rho: float
    theta: float
    test_beta: float
    k_max: int = DEFAULT_K_MAX

    def __post_init__(self) -> None:
        _check_n(self.n, 2)
        if self.d < 2:
            raise ParameterError(f'unsupported dimension d={self.d}, the cap probabilities need d >= 2')
        if not 0.0 < self.rho < 1.0:
            raise ParameterError(f'rho must be in (0, 1), got {self.rho}')
        if not 0.0 <= self.theta <= 1.0:
            raise ParameterError(f'theta must be in [0, 1], got {self.theta}')
        if not 0.0 < self.test_beta <= 1.0:
            raise ParameterError(f'test_beta must be in (0, 1], got {self.test_beta}')


@dataclass(frozen=True)
class BoundReport:
    """
    All bounds at one parameter point.

    The clipped values are probabilities in [0, 1]; the *_raw fields keep the unclipped
    right-hand sides, which may exceed 1.
    """
    params: BoundParams
    p: float
    q: float
    n2q: float
    fa_bound: float
    fa_bound_raw: float
    argmin_k: int
    md_bound: float
    pe1_upper: float
    pe1_upper_raw: float
    pe1_lower: float
    pe2_upper: float
    pe2_upper_raw: float

    def as_row(self) -> Dict[str, Any]:
        """
        Returns the report keyed by the bound sweep CSV columns.
        """
        values = (self.params.n, self.params.d, self.params.rho, self.params.theta, self.params.test_beta, self.p, self.q,
                  self.fa_bound, self.argmin_k, self.md_bound, self.pe1_lower, self.pe1_upper, self.pe2_upper)
        return dict(zip(BOUND_COLUMNS, values))


def bound_report(n: int, d: int, rho: float, theta: float, test_beta: float, k_max: int = DEFAULT_K_MAX,
                 rel_tol: float = DEFAULT_REL_TOL) -> BoundReport:
    """
    Evaluates P, Q and every bound of the threshold-count test and of Threshold-and-Clean.

    Args:
        n (int): Number of rows, at least 2.
        d (int): Number of features, at least 2.
        rho (float): Correlation in (0, 1).
        theta (float): Dot threshold in [0, 1].
        test_beta (float): Threshold factor of the detector in (0, 1].
        k_max (int): Truncation of the minimization in the type-I bound.
        rel_tol (float): Relative tolerance used for P.

    Returns:
        BoundReport: The report.
    """
    params = BoundParams(n=n, d=d, rho=rho, theta=theta, test_beta=test_beta, k_max=k_max)
    probs = cached_local_probs(d, rho, theta, rel_tol)
    p, q = probs.p, probs.q
    fa_raw, argmin_k = type1_bound_from_probs(n, p, q, test_beta, k_max, clip=False)
    report = BoundReport(params=params, p=p, q=q, n2q=n * n * q, fa_bound=min(fa_raw, 1.0), fa_bound_raw=fa_raw, argmin_k=argmin_k,
                         md_bound=type2_bound_from_probs(n, p, q, test_beta),
                         pe1_upper=pe1_upper(n, p, q), pe1_upper_raw=pe1_upper(n, p, q, clip=False), pe1_lower=pe1_lower(n, p, q),
                         pe2_upper=pe2_upper(n, p, q), pe2_upper_raw=pe2_upper(n, p, q, clip=False))
    LOG.debug('bound report %s', report)
    return report


def bound_sweep(base: BoundParams, axis: str, grid: Sequence[float], rel_tol: float = DEFAULT_REL_TOL) -> Iterator[BoundReport]:
    """
    Evaluates bound_report along one axis of the parameter space.

    Args:
        base (BoundParams): Values of the parameters that are not swept.
        axis (str): One of beta, theta, rho, n, d.
        grid (Sequence[float]): Values of the swept parameter, in output order.
        rel_tol (float): Relative tolerance used for P.

    Yields:
        BoundReport: One report per grid value.

    Raises:
        ParameterError: If the axis is unknown.
    """
    if axis not in BOUND_SWEEP_AXES:
        raise ParameterError(f'unknown sweep axis {axis!r}, expected one of {", ".join(BOUND_SWEEP_AXES)}')
    field_name = 'test_beta' if axis == 'beta' else axis
    for value in grid:
        if axis in ('n', 'd'):
            value = int(value)
        point = replace(base, **{field_name: value})
        yield bound_report(point.n, point.d, point.rho, point.theta, point.test_beta, point.k_max, rel_tol)


def sop_bound_sweep(n: int, d: int, rho: float, grid: Sequence[float]) -> Iterator[Dict[str, float]]:
    """
    Traces the error exponent trade-off of the sum-of-inner-products test over gamma.

    Yields:
        Dict[str, float]: gamma, the threshold t and both bounds for each grid value.
    """
    for gamma in grid:
        fa, md = sop_bounds(n, d, gamma, rho)
        yield {'n': n, 'd': d, 'rho': rho, 'gamma': gamma, 't': sop_threshold(n, d, gamma), 'fa_bound': fa, 'md_bound': md}


def _success_rate_at(n: int, d: int, rho: float, theta: float, rel_tol: float) -> float:
    probs = cached_local_probs(d, rho, theta, rel_tol)
    return expected_success_rate(n, probs.p, probs.q)


def tune_theta(n: int, d: int, rho: float, target_rate: float, side: str = 'high', rel_tol: float = DEFAULT_REL_TOL,
               xtol: float = 1e-10) -> float:
    """
    Finds the dot threshold at which Threshold-and-Clean attains an averaged success rate.

    The success rate P (1-Q)^(2(n-1)) is unimodal in theta: low thresholds lose pairs to the
    cleaning, high thresholds lose them to the threshold. Each side of the peak has one root.

    Args:
        n (int): Number of rows.
        d (int): Number of features.
        rho (float): Correlation in (0, 1).
        target_rate (float): Required success rate in (0, 1).
        side (str): 'high' for the root above the peak, 'low' for the root below it.
        rel_tol (float): Relative tolerance used for P.
        xtol (float): Absolute tolerance on theta.

    Returns:
        float: The threshold.

    Raises:
        ParameterError: If the target is not attainable on the requested side.
    """
    if not 0.0 < target_rate < 1.0:
        raise ParameterError(f'target_rate must be in (0, 1), got {target_rate}')
    if side not in ('high', 'low'):
        raise ParameterError(f"side must be 'high' or 'low', got {side!r}")

    def gap(theta: float) -> float:
        return _success_rate_at(n, d, rho, theta, rel_tol) - target_rate

    peak = optimize.minimize_scalar(lambda theta: -_success_rate_at(n, d, rho, theta, rel_tol), bounds=(0.0, 1.0), method='bounded',
                                    options={'xatol': 1e-8})
    peak_theta = float(peak.x)
    peak_rate = -float(peak.fun)
    if peak_rate < target_rate:
        raise ParameterError(f'success rate {target_rate} is not attainable, the maximum is {peak_rate:.6g} at theta={peak_theta:.6g}')
    if side == 'high':
        low, high = peak_theta, 1.0
    else:
        low, high = 0.0, peak_theta
        if gap(low) > 0.0:
            raise ParameterError(f'success rate {target_rate} is exceeded for every theta below the peak at {peak_theta:.6g}')
    theta = float(optimize.brentq(gap, low, high, xtol=xtol))
    LOG.info('theta=%.10g attains success rate %s (n=%d, d=%d, rho=%s, side=%s)', theta, target_rate, n, d, rho, side)
    return theta


def tc_error_bound_at_rate(n: int, d: int, rho: float, target_rate: float, side: str = 'high',
                           rel_tol: float = DEFAULT_REL_TOL) -> Tuple[float, float]:
    """
    Mismatch bound of Threshold-and-Clean with theta tuned to a required success rate.

    Returns:
        Tuple[float, float]: The tuned theta and pe2_upper at that theta.
    """
    theta = tune_theta(n, d, rho, target_rate, side=side, rel_tol=rel_tol)
    probs = cached_local_probs(d, rho, theta, rel_tol)
    return theta, pe2_upper(n, probs.p, probs.q)

