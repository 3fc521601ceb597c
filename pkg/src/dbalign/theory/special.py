"""
Module implements the local probabilities of a single pair of normalized Gaussian vectors.

Q(d, theta) is the probability that two independent pairs cross the threshold theta, i.e. the
mass of a hyper-spherical cap. P(d, rho, theta) is the same probability for a pair with
correlation rho. It is written as an integral over the F(d, d) distributed ratio
U = |X|^2 / |Z|^2 with three pieces split at

    alpha(rho)        = (1 - rho^2) / rho^2
    split_beta(rho, theta) = (1 - rho^2) / (rho^2 (1 - theta^2))

The second split point is called split_beta here to keep it apart from test_beta, the
detection threshold factor of the threshold-count test.
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from dbalign.errors import ParameterError, NumericalError

if TYPE_CHECKING:
    from typing import List, Callable

LOG: logging.Logger = logging.getLogger("dbalign.theory")
LOG_NUMERIC: logging.Logger = logging.getLogger("dbalign.theory-numeric-debug")

DEFAULT_REL_TOL: float = 1e-10
DEFAULT_ABS_TOL: float = 1e-14
DEFAULT_LIMIT: int = 200

# half-width of the integration window around the Beta(d/2, d/2) mode, in standard deviations
_WINDOW_SDS: float = 40.0


@dataclass(frozen=True)
class LocalProbs:
    """
    Local detect and false-alarm probabilities of a threshold.

    Attributes:
        p (float): P(d, rho, theta), probability that a matched pair crosses theta.
        q (float): Q(d, theta), probability that an independent pair crosses theta.
    """
    p: float
    q: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0 or not 0.0 <= self.q <= 1.0:
            raise ParameterError(f'local probabilities must be in [0, 1], got p={self.p}, q={self.q}')


def _check_dimension(d: int) -> None:
    if d < 2:
        raise ParameterError(f'unsupported dimension d={d}, the cap probabilities need d >= 2')


def cap_probability(d: int, s0: float) -> float:
    """
    Returns Pr{S >= s0} for S the cosine between two independent uniform directions in d dimensions.

    S has density (1 - s^2)^((d-3)/2) / B((d-1)/2, 1/2) on [-1, 1]. For s0 >= 0 the tail is
    1/2 * I_{1-s0^2}((d-1)/2, 1/2), negative thresholds follow by symmetry.

    Args:
        d (int): Dimension, at least 2.
        s0 (float): Threshold; values outside [-1, 1] saturate.

    Returns:
        float: The cap probability.
    """
    _check_dimension(d)
    if s0 >= 1.0:
        return 0.0
    if s0 <= -1.0:
        return 1.0
    tail = 0.5 * float(special.betainc((d - 1) / 2.0, 0.5, 1.0 - s0 * s0))
    if s0 >= 0.0:
        return tail
    return 1.0 - tail


def q_prob(d: int, theta: float) -> float:
    """
    Local false-alarm probability Q(d, theta) = 1/2 * B(1 - theta^2; (d-1)/2, 1/2) / B((d-1)/2, 1/2).

    The ratio is evaluated as the regularized incomplete beta function, whose prefactor is
    computed from log-gamma values, so large d stays finite.

    Args:
        d (int): Dimension, at least 2.
        theta (float): Threshold in [0, 1]; the end points are the limits 1/2 and 0.

    Returns:
        float: Q(d, theta).

    Raises:
        ParameterError: If d < 2 or theta is outside [0, 1].
    """
    _check_dimension(d)
    if not 0.0 <= theta <= 1.0:
        raise ParameterError(f'theta must be in [0, 1], got {theta}')
    return cap_probability(d, theta)


def split_points(rho: float, theta: float) -> tuple[float, float]:
    """
    Returns (alpha(rho), split_beta(rho, theta)) where the integrand of P changes form.

    split_beta is infinite for theta = 1.
    """
    alpha = (1.0 - rho ** 2) / rho ** 2
    if theta >= 1.0:
        return alpha, math.inf
    return alpha, (1.0 - rho ** 2) / (rho ** 2 * (1.0 - theta ** 2))


def _boundaries(u: float, rho: float, theta: float) -> tuple[float, float]:
    """
    Returns (F1(u), F2(u)), the cosines where the event X~^T Y~ >= theta starts and ends.
    """
    slope = rho * (1.0 - theta ** 2) / math.sqrt(1.0 - rho ** 2)
    radicand = max(0.0, 1.0 - rho ** 2 * (1.0 - theta ** 2) / (1.0 - rho ** 2) * u)
    centre = -slope * math.sqrt(u)
    spread = theta * math.sqrt(radicand)
    return centre - spread, centre + spread


def _integrate(function: Callable[[float], float], low: float, high: float, density: stats.rv_continuous, d: int,
               rel_tol: float, abs_tol: float, limit: int) -> float:
    """
    Integrates function(t) * density(t) over [low, high] with adaptive Gauss-Kronrod quadrature.

    The Beta(d/2, d/2) density concentrates around 1/2 with standard deviation about
    1/(2 sqrt(d)); the interval is cut to a window around the mode and break points are
    placed inside it so the quadrature cannot step over the mass.
    """
    spread = 0.5 / math.sqrt(d + 1.0)
    low = max(low, 0.5 - _WINDOW_SDS * spread)
    high = min(high, 0.5 + _WINDOW_SDS * spread)
    if high <= low:
        return 0.0
    points: List[float] = [0.5 + k * spread for k in (-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0)]
    points = [point for point in points if low < point < high]

    def integrand(t: float) -> float:
        return function(t) * float(density.pdf(t))

    result = integrate.quad(integrand, low, high, epsabs=abs_tol, epsrel=rel_tol, limit=limit, points=points or None, full_output=1)
    value, error = float(result[0]), float(result[1])
    LOG_NUMERIC.debug('quad on [%.6g, %.6g]: value=%.17g error=%.3g evaluations=%s', low, high, value, error, result[2]['neval'])
    if len(result) > 3:
        tolerance = max(abs_tol, rel_tol * abs(value))
        # roundoff warnings with an error estimate inside the tolerance are accepted
        if error > max(tolerance, 1e-8 * abs(value), 1e-15):
            raise NumericalError(f'quadrature on [{low:.6g}, {high:.6g}] did not converge: {result[3]} (error estimate {error:.3g})',
                                 achieved=error)
        LOG_NUMERIC.debug('quad reported "%s" but reached error %.3g', result[3], error)
    return value


def p_prob(d: int, rho: float, theta: float, rel_tol: float = DEFAULT_REL_TOL, abs_tol: float = DEFAULT_ABS_TOL,
           limit: int = DEFAULT_LIMIT) -> float:
    """
    Local detect probability P(d, rho, theta) of a matched pair.

    With U ~ F(d, d) and S the cosine between X and the noise Z,

        P = int_0^alpha Pr{S >= F2(u)} f_U(u) du
          + int_alpha^split_beta (Pr{S <= F1(u)} + Pr{S >= F2(u)}) f_U(u) du
          + int_split_beta^inf f_U(u) du.

    The inner probabilities are cap probabilities (incomplete beta), the outer integrals run
    in t = u / (1 + u), where U becomes Beta(d/2, d/2), and the last term is the Beta tail
    I_{1 - t_beta}(d/2, d/2), never a truncated infinite range.

    Args:
        d (int): Dimension, at least 2.
        rho (float): Correlation in (0, 1).
        theta (float): Threshold in [0, 1].
        rel_tol (float): Relative tolerance of the quadrature.
        abs_tol (float): Absolute tolerance of the quadrature.
        limit (int): Maximum number of adaptive subintervals.

    Returns:
        float: P(d, rho, theta).

    Raises:
        ParameterError: If a parameter is out of range.
        NumericalError: If the quadrature does not converge.
    """
    _check_dimension(d)
    if not 0.0 < rho < 1.0:
        raise ParameterError(f'rho must be in (0, 1), got {rho}')
    if not 0.0 <= theta <= 1.0:
        raise ParameterError(f'theta must be in [0, 1], got {theta}')
    if theta >= 1.0:
        return 0.0

    density = stats.beta(d / 2.0, d / 2.0)
    t_alpha = 1.0 - rho ** 2
    # 1 - t_beta in closed form keeps the tail accurate when t_beta is close to 1
    tail_point = rho ** 2 * (1.0 - theta ** 2) / (1.0 - rho ** 2 * theta ** 2)
    t_beta = 1.0 - tail_point

    def inner_low(t: float) -> float:
        u = t / (1.0 - t)
        _, upper = _boundaries(u, rho, theta)
        return cap_probability(d, upper)

    def inner_high(t: float) -> float:
        u = t / (1.0 - t)
        lower, upper = _boundaries(u, rho, theta)
        return cap_probability(d, -lower) + cap_probability(d, upper)

    first = _integrate(inner_low, 0.0, t_alpha, density, d, rel_tol, abs_tol, limit)
    second = _integrate(inner_high, t_alpha, t_beta, density, d, rel_tol, abs_tol, limit) if t_beta > t_alpha else 0.0
    tail = float(special.betainc(d / 2.0, d / 2.0, tail_point))
    value = first + second + tail
    LOG.debug('P(d=%d, rho=%s, theta=%s) = %.12g (pieces %.6g, %.6g, %.6g)', d, rho, theta, value, first, second, tail)
    return float(np.clip(value, 0.0, 1.0))


def local_probs(d: int, rho: float, theta: float, rel_tol: float = DEFAULT_REL_TOL) -> LocalProbs:
    """
    Returns P(d, rho, theta) and Q(d, theta) together.
    """
    return LocalProbs(p=p_prob(d, rho, theta, rel_tol=rel_tol), q=q_prob(d, theta))
