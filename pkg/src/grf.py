import logging
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .spectra import (
    DomainError,
    Spectrum,
    eta_max,
    interval_boundaries,
    interval_index,
    intervals,
    locate,
)


@dataclass(frozen=True)
class WaterfillSolution:
    """
    Optimal allocation of the water-filling problem
    max sum log(1 - p_i) s.t. sum g_i p_i = x, 0 <= p_i <= 1.
    """

    p: tuple[float, ...]
    s: int
    mu_inv: float
    j_value: float


@dataclass(frozen=True)
class GrfPoint:
    x: float
    neg_grf: float
    k: int
    upper_bound: float


@dataclass(frozen=True)
class GrfCurve:
    points: tuple[GrfPoint, ...]

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[GrfPoint]:
        return iter(self.points)

    @property
    def xs(self) -> np.ndarray:
        return np.array([p.x for p in self.points], dtype=np.float64)

    @property
    def neg_grf(self) -> np.ndarray:
        return np.array([p.neg_grf for p in self.points], dtype=np.float64)

    @property
    def upper_bounds(self) -> np.ndarray:
        return np.array([p.upper_bound for p in self.points], dtype=np.float64)


def _partial_sum(g: np.ndarray, k: int) -> float:
    total = 0.0
    for i in range(k):
        total += float(g[i])
    return total


def _log_term(g: np.ndarray, k: int, a: float) -> float:
    """k * log((S_k - a) / k) - sum_{i<=k} log g_i, -inf when S_k - a <= 0."""
    head = _partial_sum(g, k) - a
    if head <= 0:
        return -math.inf
    return k * math.log(head / k) - float(np.sum(np.log(g[:k])))


def _waterfill(g: np.ndarray, boundaries: tuple[float, ...], x: float) -> WaterfillSolution:
    if not 0 < x <= boundaries[-1]:
        raise DomainError(f"x must lie in (0, {boundaries[-1]!r}], got {x!r}")
    r = len(g)
    if x == boundaries[-1]:
        active = int(np.count_nonzero(g > 0))
        p = tuple(1.0 if i < active else 0.0 for i in range(r))
        return WaterfillSolution(p=p, s=active, mu_inv=0.0, j_value=-math.inf)
    k = locate(boundaries, x)
    mu_inv = (_partial_sum(g, k) - x) / k
    p = [0.0] * r
    for i in range(k):
        p[i] = 1.0 - mu_inv / float(g[i])
    return WaterfillSolution(
        p=tuple(p), s=k, mu_inv=mu_inv, j_value=_log_term(g, k, x)
    )


def waterfill_gains(gains: Iterable[float], x: float) -> WaterfillSolution:
    """
    Water-filling for an arbitrary non-increasing, non-negative gain vector.
    Raises DomainError when x is not in (0, sum(gains)].
    """
    g = np.asarray(list(gains), dtype=np.float64)
    if np.any(g < 0) or np.any(np.diff(g) > 0):
        raise DomainError("Gains must be non-negative and sorted in non-increasing order")
    return _waterfill(g, interval_boundaries(g), x)


def waterfill(s: Spectrum, x: float) -> WaterfillSolution:
    """
    Solve max sum log(1 - p_i) s.t. sum lambda_i^2 p_i = x.
    The active count s(x) is the index of the interval containing x and the
    water level is 1/mu* = (sum_{i<=s} lambda_i^2 - x) / s.
    """
    return _waterfill(s.squared, intervals(s).boundaries, x)


def kkt_residual(solution: WaterfillSolution, s: Spectrum) -> float:
    """
    Largest violation of 1/(1 - p_i) = lambda_i^2 / mu_inv on the active set
    and of lambda_i^2 <= mu_inv on the inactive set.
    """
    if solution.mu_inv <= 0:
        raise DomainError("KKT conditions are undefined at full saturation")
    g = s.squared
    residual = 0.0
    for i, p_i in enumerate(solution.p):
        if i < solution.s:
            residual = max(residual, abs(1.0 / (1.0 - p_i) - g[i] / solution.mu_inv))
        else:
            residual = max(residual, g[i] - solution.mu_inv, abs(p_i))
    return float(residual)


def inactive_multipliers(solution: WaterfillSolution, s: Spectrum) -> tuple[float, ...]:
    """delta_i = 1 - mu* lambda_i^2 for every inactive index i."""
    g = s.squared
    return tuple(1.0 - float(g[i]) / solution.mu_inv for i in range(solution.s, s.r))


def upper_bound(s: Spectrum, x: float) -> float:
    """Upper bound log(1 - |x| / eta_max) of -I_eta(x), valid for tensors of any order."""
    emax = eta_max(s)
    a = abs(x)
    if not a < emax:
        raise DomainError(f"|x| < eta_max = {emax!r} violated by x = {x!r}")
    return math.log1p(-a / emax)


def grf(s: Spectrum, x: float) -> GrfPoint:
    """
    Evaluate -I_eta(x) = 2 sum_k log([(S_k - |x|)/k]^k / prod_{i<=k} lambda_i^2) 1_{I_k}(|x|).
    x = 0 is the continuous extension (value 0, k = 0); |x| = eta_max gives -inf.
    """
    emax = eta_max(s)
    a = abs(x)
    if not a <= emax:
        raise DomainError(f"|x| <= eta_max = {emax!r} violated by x = {x!r}")
    if a == 0:
        logging.debug("GRF evaluated at the boundary x = 0")
        return GrfPoint(x=x, neg_grf=0.0, k=0, upper_bound=0.0)
    if a == emax:
        return GrfPoint(x=x, neg_grf=-math.inf, k=s.r, upper_bound=-math.inf)
    k = interval_index(s, a)
    neg = 2.0 * _log_term(s.squared, k, a)
    return GrfPoint(x=x, neg_grf=neg, k=k, upper_bound=math.log1p(-a / emax))


def neg_grf_array(s: Spectrum, xs: np.ndarray) -> np.ndarray:
    """
    Vectorised -I_eta over an array. |x| beyond eta_max by more than a
    relative 1e-12 raises DomainError; smaller overshoots are rounding and
    are clamped to eta_max.
    """
    emax = eta_max(s)
    a = np.abs(np.asarray(xs, dtype=np.float64))
    if a.size and np.max(a) > emax * (1.0 + 1e-12):
        raise DomainError(f"|x| <= eta_max = {emax!r} violated by {float(np.max(a))!r}")
    a = np.minimum(a, emax)
    g = s.squared
    bounds = np.asarray(intervals(s).boundaries)
    k = np.clip(np.searchsorted(bounds, a, side="left"), 1, s.r)
    head = np.cumsum(g)[k - 1] - a
    log_prod = np.cumsum(np.log(g))[k - 1]
    out = np.full(a.shape, -np.inf)
    inside = head > 0
    out[inside] = 2.0 * (k[inside] * np.log(head[inside] / k[inside]) - log_prod[inside])
    out[a == 0] = 0.0
    return out


def grf_curve(s: Spectrum, x_grid: Iterable[float]) -> GrfCurve:
    """One GrfPoint per grid value, grid order preserved."""
    return GrfCurve(tuple(grf(s, float(x)) for x in x_grid))


def uniform_grid(s: Spectrum, points: int) -> np.ndarray:
    """points values evenly spread over the open interval (0, eta_max)."""
    emax = eta_max(s)
    return np.linspace(0.0, emax, points + 2)[1:-1]


def gap_function(s: Spectrum, x: float) -> float:
    """2x - I_eta(x), the exponent governing E_1 through Varadhan's lemma."""
    return 2.0 * x + grf(s, x).neg_grf


def stationary_points(s: Spectrum) -> list[tuple[int, float]]:
    """
    Interior maximisers x_k* = S_k - k of 2x - I_eta(x) that fall inside I_k.
    Empty when lambda_1 <= 1.
    """
    g = s.squared
    bounds = intervals(s).boundaries
    found = []
    for k in range(1, s.r + 1):
        lo, hi = bounds[k - 1], bounds[k]
        candidate = _partial_sum(g, k) - k
        if lo < candidate < hi:
            found.append((k, candidate))
    return found


def rate_gap_sup(s: Spectrum, epsilon: float) -> float:
    """
    sup_{x in (epsilon, eta_max]} (2x - I_eta(x)), computed interval by interval.
    On I_k the map has derivative 2 - 2k/(S_k - x); its sup is reached at the
    stationary point S_k - k when it lies in I_k, otherwise at an endpoint.
    """
    emax = eta_max(s)
    if not 0 < epsilon < emax:
        raise DomainError(f"0 < epsilon < eta_max = {emax!r} violated by epsilon = {epsilon!r}")
    g = s.squared
    bounds = intervals(s).boundaries
    best = -math.inf
    for k in range(1, s.r + 1):
        lo, hi = max(bounds[k - 1], epsilon), bounds[k]
        if hi <= lo:
            continue
        candidates = [lo, hi]
        stationary = _partial_sum(g, k) - k
        if lo < stationary < hi:
            candidates.append(stationary)
        for x in candidates:
            value = 2.0 * x + 2.0 * _log_term(g, k, x)
            best = max(best, value)
    return best


def moment_bound(s: Spectrum) -> float:
    """Asymptotic bound (1 / (1 - lambda_1^4))^{r^2} on the second moment of the likelihood ratio."""
    if not s.top < 1:
        raise DomainError(f"lambda_1 < 1 violated: lambda_1 = {s.top!r}")
    return (1.0 / (1.0 - s.top**4)) ** (s.r * s.r)


def e2_beta(s: Spectrum, delta: float) -> float:
    """beta = (sqrt(r)/2) delta (2 + delta) lambda_1^2."""
    return 0.5 * math.sqrt(s.r) * delta * (2.0 + delta) * s.top**2


def e2_prime_bound(s: Spectrum, delta: float) -> float:
    """
    Bound (1 / ((1 - beta)^2 - lambda_1^4))^{r^2} on the concentrated part of E_2.
    Raises DomainError naming the first violated inequality.
    """
    if not s.top < 1:
        raise DomainError(f"lambda_1 < 1 violated: lambda_1 = {s.top!r}")
    if not 0 < delta < 1:
        raise DomainError(f"0 < delta < 1 violated: delta = {delta!r}")
    beta = e2_beta(s, delta)
    if not beta < 1:
        raise DomainError(f"beta < 1 violated: beta = {beta!r}")
    margin = (1.0 - beta) ** 2 - s.top**4
    if not margin > 0:
        raise DomainError(f"(1 - beta)^2 > lambda_1^4 violated: margin = {margin!r}")
    return (1.0 / margin) ** (s.r * s.r)


def e2_second_exponent(delta: float, epsilon: float) -> float:
    """Exponent 2 epsilon - delta^2 / 2 of the tail part of E_2; negative iff delta^2 > 4 epsilon."""
    return 2.0 * epsilon - 0.5 * delta * delta
