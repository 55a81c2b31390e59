"""
Monte Carlo drivers: envelope cloud, GLRT detection study, second-moment
estimate and the oracle verification sweep.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple

import numpy as np
from scipy import linalg, special

from .constants import (
    CHUNK_SIZE,
    DEFAULT_GRID_POINTS,
    DETECTION_EDGE,
    DETECTION_MARGIN,
    ENVELOPE_TOL,
    LOG_FLOAT_MAX,
    MAX_CHUNK_ENTRIES,
    MAX_DETECTION_N,
    ORACLE_TOL,
    PROBLEM1_BUDGET,
    PROBLEM1_RESTARTS,
    PROBLEM3_GRID_STEPS,
    VERIFY_POINTS,
    VERIFY_X_FRACTION,
)
from .grf import (
    GrfCurve,
    WaterfillSolution,
    e2_prime_bound,
    grf,
    grf_curve,
    inactive_multipliers,
    kkt_residual,
    moment_bound,
    neg_grf_array,
    rate_gap_sup,
    uniform_grid,
    waterfill,
)
from .oracle import (
    solve_problem1,
    solve_problem2_permutations,
    solve_problem3_grid,
    solve_problem4_search,
)
from .sampling import (
    DimensionError,
    EtaSample,
    RngStream,
    build_spike,
    gram_deviation_batch,
    sample_block_batch,
    sample_eta_batch,
    sample_gaussian,
)
from .spectra import DomainError, Spectrum, eta_max, intervals
from .utils import chunk_sizes, map_chunks


class VerificationError(Exception):
    """Raised when an oracle disagrees with a closed form beyond tolerance."""


class Hypothesis(str, Enum):
    H0 = "H0"
    H1 = "H1"


@dataclass(frozen=True)
class WaterfillReport:
    x: float
    solution: WaterfillSolution
    kkt_residual: float
    multipliers: tuple[float, ...]


@dataclass(frozen=True)
class EnvelopeReport:
    """
    Cloud of eta samples against the closed-form envelope -I_eta and the
    cruder bound log(1 - |x|/eta_max).
    """

    xs: np.ndarray
    ys: np.ndarray
    curve: GrfCurve
    violations: int
    max_gap: float
    bound_gap: float

    @property
    def num_samples(self) -> int:
        return int(self.xs.shape[0])

    @property
    def samples(self) -> list[EtaSample]:
        return [EtaSample(float(a), float(b)) for a, b in zip(self.xs, self.ys)]

    @property
    def upper_curve(self) -> np.ndarray:
        return self.curve.upper_bounds


@dataclass(frozen=True)
class DetectionTrial:
    trial: int
    hypothesis: Hypothesis
    statistic: float
    decision: Hypothesis
    n: int


@dataclass(frozen=True)
class DetectionSummary:
    false_alarm: float
    miss: float
    power: float
    threshold: float
    trials: int
    mean_h0: float
    std_h0: float
    mean_h1: float


class DetectionReport(NamedTuple):
    trials: list[DetectionTrial]
    summary: DetectionSummary


@dataclass(frozen=True)
class MomentEstimate:
    n: int
    samples: int
    mean: float
    e1_part: float
    e2_part: float
    epsilon: float
    clamped: int
    log_mean: float


@dataclass(frozen=True)
class MomentReport:
    estimate: MomentEstimate
    bounds: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class VerifyReport:
    records: list[dict]
    tolerance: float

    @property
    def max_gap(self) -> float:
        gaps = [r["gap"] for r in self.records]
        return max(gaps) if gaps else 0.0

    @property
    def passed(self) -> bool:
        return all(r["gap"] < self.tolerance and r["converged"] for r in self.records)


@dataclass(frozen=True)
class GramTailReport:
    n: int
    r: int
    delta: float
    trials: int
    exceedances: int
    reference: float

    @property
    def rate(self) -> float:
        return self.exceedances / self.trials if self.trials else 0.0

    @property
    def constant(self) -> float:
        """Empirical rate over exp(-n delta^2 / 2), the unspecified constant of the tail bound."""
        return self.rate / self.reference if self.reference > 0 else math.inf


def run_waterfill(s: Spectrum, x: float) -> WaterfillReport:
    solution = waterfill(s, x)
    if solution.mu_inv > 0:
        residual = kkt_residual(solution, s)
        multipliers = inactive_multipliers(solution, s)
    else:
        residual, multipliers = 0.0, ()
    return WaterfillReport(x, solution, residual, multipliers)


def _chunk_length(n: int, r: int) -> int:
    return max(1, min(CHUNK_SIZE, MAX_CHUNK_ENTRIES // (n * r)))


def _eta_chunk(task: tuple[Spectrum, int, int, RngStream]) -> tuple[np.ndarray, np.ndarray]:
    s, n, count, rng = task
    return sample_eta_batch(s, n, count, rng)


def _draw_eta(s: Spectrum, n: int, count: int, rng: RngStream, jobs: int) -> tuple[np.ndarray, np.ndarray]:
    sizes = chunk_sizes(count, _chunk_length(n, s.r))
    tasks = [(s, n, size, rng.child(i)) for i, size in enumerate(sizes)]
    parts = map_chunks(_eta_chunk, tasks, jobs)
    if not parts:
        return np.empty(0), np.empty(0)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def run_envelope(
    s: Spectrum,
    n_block: int,
    num_samples: int,
    grid_points: int = DEFAULT_GRID_POINTS,
    rng: RngStream | None = None,
    jobs: int = 1,
) -> EnvelopeReport:
    """
    Draw num_samples pairs (x, y) at block dimension n_block and count the
    samples lying above -I_eta(|x|) by more than the envelope tolerance.
    """
    if n_block < s.r:
        raise DimensionError(f"Expected n_block >= r, got n_block={n_block}, r={s.r}")
    if num_samples < 0:
        raise ValueError(f"num_samples must be non-negative, got {num_samples}")
    rng = rng or RngStream(0)
    xs, ys = _draw_eta(s, n_block, num_samples, rng, jobs)
    curve = grf_curve(s, uniform_grid(s, grid_points))
    bound_gap = float(np.max(curve.upper_bounds - curve.neg_grf)) if len(curve) else 0.0
    if num_samples == 0:
        return EnvelopeReport(xs, ys, curve, 0, -math.inf, bound_gap)
    envelope = neg_grf_array(s, xs)
    with np.errstate(invalid="ignore"):
        gaps = np.where(np.isneginf(ys), -np.inf, ys - envelope)
    violations = int(np.count_nonzero(gaps > ENVELOPE_TOL))
    if violations:
        logging.warning(f"{violations} samples lie above the envelope")
    return EnvelopeReport(xs, ys, curve, violations, float(np.max(gaps)), bound_gap)


def _noise_statistic(n: int, rng: RngStream) -> float:
    z = sample_gaussian(n, n, 1.0 / n, rng)
    return float(linalg.svdvals(z)[0])


def _detection_task(task: tuple[Hypothesis, Spectrum, int, RngStream]) -> float:
    hypothesis, s, n, rng = task
    if hypothesis is Hypothesis.H0:
        return _noise_statistic(n, rng)
    y = build_spike(s, n, rng.child(0)) + sample_gaussian(n, n, 1.0 / n, rng.child(1))
    return float(linalg.svdvals(y)[0])


def _check_detection(n: int, r: int, trials: int, max_n: int) -> None:
    if n < r:
        raise DimensionError(f"Expected n >= r, got n={n}, r={r}")
    if n > max_n:
        raise DimensionError(f"n <= {max_n} violated: n = {n}")
    if trials < 1:
        raise DomainError(f"trials >= 1 violated: trials = {trials}")


def calibrate_threshold(
    n: int,
    trials: int,
    quantile: float,
    rng: RngStream,
    jobs: int = 1,
) -> float:
    """Empirical H0 quantile of lambda_1(Z)."""
    if not 0 < quantile < 1:
        raise DomainError(f"0 < quantile < 1 violated: quantile = {quantile!r}")
    tasks = [(Hypothesis.H0, None, n, rng.child(t)) for t in range(trials)]
    stats = np.array(map_chunks(_detection_task, tasks, jobs))
    return float(np.quantile(stats, quantile))


def run_detection(
    s: Spectrum,
    n: int,
    trials: int,
    threshold: float | None = None,
    rng: RngStream | None = None,
    jobs: int = 1,
    quantile: float | None = None,
    max_n: int = MAX_DETECTION_N,
) -> DetectionReport:
    """
    Run `trials` GLRT trials under each hypothesis. Y = Z under H0 and
    Y = X_0 + Z under H1 with fresh Haar directions; H1 is decided iff
    lambda_1(Y) > threshold. Without a threshold the default edge 2 + 0.05 is
    used, or the H0 quantile when quantile is given.
    """
    _check_detection(n, s.r, trials, max_n)
    rng = rng or RngStream(0)
    if threshold is None:
        if quantile is not None:
            threshold = calibrate_threshold(n, trials, quantile, rng.child(2), jobs)
            logging.info(f"Calibrated threshold {threshold:.6g} at quantile {quantile:g}")
        else:
            threshold = DETECTION_EDGE + DETECTION_MARGIN
    tasks = [(Hypothesis.H0, s, n, rng.child(0).child(t)) for t in range(trials)]
    tasks += [(Hypothesis.H1, s, n, rng.child(1).child(t)) for t in range(trials)]
    stats = map_chunks(_detection_task, tasks, jobs)
    records = []
    for (hypothesis, _, _, _), stat in zip(tasks, stats):
        decision = Hypothesis.H1 if stat > threshold else Hypothesis.H0
        index = len(records) % trials
        records.append(DetectionTrial(index, hypothesis, stat, decision, n))
    h0 = np.array(stats[:trials])
    h1 = np.array(stats[trials:])
    false_alarm = float(np.mean(h0 > threshold))
    miss = float(np.mean(h1 <= threshold))
    summary = DetectionSummary(
        false_alarm=false_alarm,
        miss=miss,
        power=1.0 - miss,
        threshold=float(threshold),
        trials=trials,
        mean_h0=float(np.mean(h0)),
        std_h0=float(np.std(h0, ddof=1)) if trials > 1 else 0.0,
        mean_h1=float(np.mean(h1)),
    )
    return DetectionReport(records, summary)


def _log_average(terms: np.ndarray, total: int) -> float:
    if terms.size == 0:
        return -math.inf
    return float(special.logsumexp(terms) - math.log(total))


def run_moment(
    s: Spectrum,
    n: int,
    num_samples: int,
    epsilon: float,
    rng: RngStream | None = None,
    jobs: int = 1,
) -> MomentEstimate:
    """
    Estimate E[exp(2n eta)] at block dimension n. Terms are averaged in log
    space; those whose exponent exceeds the float range are counted in
    `clamped` and the affected parts are reported as inf.
    """
    emax = eta_max(s)
    if not 0 < epsilon < emax:
        raise DomainError(f"0 < epsilon < eta_max = {emax!r} violated: epsilon = {epsilon!r}")
    if n < s.r:
        raise DimensionError(f"Expected n >= r, got n={n}, r={s.r}")
    if num_samples < 1:
        raise DomainError(f"num_samples >= 1 violated: num_samples = {num_samples}")
    rng = rng or RngStream(0)
    xs, _ = _draw_eta(s, n, num_samples, rng, jobs)
    log_terms = 2.0 * n * xs
    above = xs > epsilon
    log_e1 = _log_average(log_terms[above], num_samples)
    log_e2 = _log_average(log_terms[~above], num_samples)
    clamped = int(np.count_nonzero(log_terms > LOG_FLOAT_MAX))
    if clamped:
        logging.warning(f"{clamped} of {num_samples} terms exceed the float range")
    with np.errstate(over="ignore"):
        e1 = float(np.exp(log_e1))
        e2 = float(np.exp(log_e2))
    return MomentEstimate(
        n=n,
        samples=num_samples,
        mean=e1 + e2,
        e1_part=e1,
        e2_part=e2,
        epsilon=epsilon,
        clamped=clamped,
        log_mean=float(np.logaddexp(log_e1, log_e2)),
    )


def moment_bounds(s: Spectrum, epsilon: float, delta: float) -> dict[str, float]:
    """Analytic companions of a moment estimate; bounds outside their domain are omitted."""
    bounds = {"rate_gap_sup": rate_gap_sup(s, epsilon)}
    for name, fn in (("moment_bound", moment_bound), ("e2_prime_bound", lambda s: e2_prime_bound(s, delta))):
        try:
            bounds[name] = fn(s)
        except DomainError as e:
            logging.info(f"{name} not available: {e}")
    return bounds


def verify_points(s: Spectrum, points: int = VERIFY_POINTS) -> list[float]:
    """
    points x-values spread across every non-empty interval, capped at
    0.95 eta_max, the oracles' reliable range.
    """
    decomposition = intervals(s)
    cap = VERIFY_X_FRACTION * eta_max(s)
    spans = []
    for k in range(1, decomposition.r + 1):
        lo, hi = decomposition.interval(k)
        hi = min(hi, cap)
        if lo < hi:
            spans.append((lo, hi))
    share, extra = divmod(points, len(spans))
    xs = []
    for i, (lo, hi) in enumerate(spans):
        m = share + (1 if i < extra else 0)
        xs.extend(lo + (j + 0.5) / m * (hi - lo) for j in range(m))
    return xs


def _verify_task(task: tuple[Spectrum, float, int, int, RngStream, int]) -> list[dict]:
    s, x, budget, grid_steps, rng, restarts = task
    exact = waterfill(s, x).j_value
    closed_p1 = grf(s, x).neg_grf
    p1 = solve_problem1(s, x, budget, rng.child(0), restarts)
    p2 = solve_problem2_permutations(s, x)
    p3 = solve_problem3_grid(s, x, grid_steps)
    p4 = solve_problem4_search(s, x, rng=rng.child(1))
    beta_gap = float(np.max(np.abs(p4.argument["beta"] - s.squared)))
    records = []
    for name, closed, result in (
        ("problem1", closed_p1, p1),
        ("problem2", exact, p2),
        ("problem3", exact, p3),
        ("problem4", exact, p4),
    ):
        records.append(
            {
                "problem": name,
                "spectrum": list(s.values),
                "x": x,
                "closed_form": closed,
                "oracle_value": result.value,
                "gap": abs(result.value - closed),
                "converged": result.converged,
            }
        )
    records[-1]["beta_gap"] = beta_gap
    records[-1]["gap"] = max(records[-1]["gap"], beta_gap)
    return records


def run_verify(
    spectra: Iterable[Spectrum],
    points: int = VERIFY_POINTS,
    budget: int = PROBLEM1_BUDGET,
    grid_steps: int = PROBLEM3_GRID_STEPS,
    rng: RngStream | None = None,
    tolerance: float = ORACLE_TOL,
    restarts: int = PROBLEM1_RESTARTS,
    jobs: int = 1,
) -> VerifyReport:
    """
    Compare every oracle with the closed forms on `points` x-values per
    spectrum. The Problem 4 gap also covers max_i |beta_i - lambda_i^2|.
    """
    rng = rng or RngStream(0)
    tasks = []
    for i, s in enumerate(spectra):
        for j, x in enumerate(verify_points(s, points)):
            tasks.append((s, x, budget, grid_steps, rng.child(i).child(j), restarts))
    records = [rec for batch in map_chunks(_verify_task, tasks, jobs) for rec in batch]
    report = VerifyReport(records, tolerance)
    for rec in records:
        if rec["gap"] >= tolerance or not rec["converged"]:
            logging.warning(
                f"{rec['problem']} at x={rec['x']!r}: gap {rec['gap']:.3g} (converged={rec['converged']})"
            )
    return report


def _gram_chunk(task: tuple[int, int, int, RngStream]) -> np.ndarray:
    n, r, count, rng = task
    return gram_deviation_batch(n, r, count, rng)


def run_gram_tail(
    n: int,
    r: int,
    delta: float,
    trials: int,
    rng: RngStream | None = None,
    jobs: int = 1,
) -> GramTailReport:
    """Count trials with ||(1/n) G~* G~ - I||_2 > delta; reference rate exp(-n delta^2 / 2)."""
    rng = rng or RngStream(0)
    sizes = chunk_sizes(trials, _chunk_length(n, r))
    tasks = [(n, r, size, rng.child(i)) for i, size in enumerate(sizes)]
    deviations = map_chunks(_gram_chunk, tasks, jobs)
    exceedances = sum(int(np.count_nonzero(d > delta)) for d in deviations)
    return GramTailReport(n, r, delta, trials, exceedances, math.exp(-0.5 * n * delta * delta))


def block_moments(blocks: np.ndarray) -> dict[str, float]:
    """Entry moments |E psi|, E|psi|^2 and E|psi|^4 averaged over entries."""
    return {
        "mean_abs": float(np.abs(np.mean(blocks))),
        "second": float(np.mean(np.abs(blocks) ** 2)),
        "fourth": float(np.mean(np.abs(blocks) ** 4)),
    }


def run_block_fidelity(n: int, r: int, count: int, rng: RngStream | None = None) -> dict[str, dict[str, float]]:
    """Entry moments of truncated blocks next to those of Haar blocks."""
    rng = rng or RngStream(0)
    sizes = chunk_sizes(count, _chunk_length(n, r))
    truncated = np.concatenate(
        [sample_block_batch(n, r, size, rng.child(0).child(i)) for i, size in enumerate(sizes)]
    )
    haar = np.concatenate(
        [sample_block_batch(n, r, size, rng.child(1).child(i), haar=True) for i, size in enumerate(sizes)]
    )
    return {"truncated": block_moments(truncated), "haar": block_moments(haar)}
