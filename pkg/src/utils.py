import math
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, TypeVar

from .constants import FLOAT_FORMAT


T = TypeVar("T")
R = TypeVar("R")


def format_float(value: float) -> str:
    """
    Fixed-precision text form used in every CSV file: 17 significant digits,
    non-finite values as "inf", "-inf" or "nan".
    """
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, FLOAT_FORMAT)


def chunk_sizes(total: int, size: int) -> list[int]:
    """
    Split total work items into chunks of at most size items.
    The split depends only on (total, size), never on the worker count.
    """
    if total <= 0:
        return []
    full, rest = divmod(total, size)
    return [size] * full + ([rest] if rest else [])


def map_chunks(fn: Callable[[T], R], tasks: Iterable[T], jobs: int = 1) -> list[R]:
    """
    Apply fn to every task, in a process pool when jobs > 1.
    Results come back in task order whatever the scheduling.
    """
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def format_curve_summary(spectrum: Any, curve: Any) -> str:
    lines = [f"GRF curve for spectrum ({spectrum})", f"  points: {len(curve)}"]
    if len(curve):
        worst = min(curve.neg_grf)
        lines.append(f"  min -I_eta on grid: {worst:.6g}")
    return "\n".join(lines)


def format_waterfill_summary(report: Any) -> str:
    solution = report.solution
    allocation = ", ".join(f"{p:.6g}" for p in solution.p)
    return "\n".join(
        [
            f"Water-filling at x = {report.x!r}",
            f"  active modes: {solution.s}",
            f"  water level 1/mu*: {solution.mu_inv:.12g}",
            f"  allocation: [{allocation}]",
            f"  J_Lambda(x): {solution.j_value:.12g}",
            f"  KKT residual: {report.kkt_residual:.3g}",
        ]
    )


def format_envelope_summary(report: Any) -> str:
    lines = [
        f"Envelope study: {report.num_samples} samples",
        f"  violations: {report.violations}",
    ]
    if report.num_samples:
        lines.append(f"  max (y + I_eta(|x|)): {report.max_gap:.6g}")
    lines.append(f"  max gap of log(1 - |x|/eta_max) over -I_eta: {report.bound_gap:.6g}")
    return "\n".join(lines)


def format_detection_summary(summary: Any) -> str:
    return "\n".join(
        [
            f"GLRT at threshold {summary.threshold:.6g} ({summary.trials} trials per hypothesis)",
            f"  false alarm: {summary.false_alarm:.3f}",
            f"  miss: {summary.miss:.3f}",
            f"  power: {summary.power:.3f}",
            f"  lambda_1 under H0: {summary.mean_h0:.4f} +/- {summary.std_h0:.4f}",
            f"  lambda_1 under H1: {summary.mean_h1:.4f}",
        ]
    )


def format_moment_summary(report: Any) -> str:
    est = report.estimate
    lines = [
        f"Second moment at n = {est.n} over {est.samples} samples",
        f"  E[exp(2n eta)]: {est.mean:.6g} (log {est.log_mean:.6g})",
        f"  E1 (eta > {est.epsilon:g}): {est.e1_part:.6g}",
        f"  E2: {est.e2_part:.6g}",
    ]
    if est.clamped:
        lines.append(f"  clamped terms: {est.clamped}")
    for name, value in report.bounds.items():
        lines.append(f"  {name}: {value}")
    return "\n".join(lines)


def format_verify_summary(report: Any) -> str:
    status = "PASS" if report.passed else "FAIL"
    return "\n".join(
        [
            f"Oracle verification: {status}",
            f"  records: {len(report.records)}",
            f"  largest gap: {report.max_gap:.3g} (tolerance {report.tolerance:g})",
        ]
    )
