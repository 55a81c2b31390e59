import logging
import time
from typing import Callable

from .cli_setup import RunConfig
from .constants import VERIFY_SPECTRA
from .experiments import (
    MomentReport,
    VerificationError,
    moment_bounds,
    run_detection,
    run_envelope,
    run_moment,
    run_verify,
    run_waterfill,
)
from .grf import grf_curve, uniform_grid
from .output import emit
from .sampling import RngStream
from .spectra import new_spectrum
from .utils import (
    format_curve_summary,
    format_detection_summary,
    format_envelope_summary,
    format_moment_summary,
    format_verify_summary,
    format_waterfill_summary,
)


Handler = Callable[[RunConfig], None]


def register_handlers() -> dict[str, Handler]:
    """Command name to handler."""
    handlers = {
        "grf": cmd_grf,
        "waterfill": cmd_waterfill,
        "envelope": cmd_envelope,
        "detect": cmd_detect,
        "moment": cmd_moment,
        "verify": cmd_verify,
    }
    logging.debug("Handlers registered.")
    return handlers


def _stream(config: RunConfig) -> RngStream:
    return RngStream(config.seed)


def cmd_grf(config: RunConfig) -> None:
    start = time.perf_counter()
    curve = grf_curve(config.spectrum, uniform_grid(config.spectrum, config.grid))
    emit(curve, config, time.perf_counter() - start)
    print(format_curve_summary(config.spectrum, curve))


def cmd_waterfill(config: RunConfig) -> None:
    start = time.perf_counter()
    report = run_waterfill(config.spectrum, config.x)
    emit(report, config, time.perf_counter() - start)
    print(format_waterfill_summary(report))


def cmd_envelope(config: RunConfig) -> None:
    start = time.perf_counter()
    n_block = config.n_block or 2 * config.spectrum.r
    logging.info(f"Envelope study: {config.samples} samples at n_block={n_block}")
    report = run_envelope(
        config.spectrum, n_block, config.samples, config.grid, _stream(config), config.jobs
    )
    emit(report, config, time.perf_counter() - start)
    print(format_envelope_summary(report))


def cmd_detect(config: RunConfig) -> None:
    start = time.perf_counter()
    logging.info(f"Detection study: n={config.n}, {config.trials} trials per hypothesis")
    report = run_detection(
        config.spectrum,
        config.n,
        config.trials,
        threshold=config.threshold,
        rng=_stream(config),
        jobs=config.jobs,
        quantile=config.quantile,
    )
    emit(report, config, time.perf_counter() - start)
    print(format_detection_summary(report.summary))


def cmd_moment(config: RunConfig) -> None:
    start = time.perf_counter()
    logging.info(f"Moment estimate: n={config.n}, {config.samples} samples")
    estimate = run_moment(
        config.spectrum, config.n, config.samples, config.epsilon, _stream(config), config.jobs
    )
    report = MomentReport(estimate, moment_bounds(config.spectrum, config.epsilon, config.delta))
    emit(report, config, time.perf_counter() - start)
    print(format_moment_summary(report))


def cmd_verify(config: RunConfig) -> None:
    start = time.perf_counter()
    if config.spectrum is not None:
        spectra = [config.spectrum]
    else:
        spectra = [new_spectrum(values) for values in VERIFY_SPECTRA]
    logging.info(f"Verifying oracles on {len(spectra)} spectra, {config.points} points each")
    report = run_verify(
        spectra,
        points=config.points,
        budget=config.budget,
        grid_steps=config.grid_steps,
        rng=_stream(config),
        restarts=config.restarts,
        jobs=config.jobs,
    )
    emit(report, config, time.perf_counter() - start)
    print(format_verify_summary(report))
    if not report.passed:
        raise VerificationError(
            f"Largest oracle gap {report.max_gap:.3g} exceeds tolerance {report.tolerance:g}"
        )
