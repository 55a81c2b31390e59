import argparse
import json
import os
from dataclasses import dataclass, fields
from typing import Any

from dotenv import load_dotenv

from .constants import (
    COMMANDS,
    DEFAULT_EPSILON,
    DEFAULT_DELTA,
    DEFAULT_GRID_POINTS,
    DEFAULT_N,
    DEFAULT_OUT,
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    DEFAULT_TRIALS,
    LOG_LEVELS,
    PROBLEM1_BUDGET,
    PROBLEM1_RESTARTS,
    PROBLEM3_GRID_STEPS,
    VERIFY_POINTS,
)
from .spectra import Spectrum, SpectrumError, new_spectrum, parse_spectrum


load_dotenv()


class UsageError(ValueError):
    """Raised for malformed flags or configuration files."""


def get_commands() -> list[tuple[str, str]]:
    """Commands with their one-line descriptions, in help order."""
    descriptions = {
        "grf": "Evaluate -I_eta on a uniform grid of (0, eta_max)",
        "waterfill": "Solve the water-filling problem at one x",
        "envelope": "Monte Carlo cloud of eta samples against the GRF envelope",
        "detect": "GLRT detection study under H0 and H1",
        "moment": "Estimate E[exp(2n eta)] with its E1/E2 split",
        "verify": "Check the numerical oracles against the closed forms",
    }
    return [(command, descriptions[command]) for command in COMMANDS]


def get_settings() -> dict[str, Any]:
    """Defaults read from the environment (and .env). The seed is never read from here."""
    jobs = os.getenv("JOBS")
    try:
        default_jobs = int(jobs) if jobs else (os.cpu_count() or 1)
    except ValueError as e:
        raise UsageError(f"JOBS must be an integer, got {jobs!r}") from e
    return {
        "log_level": os.getenv("LOG_LEVEL", "INFO").upper(),
        "output_dir": os.getenv("OUTPUT_DIR", ""),
        "jobs": default_jobs,
    }


@dataclass(frozen=True)
class RunConfig:
    command: str
    spectrum: Spectrum | None = None
    n: int = DEFAULT_N
    samples: int = DEFAULT_SAMPLES
    trials: int = DEFAULT_TRIALS
    seed: int = DEFAULT_SEED
    epsilon: float = DEFAULT_EPSILON
    threshold: float | None = None
    quantile: float | None = None
    n_block: int | None = None
    grid: int = DEFAULT_GRID_POINTS
    delta: float = DEFAULT_DELTA
    x: float | None = None
    budget: int = PROBLEM1_BUDGET
    grid_steps: int = PROBLEM3_GRID_STEPS
    restarts: int = PROBLEM1_RESTARTS
    points: int = VERIFY_POINTS
    jobs: int = 1
    out: str = DEFAULT_OUT
    log_level: str = "INFO"

    def to_dict(self) -> dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["spectrum"] = list(self.spectrum.values) if self.spectrum else None
        return data


FIELD_TYPES = {
    "n": int,
    "samples": int,
    "trials": int,
    "seed": int,
    "epsilon": float,
    "threshold": float,
    "quantile": float,
    "n_block": int,
    "grid": int,
    "delta": float,
    "x": float,
    "budget": int,
    "grid_steps": int,
    "restarts": int,
    "points": int,
    "jobs": int,
    "out": str,
    "log_level": str,
}


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="main.py",
        description="Low-rank spike detection lab",
        argument_default=argparse.SUPPRESS,
        allow_abbrev=False,
        epilog="\n".join(f"  {c:<10} {d}" for c, d in get_commands()),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON file merged under the flags")
    parser.add_argument("--spectrum", help='singular values, e.g. "1,0.7,0.2"')
    for name, kind in FIELD_TYPES.items():
        flag = "--" + name.replace("_", "-")
        if name == "log_level":
            parser.add_argument(flag, dest=name, type=str.upper, choices=LOG_LEVELS)
        else:
            parser.add_argument(flag, dest=name, type=kind)
    return parser


def _spectrum_value(value: Any) -> Spectrum:
    try:
        if isinstance(value, str):
            return parse_spectrum(value)
        if isinstance(value, list):
            return new_spectrum(value)
    except (SpectrumError, TypeError, ValueError) as e:
        raise UsageError(f"spectrum: {e}") from e
    raise UsageError(f"spectrum: expected a string or an array, got {value!r}")


def _load_config_file(path: str) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise UsageError(f"config: cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"config: {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise UsageError(f"config: {path} must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    for key in data:
        if key not in known:
            raise UsageError(f"config: unknown field {key!r}")
    for key, kind in FIELD_TYPES.items():
        value = data.get(key)
        if value is None:
            continue
        if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise UsageError(f"{key}: expected an integer, got {value!r}")
        if kind is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise UsageError(f"{key}: expected a number, got {value!r}")
        if kind is str and not isinstance(value, str):
            raise UsageError(f"{key}: expected a string, got {value!r}")
        data[key] = kind(value)
    return data


def _validate(config: RunConfig) -> None:
    if config.command != "verify" and config.spectrum is None:
        raise UsageError("spectrum: required for the " + config.command + " command")
    if config.command == "waterfill" and config.x is None:
        raise UsageError("x: required for the waterfill command")
    if config.threshold is not None and config.quantile is not None:
        raise UsageError("threshold: conflicts with quantile, give only one")
    positive = ("n", "trials", "grid", "budget", "grid_steps", "restarts", "points", "jobs")
    for name in positive:
        if getattr(config, name) < 1:
            raise UsageError(f"{name}: must be at least 1, got {getattr(config, name)}")
    if config.samples < 0:
        raise UsageError(f"samples: must be non-negative, got {config.samples}")
    if config.n_block is not None and config.n_block < 1:
        raise UsageError(f"n_block: must be at least 1, got {config.n_block}")
    if config.quantile is not None and not 0 < config.quantile < 1:
        raise UsageError(f"quantile: must lie in (0, 1), got {config.quantile!r}")
    if not 0 <= config.seed < 2**64:
        raise UsageError(f"seed: must be a 64-bit unsigned integer, got {config.seed}")
    if config.log_level not in LOG_LEVELS:
        raise UsageError(f"log_level: must be one of {LOG_LEVELS}, got {config.log_level!r}")


def parse_config(argv: list[str]) -> RunConfig:
    """
    Build a RunConfig from defaults, the environment, an optional --config
    JSON file and the flags, later sources winning.
    """
    args = vars(build_parser().parse_args(argv))
    settings = get_settings()
    merged: dict[str, Any] = {"jobs": settings["jobs"], "log_level": settings["log_level"]}
    config_path = args.pop("config", None)
    if config_path:
        merged.update(_load_config_file(config_path))
    merged.update(args)
    if merged.get("spectrum") is not None:
        merged["spectrum"] = _spectrum_value(merged["spectrum"])
    config = RunConfig(**merged)
    _validate(config)
    return config


def render_config(config: RunConfig) -> list[str]:
    """argv that parse_config turns back into config."""
    argv = [config.command]
    for f in fields(config):
        if f.name == "command":
            continue
        value = getattr(config, f.name)
        if value is None:
            continue
        flag = "--" + f.name.replace("_", "-")
        if isinstance(value, Spectrum):
            argv += [flag, str(value)]
        elif isinstance(value, float):
            argv += [flag, repr(value)]
        else:
            argv += [flag, str(value)]
    return argv
