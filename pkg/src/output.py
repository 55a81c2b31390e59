import csv
import hashlib
import io
import json
import logging
import math
import os
from typing import Any, Iterable

import numpy as np

from .cli_setup import RunConfig, get_settings
from .constants import ARTIFACT_VERSION
from .experiments import (
    DetectionReport,
    EnvelopeReport,
    MomentReport,
    VerifyReport,
    WaterfillReport,
)
from .grf import GrfCurve
from .sampling import eta_samples_to_rows
from .utils import format_float


def _plain(value: Any) -> Any:
    """JSON-ready copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else format_float(value)
    return value


class OutputWriter:
    """
    Context manager staging artefact files next to their destination.
    On a clean exit every staged file is renamed into place; on an exception
    the staged files are removed and nothing is published.
    """

    def __init__(self, prefix: str):
        self.prefix = prefix
        self.staged: list[tuple[str, str]] = []
        self.digests: dict[str, str] = {}

    def __enter__(self):
        parent = os.path.dirname(self.prefix)
        if parent:
            try:
                os.makedirs(parent, exist_ok=True)
            except OSError as e:
                raise OSError(f"Cannot create output directory {parent}: {e}") from e
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None:
            for tmp, final in self.staged:
                try:
                    os.replace(tmp, final)
                except OSError as e:
                    self._discard()
                    raise OSError(f"Cannot publish {final}: {e}") from e
                logging.info(f"Wrote {final}")
        else:
            self._discard()
        self.staged = []

    def _discard(self) -> None:
        for tmp, _ in self.staged:
            if os.path.exists(tmp):
                os.remove(tmp)

    def path(self, suffix: str) -> str:
        return f"{self.prefix}.{suffix}"

    def write_text(self, suffix: str, text: str) -> str:
        final = self.path(suffix)
        tmp = final + ".tmp"
        data = text.encode("utf-8")
        try:
            with open(tmp, "wb") as fh:
                fh.write(data)
        except OSError as e:
            raise OSError(f"Cannot write {tmp}: {e}") from e
        self.staged.append((tmp, final))
        self.digests[os.path.basename(final)] = hashlib.sha256(data).hexdigest()
        return final

    def write_csv(self, suffix: str, header: list[str], rows: Iterable[Iterable[Any]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(format_float(v) if isinstance(v, (float, np.floating)) else v for v in row)
        return self.write_text(suffix, buffer.getvalue())

    def write_json(self, suffix: str, payload: Any) -> str:
        return self.write_text(suffix, json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")


def output_prefix(config: RunConfig) -> str:
    """config.out, placed under OUTPUT_DIR when it is relative."""
    output_dir = get_settings()["output_dir"]
    if output_dir and not os.path.isabs(config.out):
        return os.path.join(output_dir, config.out)
    return config.out


def _write_report(writer: OutputWriter, report: Any) -> None:
    if isinstance(report, GrfCurve):
        rows = ((p.x, p.neg_grf, p.k, p.upper_bound) for p in report)
        writer.write_csv("curve.csv", ["x", "neg_grf", "k", "upper_bound"], rows)
    elif isinstance(report, WaterfillReport):
        sol = report.solution
        writer.write_json(
            "waterfill.json",
            {
                "x": report.x,
                "p": sol.p,
                "s": sol.s,
                "mu_inv": sol.mu_inv,
                "j_value": sol.j_value,
                "kkt_residual": report.kkt_residual,
                "inactive_multipliers": report.multipliers,
            },
        )
    elif isinstance(report, EnvelopeReport):
        writer.write_csv("samples.csv", ["sample_id", "x", "y"], eta_samples_to_rows(report.xs, report.ys))
        _write_report(writer, report.curve)
        writer.write_json(
            "summary.json",
            {
                "samples": report.num_samples,
                "violations": report.violations,
                "max_gap": report.max_gap,
                "bound_gap": report.bound_gap,
            },
        )
    elif isinstance(report, DetectionReport):
        rows = ((t.trial, t.hypothesis.value, t.statistic, t.decision.value) for t in report.trials)
        writer.write_csv("trials.csv", ["trial", "hypothesis", "lambda1", "decision"], rows)
        writer.write_json("summary.json", vars(report.summary))
    elif isinstance(report, MomentReport):
        writer.write_json("moment.json", {**vars(report.estimate), "bounds": report.bounds})
    elif isinstance(report, VerifyReport):
        writer.write_json(
            "verify.json",
            {
                "passed": report.passed,
                "tolerance": report.tolerance,
                "max_gap": report.max_gap,
                "records": report.records,
            },
        )
    else:
        raise TypeError(f"No output format for {type(report).__name__}")


def emit(report: Any, config: RunConfig, elapsed: float = 0.0) -> list[str]:
    """
    Write the artefacts of one command under the config's prefix plus
    <prefix>.manifest.json. Data files depend only on the config.
    """
    prefix = output_prefix(config)
    with OutputWriter(prefix) as writer:
        _write_report(writer, report)
        data_files = dict(writer.digests)
        writer.write_json(
            "manifest.json",
            {
                "config": config.to_dict(),
                "version": ARTIFACT_VERSION,
                "elapsed_seconds": elapsed,
                "files": data_files,
            },
        )
        written = [final for _, final in writer.staged]
    return written
