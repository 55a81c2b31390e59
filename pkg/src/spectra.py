import bisect
import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class SpectrumError(ValueError):
    """Raised for singular values that cannot describe a spike."""


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class Spectrum:
    """
    Singular values of the spike, sorted in non-increasing order.
    The values do not depend on the matrix dimension n.
    """

    values: tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise SpectrumError("Spectrum must contain at least one value")
        for value in self.values:
            if not math.isfinite(value) or value <= 0:
                raise SpectrumError(f"Invalid singular value: {value!r}")
        if any(a < b for a, b in zip(self.values, self.values[1:])):
            raise SpectrumError("Spectrum values must be sorted in non-increasing order")

    @property
    def r(self) -> int:
        return len(self.values)

    @property
    def squared(self) -> np.ndarray:
        return np.array([v * v for v in self.values], dtype=np.float64)

    @property
    def top(self) -> float:
        return self.values[0]

    def to_json(self) -> str:
        return json.dumps(list(self.values))

    def __str__(self) -> str:
        return ",".join(repr(v) for v in self.values)


@dataclass(frozen=True)
class IntervalDecomposition:
    """
    Endpoints 0 = b_0 < b_1 <= ... <= b_r = eta_max; I_k = (b_{k-1}, b_k].
    """

    boundaries: tuple[float, ...]

    @property
    def r(self) -> int:
        return len(self.boundaries) - 1

    def interval(self, k: int) -> tuple[float, float]:
        return self.boundaries[k - 1], self.boundaries[k]

    def is_empty(self, k: int) -> bool:
        lo, hi = self.interval(k)
        return lo >= hi


def new_spectrum(values: Iterable[float]) -> Spectrum:
    """
    Build a Spectrum from singular values given in any order.
    Raises SpectrumError for empty input, non-positive, NaN or infinite values.
    """
    values = [float(v) for v in values]
    if not values:
        raise SpectrumError("Spectrum must contain at least one value")
    for value in values:
        if not math.isfinite(value) or value <= 0:
            raise SpectrumError(f"Invalid singular value: {value!r}")
    return Spectrum(tuple(sorted(values, reverse=True)))


def parse_spectrum(text: str) -> Spectrum:
    """Parse the comma-separated flag form, e.g. "1,0.7,0.2"."""
    parts = [part.strip() for part in text.split(",")]
    if not text.strip() or any(not part for part in parts):
        raise SpectrumError(f"Malformed spectrum: {text!r}")
    try:
        values = [float(part) for part in parts]
    except ValueError as e:
        raise SpectrumError(f"Malformed spectrum: {text!r}") from e
    return new_spectrum(values)


def spectrum_from_json(text: str) -> Spectrum:
    """Parse a JSON array of numbers."""
    data = json.loads(text)
    if not isinstance(data, list):
        raise SpectrumError("Spectrum JSON must be an array of numbers")
    return new_spectrum(data)


def eta_max(s: Spectrum) -> float:
    """Largest attainable overlap, sum of the squared singular values."""
    total = 0.0
    for v in s.values:
        total += v * v
    return total


def interval_boundaries(gains: Iterable[float]) -> tuple[float, ...]:
    """
    Boundaries of the water-filling intervals for a non-increasing, non-negative
    gain vector g: b_k = sum_{i<=k+1} (g_i - g_{k+1}) for k < r and b_r = sum g.
    """
    g = [float(v) for v in gains]
    r = len(g)
    boundaries = [0.0]
    for k in range(1, r):
        # ascending i, fixed order
        b = 0.0
        for i in range(k + 1):
            b += g[i] - g[k]
        boundaries.append(max(b, boundaries[-1]))
    total = 0.0
    for i in range(r):
        total += g[i]
    boundaries.append(max(total, boundaries[-1]))
    return tuple(boundaries)


def intervals(s: Spectrum) -> IntervalDecomposition:
    """Interval decomposition (0, eta_max] = I_1 U ... U I_r of a spectrum."""
    boundaries = list(interval_boundaries(s.squared))
    # b_r and eta_max must agree exactly
    boundaries[-1] = eta_max(s)
    return IntervalDecomposition(tuple(boundaries))


def locate(boundaries: tuple[float, ...], x: float) -> int:
    """
    Index k of the interval (b_{k-1}, b_k] containing |x|.
    Raises DomainError when |x| = 0 or |x| > b_r.
    """
    a = abs(x)
    if a == 0 or not a <= boundaries[-1]:
        raise DomainError(f"|x| must lie in (0, {boundaries[-1]!r}], got {x!r}")
    return bisect.bisect_left(boundaries, a, lo=1)


def interval_index(s: Spectrum, x: float) -> int:
    """Unique k with |x| in I_k; empty intervals are never selected."""
    return locate(intervals(s).boundaries, x)
