"""Piecewise-linear interval maps S: [0, 1] -> [0, 1].

A map is given on ``m0`` equal base atoms ((j-1)/m0, j/m0) by an integer
slope and the value of its left-end limit ("image start").  All evaluation is
done with :class:`fractions.Fraction` so that membership of images in the
partition grid is decided exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    MapValidationError,
    NonIntegerGridImage,
    NotMeasurePreserving,
    NotMultipleOfM0,
    SlopeTooSmall,
)

ENDPOINT_CONVENTIONS = ("right", "left")


@dataclass(frozen=True)
class Violation:
    kind: str
    atom: int | None
    detail: str

    def __str__(self):
        where = "" if self.atom is None else f" (atom {self.atom})"
        return f"{self.kind}{where}: {self.detail}"


@dataclass(frozen=True)
class Segment:
    """Affine branch ``x -> slope * x + intercept`` on one base atom."""

    slope: int
    intercept: Fraction

    def __call__(self, x):
        return self.slope * x + self.intercept


@dataclass(frozen=True)
class MapConstants:
    m0: int
    l0: int
    s_max: int


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        raise ConfigurationError(f"use exact rationals, not floats: {value!r}")
    return Fraction(value)


def _collect_violations(m0, segments):
    violations = []
    if m0 < 1:
        violations.append(Violation("NotMeasurePreserving", None, "m0 must be positive"))
        return violations
    if len(segments) != m0:
        violations.append(
            Violation("NotMeasurePreserving", None, f"expected {m0} segments, got {len(segments)}")
        )
        return violations

    grid = {Fraction(k, m0) for k in range(m0 + 1)}
    images = []
    for j, seg in enumerate(segments, start=1):
        if seg.slope == 0:
            violations.append(Violation("SlopeTooSmall", j, "slope is zero"))
            images.append(None)
            continue
        if abs(seg.slope) < 2:
            violations.append(Violation("SlopeTooSmall", j, f"|slope| = {abs(seg.slope)} < 2"))
        y0 = seg(Fraction(j - 1, m0))
        y1 = seg(Fraction(j, m0))
        if y0 not in grid or y1 not in grid:
            violations.append(
                Violation("NonIntegerGridImage", j, f"image endpoints {y0}, {y1} not on the 1/{m0} grid")
            )
            images.append(None)
        else:
            images.append((min(y0, y1), max(y0, y1), abs(seg.slope)))

    for k in range(m0):
        lo, hi = Fraction(k, m0), Fraction(k + 1, m0)
        mass = sum(
            (Fraction(1, s) for im in images if im is not None for (a, b, s) in [im] if a <= lo and hi <= b),
            Fraction(0),
        )
        if mass != 1:
            violations.append(
                Violation("NotMeasurePreserving", k + 1, f"preimage mass of range atom is {mass}, not 1")
            )
    return violations


_ERROR_CLASSES = {
    "NonIntegerGridImage": NonIntegerGridImage,
    "SlopeTooSmall": SlopeTooSmall,
    "NotMeasurePreserving": NotMeasurePreserving,
}


@dataclass(frozen=True)
class PiecewiseLinearMap:
    """Validated admissible interval map.

    ``endpoint`` selects which one-sided limit S takes at a breakpoint:
    ``"right"`` (default) or ``"left"``.
    """

    m0: int
    segments: tuple[Segment, ...]
    endpoint: str = "right"
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.endpoint not in ENDPOINT_CONVENTIONS:
            raise ConfigurationError(f"endpoint convention must be one of {ENDPOINT_CONVENTIONS}")
        violations = _collect_violations(self.m0, self.segments)
        if violations:
            raise _ERROR_CLASSES[violations[0].kind](violations)

    @cached_property
    def constants(self) -> MapConstants:
        slopes = [abs(s.slope) for s in self.segments]
        return MapConstants(m0=self.m0, l0=math.lcm(*slopes), s_max=max(slopes))

    @property
    def is_doubling(self) -> bool:
        return self == DOUBLING

    def atom_of(self, x: Fraction) -> int:
        """0-based base atom whose branch defines S(x), honouring the endpoint convention."""
        if not 0 <= x <= 1:
            raise ConfigurationError(f"x = {x} outside [0, 1]")
        scaled = x * self.m0
        if self.endpoint == "right":
            j = math.floor(scaled)
            return min(j, self.m0 - 1)
        j = math.ceil(scaled) - 1
        return max(j, 0)

    def __call__(self, x) -> Fraction:
        x = _as_fraction(x)
        return self.segments[self.atom_of(x)](x)

    def iterate(self, x, ell: int) -> Fraction:
        if ell < 0:
            raise ConfigurationError("iterate count must be nonnegative")
        x = _as_fraction(x)
        for _ in range(ell):
            x = self(x)
        return x

    def evaluate_float(self, x):
        """Vectorised floating-point evaluation (same endpoint convention)."""
        x = np.asarray(x, dtype=float)
        scaled = x * self.m0
        if self.endpoint == "right":
            j = np.clip(np.floor(scaled).astype(int), 0, self.m0 - 1)
        else:
            j = np.clip(np.ceil(scaled).astype(int) - 1, 0, self.m0 - 1)
        slopes = np.array([s.slope for s in self.segments], dtype=float)
        intercepts = np.array([float(s.intercept) for s in self.segments])
        return slopes[j] * x + intercepts[j]

    def iterate_float(self, x, ell: int):
        for _ in range(ell):
            x = self.evaluate_float(x)
        return x

    def derivative(self, x) -> int:
        return self.segments[self.atom_of(_as_fraction(x))].slope

    def cell_image(self, n: int, x: int, ell: int = 1) -> tuple[int, Fraction, Fraction]:
        """Slope and image interval of S^ell on the open cell E_x (1-based x).

        Valid whenever S^ell is affine on E_x, which holds for
        ``ell <= k_tilde(n) + 1``.  The orbit of the cell midpoint never meets a
        breakpoint in that range, so the slope read off along it is the slope
        on the whole cell.
        """
        z = Fraction(2 * x - 1, 2 * n)
        slope = 1
        for _ in range(ell):
            j = self.atom_of(z)
            slope *= self.segments[j].slope
            z = self.segments[j](z)
        half = Fraction(abs(slope), 2 * n)
        return slope, z - half, z + half

    def to_config(self) -> dict:
        return {
            "m0": self.m0,
            "endpoint": self.endpoint,
            "segments": [
                {"slope": s.slope, "image_start": str(s(Fraction(j, self.m0)))}
                for j, s in enumerate(self.segments)
            ],
        }


def validate_map(candidate, endpoint: str = "right", name: str | None = None) -> PiecewiseLinearMap:
    """Build a map from raw data, raising :class:`MapValidationError` on failure.

    ``candidate`` is either a config dict ``{"m0": int, "segments": [{"slope":
    int, "image_start": "p/q"}, ...]}`` or a list of ``(slope, intercept)``
    pairs, one per base atom, so that S(x) = slope * x + intercept there.
    Config segments may give ``"intercept"`` instead of ``"image_start"``.
    """
    if isinstance(candidate, dict):
        m0 = candidate.get("m0")
        raw = candidate.get("segments", [])
        endpoint = candidate.get("endpoint", endpoint)
        name = candidate.get("name", name)
        if m0 is None:
            m0 = len(raw)
        segments = []
        for j, seg in enumerate(raw):
            slope = _check_slope(seg.get("slope"), j + 1)
            if "image_start" in seg:
                intercept = _as_fraction(seg["image_start"]) - slope * Fraction(j, int(m0))
            elif "intercept" in seg:
                intercept = _as_fraction(seg["intercept"])
            else:
                raise ConfigurationError(f"segment {j + 1} needs 'image_start' or 'intercept'")
            segments.append(Segment(slope, intercept))
    else:
        segments = [Segment(_check_slope(s, j + 1), _as_fraction(b)) for j, (s, b) in enumerate(candidate)]
        m0 = len(segments)
    if not segments:
        raise MapValidationError([Violation("NotMeasurePreserving", None, "empty segment list")])
    return PiecewiseLinearMap(int(m0), tuple(segments), endpoint=endpoint, name=name)


def _check_slope(slope, atom):
    if isinstance(slope, bool) or not isinstance(slope, (int, np.integer)):
        raise MapValidationError([Violation("NonIntegerGridImage", atom, f"slope {slope!r} is not an integer")])
    return int(slope)


def k_tilde(smap: PiecewiseLinearMap, n: int) -> int:
    """Largest K with n = m0 * l0**K * r (l0 does not divide r)."""
    m0, l0 = smap.constants.m0, smap.constants.l0
    if n <= 0 or n % m0:
        raise NotMultipleOfM0(f"n = {n} is not a positive multiple of m0 = {m0}")
    q, k = n // m0, 0
    while q % l0 == 0:
        q //= l0
        k += 1
    return k


def evaluate_iterate(smap: PiecewiseLinearMap, x, ell: int) -> Fraction:
    if ell < 1:
        raise ConfigurationError("ell must be at least 1")
    return smap.iterate(x, ell)


DOUBLING = validate_map([(2, 0), (2, -1)], name="doubling")
FOUR_LEGS = validate_map([(2, 0), (4, -1), (4, -2), (2, -1)], name="four_legs")
# direct sum of two doubling maps acting on [0, 1/2] and [1/2, 1]; not ergodic
BLOCK_DOUBLING = validate_map(
    [(2, 0), (2, Fraction(-1, 2)), (2, Fraction(-1, 2)), (2, -1)], name="block_doubling"
)

BUILTIN_MAPS = {m.name: m for m in (DOUBLING, FOUR_LEGS, BLOCK_DOUBLING)}


def load_map(spec) -> PiecewiseLinearMap:
    """Resolve a built-in name, a JSON file path, or a config dict."""
    if isinstance(spec, PiecewiseLinearMap):
        return spec
    if isinstance(spec, dict):
        return validate_map(spec)
    if spec in BUILTIN_MAPS:
        return BUILTIN_MAPS[spec]
    path = Path(spec)
    if not path.exists():
        raise ConfigurationError(f"unknown map {spec!r}: not a built-in name or an existing file")
    data = json.loads(path.read_text())
    data.setdefault("name", path.stem)
    return validate_map(data)
