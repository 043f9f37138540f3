"""Stress-strain curves and their reduction to a fixed QoI vector.

QoIs are read off a curve with a monotone piecewise cubic Hermite
interpolant (PCHIP): interior slopes are the Fritsch-Butland weighted
harmonic mean of adjacent secants (zero at local extrema), endpoint slopes
use the one-sided three-point rule with monotonicity clamping.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_ABSCISSAE = tuple(round(0.1 * k, 10) for k in range(1, 10))


class ExtrapolationError(ValueError):
    """Requested abscissa lies outside the sampled curve."""


@dataclass(frozen=True)
class StressStrainCurve:
    strain: np.ndarray
    stress: np.ndarray

    def __post_init__(self):
        strain = np.asarray(self.strain, dtype=float)
        stress = np.asarray(self.stress, dtype=float)
        object.__setattr__(self, "strain", strain)
        object.__setattr__(self, "stress", stress)
        if strain.ndim != 1 or strain.shape != stress.shape or strain.size < 2:
            raise ValueError("strain and stress must be 1-D arrays of equal length >= 2")
        if strain[0] != 0.0 or stress[0] != 0.0:
            raise ValueError("curve must start at (0, 0)")
        if np.any(np.diff(strain) <= 0):
            raise ValueError("strain values must be strictly increasing")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["strain", "stress_mpa"])
            for e, s in zip(self.strain, self.stress):
                w.writerow([repr(float(e)), repr(float(s))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "StressStrainCurve":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([float(r["strain"]) for r in rows]),
                   np.array([float(r["stress_mpa"]) for r in rows]))


@dataclass(frozen=True)
class QoIVector:
    values: np.ndarray
    abscissae: tuple[float, ...] = DEFAULT_ABSCISSAE

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "abscissae", tuple(float(a) for a in self.abscissae))
        if values.shape != (len(self.abscissae),):
            raise ValueError("one value per abscissa required")
        if any(b <= a for a, b in zip(self.abscissae, self.abscissae[1:])):
            raise ValueError("abscissae must be strictly increasing")

    def __len__(self):
        return len(self.abscissae)


def _validate_nodes(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise ValueError("xs and ys must be 1-D of equal length >= 2")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("xs must be strictly increasing")
    return xs, ys


def _endpoint_slope(h0, h1, d0, d1):
    s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
    if np.sign(s) != np.sign(d0):
        return 0.0
    if np.sign(d0) != np.sign(d1) and abs(s) > abs(3.0 * d0):
        return 3.0 * d0
    return s


def pchip_derivatives(xs: Sequence[float], ys: Sequence[float]) -> np.ndarray:
    """Monotonicity-preserving node slopes for cubic Hermite interpolation."""
    xs, ys = _validate_nodes(xs, ys)
    h = np.diff(xs)
    secant = np.diff(ys) / h
    n = xs.size
    d = np.zeros(n)
    if n == 2:
        d[:] = secant[0]
        return d
    hl, hr = h[:-1], h[1:]
    sl, sr = secant[:-1], secant[1:]
    same_sign = (np.sign(sl) * np.sign(sr)) > 0
    w1 = 2.0 * hr + hl
    w2 = hr + 2.0 * hl
    # a subnormal secant overflows w / s; the slope then correctly tends to 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        harmonic = (w1 + w2) / (w1 / sl + w2 / sr)
    d[1:-1] = np.where(same_sign, harmonic, 0.0)
    d[0] = _endpoint_slope(h[0], h[1], secant[0], secant[1])
    d[-1] = _endpoint_slope(h[-1], h[-2], secant[-1], secant[-2])
    return d


def pchip_evaluate(xs, ys, ds, x) -> np.ndarray:
    """Evaluate the cubic Hermite interpolant with node slopes ``ds`` at ``x``."""
    xs, ys = _validate_nodes(xs, ys)
    ds = np.asarray(ds, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < xs[0]) or np.any(x > xs[-1]):
        raise ExtrapolationError(
            f"abscissae must lie in [{xs[0]}, {xs[-1]}], got range [{x.min()}, {x.max()}]")
    k = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
    h = xs[k + 1] - xs[k]
    dx = x - xs[k]
    # local power form; linear data give c2 = c3 = 0 up to rounding
    s = (ys[k + 1] - ys[k]) / h
    c2 = (3.0 * s - 2.0 * ds[k] - ds[k + 1]) / h
    c3 = (ds[k] + ds[k + 1] - 2.0 * s) / (h * h)
    out = ys[k] + dx * (ds[k] + dx * (c2 + dx * c3))
    # exact at nodes
    at_node = dx == 0.0
    out[at_node] = ys[k[at_node]]
    at_right = x == xs[-1]
    out[at_right] = ys[-1]
    return out


def extract_qois(curve: StressStrainCurve, abscissae: Sequence[float] = DEFAULT_ABSCISSAE) -> QoIVector:
    """Interpolate ``curve`` at ``abscissae``; no extrapolation."""
    ds = pchip_derivatives(curve.strain, curve.stress)
    values = pchip_evaluate(curve.strain, curve.stress, ds, abscissae)
    return QoIVector(values, tuple(abscissae))
