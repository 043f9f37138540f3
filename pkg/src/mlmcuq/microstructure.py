"""Nested polycrystal samples (grain sizes + orientations).

A level-``l`` microstructure holds ``n0 * 8**l`` grains.  Grain attributes
are drawn from per-attribute counter-based streams of the sample lineage,
so the first ``n0 * 8**(l-1)`` grains of a level-``l`` sample are exactly
the grains of the level-``(l-1)`` sample of the same lineage.  That prefix
nesting is the coupling between fine and coarse evaluations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .model import SampleKey

DEFAULT_GRAINS_PER_BASE = 8


class MicrostructureConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TextureSpec:
    """Ideal Bunge orientation (degrees) with isotropic half-normal scatter."""

    phi1: float = 90.0
    Phi: float = 0.0
    phi2: float = 0.0
    scatter_deg: float = 15.0

    def __post_init__(self):
        if not self.scatter_deg >= 0:
            raise MicrostructureConfigError(f"texture scatter must be >= 0, got {self.scatter_deg}")
        if not 0 <= self.Phi <= 180:
            raise MicrostructureConfigError(f"Phi must lie in [0, 180], got {self.Phi}")


@dataclass(frozen=True)
class LogNormalSpec:
    """Grain diameter distribution ``d ~ LogNormal(mu, sigma)``."""

    mu: float = 5.2983
    sigma: float = 0.2

    def __post_init__(self):
        if not self.sigma > 0:
            raise MicrostructureConfigError(f"lognormal sigma must be > 0, got {self.sigma}")

    @property
    def mean(self) -> float:
        return float(np.exp(self.mu + 0.5 * self.sigma ** 2))


@dataclass(frozen=True)
class Grain:
    diameter: float
    volume_weight: float
    orientation: tuple[float, float, float]


def bunge_matrix(euler_deg: np.ndarray) -> np.ndarray:
    """Bunge passive matrices ``g`` (sample -> crystal) for ``(..., 3)`` angles."""
    e = np.radians(np.asarray(euler_deg, dtype=float))
    c1, s1 = np.cos(e[..., 0]), np.sin(e[..., 0])
    C, S = np.cos(e[..., 1]), np.sin(e[..., 1])
    c2, s2 = np.cos(e[..., 2]), np.sin(e[..., 2])
    g = np.empty(e.shape[:-1] + (3, 3))
    g[..., 0, 0] = c1 * c2 - s1 * s2 * C
    g[..., 0, 1] = s1 * c2 + c1 * s2 * C
    g[..., 0, 2] = s2 * S
    g[..., 1, 0] = -c1 * s2 - s1 * c2 * C
    g[..., 1, 1] = -s1 * s2 + c1 * c2 * C
    g[..., 1, 2] = c2 * S
    g[..., 2, 0] = s1 * S
    g[..., 2, 1] = -c1 * S
    g[..., 2, 2] = C
    return g


def bunge_angles(g: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Inverse of :func:`bunge_matrix`; angles in degrees, wrapped to range."""
    g = np.asarray(g, dtype=float)
    Phi = np.arccos(np.clip(g[..., 2, 2], -1.0, 1.0))
    general = np.sin(Phi) > tol
    phi1 = np.where(general, np.arctan2(g[..., 2, 0], -g[..., 2, 1]),
                    np.arctan2(g[..., 0, 1], g[..., 0, 0]))
    phi2 = np.where(general, np.arctan2(g[..., 0, 2], g[..., 1, 2]), 0.0)
    out = np.degrees(np.stack([phi1, Phi, phi2], axis=-1))
    out[..., 0] = np.mod(out[..., 0], 360.0)
    out[..., 2] = np.mod(out[..., 2], 360.0)
    # mod can return 360.0 for tiny negative inputs
    out[..., 0] = np.where(out[..., 0] >= 360.0, 0.0, out[..., 0])
    out[..., 2] = np.where(out[..., 2] >= 360.0, 0.0, out[..., 2])
    return out


def axis_angle_matrix(axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Active rotation matrices about unit ``axis`` ``(..., 3)`` by ``angle`` (rad)."""
    axis = np.asarray(axis, dtype=float)
    x, y, z = axis[..., 0], axis[..., 1], axis[..., 2]
    c, s = np.cos(angle), np.sin(angle)
    t = 1.0 - c
    R = np.empty(axis.shape[:-1] + (3, 3))
    R[..., 0, 0] = c + x * x * t
    R[..., 0, 1] = x * y * t - z * s
    R[..., 0, 2] = x * z * t + y * s
    R[..., 1, 0] = y * x * t + z * s
    R[..., 1, 1] = c + y * y * t
    R[..., 1, 2] = y * z * t - x * s
    R[..., 2, 0] = z * x * t - y * s
    R[..., 2, 1] = z * y * t + x * s
    R[..., 2, 2] = c + z * z * t
    return R


def misorientation_deg(g_a: np.ndarray, g_b: np.ndarray) -> np.ndarray:
    """Rotation angle between orientations (no crystal symmetry reduction)."""
    d = np.einsum("...ij,...kj->...ik", g_a, g_b)
    tr = np.trace(d, axis1=-2, axis2=-1)
    return np.degrees(np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0)))


@dataclass(frozen=True)
class Microstructure:
    level: int
    diameters: np.ndarray
    euler_deg: np.ndarray  # (n, 3) Bunge angles

    def __post_init__(self):
        d = np.asarray(self.diameters, dtype=float)
        e = np.asarray(self.euler_deg, dtype=float).reshape(-1, 3)
        if d.shape[0] != e.shape[0] or d.size == 0:
            raise ValueError("need one orientation per grain and at least one grain")
        if np.any(d <= 0):
            raise ValueError("grain diameters must be positive")
        object.__setattr__(self, "diameters", d)
        object.__setattr__(self, "euler_deg", e)

    def __len__(self) -> int:
        return self.diameters.size

    @property
    def weights(self) -> np.ndarray:
        v = self.diameters ** 3
        return v / v.sum()

    @property
    def grains(self) -> list[Grain]:
        w = self.weights
        return [Grain(float(d), float(wi), tuple(float(a) for a in e))
                for d, wi, e in zip(self.diameters, w, self.euler_deg)]

    def crystal_to_sample(self) -> np.ndarray:
        """``(n, 3, 3)`` rotations taking crystal-frame vectors to the sample frame."""
        return np.swapaxes(bunge_matrix(self.euler_deg), -1, -2)

    def prefix(self, n: int, level: int) -> "Microstructure":
        return Microstructure(level, self.diameters[:n], self.euler_deg[:n])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["diameter", "weight", "phi1", "Phi", "phi2"])
            for d, wi, e in zip(self.diameters, self.weights, self.euler_deg):
                w.writerow([repr(float(d)), repr(float(wi))] + [repr(float(a)) for a in e])


def grain_count(level: int, n0: int = DEFAULT_GRAINS_PER_BASE) -> int:
    return n0 * 8 ** level


def sample_orientations(texture: TextureSpec, axes: np.ndarray, angles_rad: np.ndarray) -> np.ndarray:
    """Perturb the ideal orientation by active rotations in the sample frame."""
    ideal = np.array([texture.phi1, texture.Phi, texture.phi2], dtype=float)
    n = angles_rad.shape[0]
    out = np.tile(ideal, (n, 1))
    moved = angles_rad != 0.0
    if np.any(moved):
        g0 = bunge_matrix(ideal)
        P = axis_angle_matrix(axes[moved], angles_rad[moved])
        # crystal->sample becomes P @ g0.T, i.e. g = g0 @ P.T
        g = np.einsum("ij,nkj->nik", g0, P)
        out[moved] = bunge_angles(g)
    return out


def sample_microstructure(key: SampleKey, texture: TextureSpec = TextureSpec(),
                          grain_stats: LogNormalSpec = LogNormalSpec(),
                          n0: int = DEFAULT_GRAINS_PER_BASE,
                          level: int | None = None) -> Microstructure:
    """Sample the microstructure of ``key``'s lineage at ``level`` (default ``key.level``)."""
    if n0 < 1:
        raise MicrostructureConfigError(f"n0 must be positive, got {n0}")
    level = key.level if level is None else level
    if level < 0:
        raise MicrostructureConfigError(f"level must be non-negative, got {level}")
    n = grain_count(level, n0)
    lineage = (key.sample_index, key.level)
    seed = key.run_seed
    diam = rng.stream(seed, *lineage, rng.TAG_DIAMETER).lognormal(grain_stats.mu, grain_stats.sigma, n)
    axes = rng.stream(seed, *lineage, rng.TAG_AXIS).standard_normal((n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = np.abs(rng.stream(seed, *lineage, rng.TAG_ANGLE).standard_normal(n))
    angles *= np.radians(texture.scatter_deg)
    return Microstructure(level, diam, sample_orientations(texture, axes, angles))
