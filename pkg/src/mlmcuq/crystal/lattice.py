"""HCP crystallography: slip/twin systems and hexagonal elasticity.

Crystal frame: ``a1`` along x, ``c`` along z.  Miller-Bravais directions
``[uvtw]`` map to ``u*a1 + v*a2 + t*a3 + w*c`` and plane normals ``(hkil)``
to ``[h, (h + 2k)/sqrt(3), l/(c/a)]`` (lattice parameter ``a = 1``).

Tensors are handled in Voigt order ``11, 22, 33, 23, 13, 12``; stresses
are stored plainly, strains with engineering shears.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQRT3 = np.sqrt(3.0)

BASAL = "basal"
PRISMATIC = "prismatic"
PYR_A = "pyr<a>"
PYR_CA = "pyr<c+a>"
T1 = "T1"
C2 = "C2"
SLIP_FAMILIES = (BASAL, PRISMATIC, PYR_A, PYR_CA)
TWIN_FAMILIES = (T1, C2)

# (direction [uvtw], plane (hkil)) pairs
_BASAL = [
    ((2, -1, -1, 0), (0, 0, 0, 1)),
    ((-1, 2, -1, 0), (0, 0, 0, 1)),
    ((-1, -1, 2, 0), (0, 0, 0, 1)),
]
_PRISMATIC = [
    ((2, -1, -1, 0), (0, 1, -1, 0)),
    ((-1, 2, -1, 0), (-1, 0, 1, 0)),
    ((-1, -1, 2, 0), (1, -1, 0, 0)),
]
_PYR_A = [
    ((-1, 2, -1, 0), (1, 0, -1, 1)),
    ((-2, 1, 1, 0), (0, 1, -1, 1)),
    ((-1, -1, 2, 0), (-1, 1, 0, 1)),
    ((1, -2, 1, 0), (-1, 0, 1, 1)),
    ((2, -1, -1, 0), (0, -1, 1, 1)),
    ((1, 1, -2, 0), (1, -1, 0, 1)),
]
_PYR_CA = [
    ((-2, 1, 1, 3), (1, 0, -1, 1)),
    ((-1, -1, 2, 3), (1, 0, -1, 1)),
    ((-1, -1, 2, 3), (0, 1, -1, 1)),
    ((1, -2, 1, 3), (0, 1, -1, 1)),
    ((1, -2, 1, 3), (-1, 1, 0, 1)),
    ((2, -1, -1, 3), (-1, 1, 0, 1)),
    ((2, -1, -1, 3), (-1, 0, 1, 1)),
    ((1, 1, -2, 3), (-1, 0, 1, 1)),
    ((1, 1, -2, 3), (0, -1, 1, 1)),
    ((-1, 2, -1, 3), (0, -1, 1, 1)),
    ((-1, 2, -1, 3), (1, -1, 0, 1)),
    ((-2, 1, 1, 3), (1, -1, 0, 1)),
]
# {10-12}<-1011> extension twins
_T1 = [
    ((-1, 0, 1, 1), (1, 0, -1, 2)),
    ((0, -1, 1, 1), (0, 1, -1, 2)),
    ((1, -1, 0, 1), (-1, 1, 0, 2)),
    ((1, 0, -1, 1), (-1, 0, 1, 2)),
    ((0, 1, -1, 1), (0, -1, 1, 2)),
    ((-1, 1, 0, 1), (1, -1, 0, 2)),
]
# {10-11}<10-1-2> contraction twins
_C2 = [
    ((1, 0, -1, -2), (1, 0, -1, 1)),
    ((0, 1, -1, -2), (0, 1, -1, 1)),
    ((-1, 1, 0, -2), (-1, 1, 0, 1)),
    ((-1, 0, 1, -2), (-1, 0, 1, 1)),
    ((0, -1, 1, -2), (0, -1, 1, 1)),
    ((1, -1, 0, -2), (1, -1, 0, 1)),
]


def miller_bravais_direction(uvtw, c_over_a: float) -> np.ndarray:
    u, v, t, w = uvtw
    a1 = np.array([1.0, 0.0, 0.0])
    a2 = np.array([-0.5, SQRT3 / 2, 0.0])
    a3 = np.array([-0.5, -SQRT3 / 2, 0.0])
    d = u * a1 + v * a2 + t * a3 + w * np.array([0.0, 0.0, c_over_a])
    return d / np.linalg.norm(d)


def miller_bravais_normal(hkil, c_over_a: float) -> np.ndarray:
    h, k, i, l = hkil
    if h + k + i != 0:
        raise ValueError(f"invalid Miller-Bravais plane {hkil}: h + k + i != 0")
    n = np.array([h, (h + 2 * k) / SQRT3, l / c_over_a], dtype=float)
    return n / np.linalg.norm(n)


def twin_shear(c_over_a: float, family: str) -> float:
    """Crystallographic twinning shear magnitude for ``T1`` or ``C2``."""
    g = c_over_a
    if family == T1:
        return abs(3.0 - g * g) / (SQRT3 * g)
    if family == C2:
        return abs(4.0 * g * g - 9.0) / (4.0 * SQRT3 * g)
    raise ValueError(f"unknown twin family {family!r}")


def schmid_voigt(s: np.ndarray, n: np.ndarray) -> np.ndarray:
    """``sym(s x n)`` as an engineering-shear Voigt vector (rows for stacks)."""
    s = np.atleast_2d(s)
    n = np.atleast_2d(n)
    P = 0.5 * (s[:, :, None] * n[:, None, :] + n[:, :, None] * s[:, None, :])
    return np.stack([P[:, 0, 0], P[:, 1, 1], P[:, 2, 2],
                     2 * P[:, 1, 2], 2 * P[:, 0, 2], 2 * P[:, 0, 1]], axis=1)


def resolved_shear(stress: np.ndarray, s: np.ndarray, n: np.ndarray) -> float:
    """Schmid projection ``stress : sym(s x n)`` of a 3x3 stress."""
    s = np.asarray(s, dtype=float)
    n = np.asarray(n, dtype=float)
    P = 0.5 * (np.outer(s, n) + np.outer(n, s))
    return float(np.tensordot(np.asarray(stress, dtype=float), P))


@dataclass(frozen=True)
class SlipTwinSystemTable:
    slip_s: np.ndarray
    slip_n: np.ndarray
    slip_family: tuple[str, ...]
    twin_s: np.ndarray
    twin_n: np.ndarray
    twin_family: tuple[str, ...]
    twin_gamma_char: np.ndarray

    @property
    def n_slip(self) -> int:
        return len(self.slip_family)

    @property
    def n_twin(self) -> int:
        return len(self.twin_family)

    def slip_schmid(self) -> np.ndarray:
        return schmid_voigt(self.slip_s, self.slip_n)

    def twin_schmid(self) -> np.ndarray:
        return schmid_voigt(self.twin_s, self.twin_n)

    def slip_mask(self, family: str) -> np.ndarray:
        return np.array([f == family for f in self.slip_family])

    def twin_mask(self, family: str) -> np.ndarray:
        return np.array([f == family for f in self.twin_family])


def hcp_systems(c_over_a: float = 1.635, gamma_char_t1: float = 0.129,
                gamma_char_c2: float = 0.138) -> SlipTwinSystemTable:
    """The 24 slip and 12 twin systems of an HCP crystal."""
    slip = [(BASAL, _BASAL), (PRISMATIC, _PRISMATIC), (PYR_A, _PYR_A), (PYR_CA, _PYR_CA)]
    twin = [(T1, _T1, gamma_char_t1), (C2, _C2, gamma_char_c2)]
    ss, sn, sf = [], [], []
    for fam, pairs in slip:
        for d, p in pairs:
            ss.append(miller_bravais_direction(d, c_over_a))
            sn.append(miller_bravais_normal(p, c_over_a))
            sf.append(fam)
    ts, tn, tf, tg = [], [], [], []
    for fam, pairs, g in twin:
        for d, p in pairs:
            ts.append(miller_bravais_direction(d, c_over_a))
            tn.append(miller_bravais_normal(p, c_over_a))
            tf.append(fam)
            tg.append(g)
    return SlipTwinSystemTable(np.array(ss), np.array(sn), tuple(sf),
                               np.array(ts), np.array(tn), tuple(tf), np.array(tg, dtype=float))


def hexagonal_stiffness(C11: float, C12: float, C13: float, C33: float, C44: float) -> np.ndarray:
    """6x6 Voigt stiffness of a transversely isotropic (hexagonal) crystal."""
    C66 = 0.5 * (C11 - C12)
    return np.array([
        [C11, C12, C13, 0, 0, 0],
        [C12, C11, C13, 0, 0, 0],
        [C13, C13, C33, 0, 0, 0],
        [0, 0, 0, C44, 0, 0],
        [0, 0, 0, 0, C44, 0],
        [0, 0, 0, 0, 0, C66],
    ], dtype=float)


def voigt_to_tensor(v: np.ndarray) -> np.ndarray:
    """Stress-like Voigt vectors ``(..., 6)`` to symmetric ``(..., 3, 3)``."""
    v = np.asarray(v, dtype=float)
    t = np.empty(v.shape[:-1] + (3, 3))
    t[..., 0, 0], t[..., 1, 1], t[..., 2, 2] = v[..., 0], v[..., 1], v[..., 2]
    t[..., 1, 2] = t[..., 2, 1] = v[..., 3]
    t[..., 0, 2] = t[..., 2, 0] = v[..., 4]
    t[..., 0, 1] = t[..., 1, 0] = v[..., 5]
    return t


def strain_tensor_to_voigt(t: np.ndarray) -> np.ndarray:
    """Symmetric strain tensors to engineering-shear Voigt vectors."""
    t = np.asarray(t, dtype=float)
    return np.stack([t[..., 0, 0], t[..., 1, 1], t[..., 2, 2],
                     2 * t[..., 1, 2], 2 * t[..., 0, 2], 2 * t[..., 0, 1]], axis=-1)
