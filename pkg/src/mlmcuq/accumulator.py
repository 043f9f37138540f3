"""Mergeable per-level running moments.

Moments are kept as (count, mean, centred sum of squares) per output and
combined with the pairwise update of Chan et al., so accumulating a stream
in batches and merging partial accumulators agree with a single pass up to
floating point reassociation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .model import CoupledEvaluation


def _combine(n_a, mean_a, m2_a, n_b, mean_b, m2_b):
    n = n_a + n_b
    if n_a == 0:
        return n_b, mean_b.copy(), m2_b.copy()
    if n_b == 0:
        return n_a, mean_a.copy(), m2_a.copy()
    d = mean_b - mean_a
    mean = mean_a + d * (n_b / n)
    m2 = m2_a + m2_b + d * d * (n_a * n_b / n)
    return n, mean, m2


@dataclass
class LevelAccumulator:
    """Running statistics of one level's coupled samples.

    ``coupled`` accumulators see fine and coarse values; a base-level
    accumulator sees only fine values, and its difference is the fine
    value itself.
    """

    level: int
    n_outputs: int
    coupled: bool
    count: int = 0
    mean_delta: np.ndarray = field(default=None)
    m2_delta: np.ndarray = field(default=None)
    mean_fine: np.ndarray = field(default=None)
    m2_fine: np.ndarray = field(default=None)
    mean_coarse: np.ndarray = field(default=None)
    m2_coarse: np.ndarray = field(default=None)
    comoment: np.ndarray = field(default=None)  # sum (f - mean_f)(c - mean_c)
    cost_sum: float = 0.0

    def __post_init__(self):
        z = np.zeros(self.n_outputs)
        for name in ("mean_delta", "m2_delta", "mean_fine", "m2_fine", "mean_coarse", "m2_coarse", "comoment"):
            if getattr(self, name) is None:
                setattr(self, name, z.copy())
            else:
                setattr(self, name, np.asarray(getattr(self, name), dtype=float).copy())

    # -- updates

    def add_batch(self, fine: np.ndarray, coarse: Optional[np.ndarray], costs) -> None:
        """Add ``k`` samples: ``fine`` and ``coarse`` of shape ``(k, n_outputs)``."""
        fine = np.atleast_2d(np.asarray(fine, dtype=float))
        k = fine.shape[0]
        if k == 0:
            return
        if fine.shape[1] != self.n_outputs:
            raise ValueError(f"expected {self.n_outputs} outputs, got {fine.shape[1]}")
        if self.coupled != (coarse is not None):
            raise ValueError(f"level {self.level}: coupled={self.coupled} accumulator got "
                             f"{'coupled' if coarse is not None else 'uncoupled'} samples")
        if coarse is None:
            coarse = np.zeros_like(fine)
        else:
            coarse = np.atleast_2d(np.asarray(coarse, dtype=float))
        other = LevelAccumulator(self.level, self.n_outputs, self.coupled)
        other.count = k
        other.mean_fine = fine.mean(axis=0)
        other.mean_coarse = coarse.mean(axis=0)
        df = fine - other.mean_fine
        dc = coarse - other.mean_coarse
        other.m2_fine = np.sum(df * df, axis=0)
        other.m2_coarse = np.sum(dc * dc, axis=0)
        other.comoment = np.sum(df * dc, axis=0)
        delta = fine - coarse
        other.mean_delta = delta.mean(axis=0)
        dd = delta - other.mean_delta
        other.m2_delta = np.sum(dd * dd, axis=0)
        other.cost_sum = float(np.sum(np.asarray(costs, dtype=float)))
        self.merge_in(other)

    def add(self, e: CoupledEvaluation) -> None:
        self.add_batch(e.fine[None, :], None if e.coarse is None else e.coarse[None, :], [e.cost])

    def add_evaluations(self, evals: Iterable[CoupledEvaluation]) -> None:
        evals = list(evals)
        if not evals:
            return
        fine = np.array([e.fine for e in evals])
        coarse = None if self.coupled is False else np.array([e.coarse for e in evals])
        self.add_batch(fine, coarse, [e.cost for e in evals])

    def merge_in(self, other: "LevelAccumulator") -> None:
        if other.level != self.level or other.n_outputs != self.n_outputs or other.coupled != self.coupled:
            raise ValueError("cannot merge accumulators of different levels/shapes/coupling")
        na, nb = self.count, other.count
        n = na + nb
        if nb == 0:
            return
        if na == 0:
            for name in ("mean_delta", "m2_delta", "mean_fine", "m2_fine", "mean_coarse", "m2_coarse",
                         "comoment"):
                setattr(self, name, getattr(other, name).copy())
        else:
            df = other.mean_fine - self.mean_fine
            dc = other.mean_coarse - self.mean_coarse
            w = na * nb / n
            self.comoment = self.comoment + other.comoment + df * dc * w
            _, self.mean_fine, self.m2_fine = _combine(na, self.mean_fine, self.m2_fine,
                                                       nb, other.mean_fine, other.m2_fine)
            _, self.mean_coarse, self.m2_coarse = _combine(na, self.mean_coarse, self.m2_coarse,
                                                           nb, other.mean_coarse, other.m2_coarse)
            _, self.mean_delta, self.m2_delta = _combine(na, self.mean_delta, self.m2_delta,
                                                         nb, other.mean_delta, other.m2_delta)
        self.count = n
        self.cost_sum += other.cost_sum

    def merged(self, other: "LevelAccumulator") -> "LevelAccumulator":
        out = self.copy()
        out.merge_in(other)
        return out

    def copy(self) -> "LevelAccumulator":
        return LevelAccumulator(self.level, self.n_outputs, self.coupled, self.count,
                                self.mean_delta, self.m2_delta, self.mean_fine, self.m2_fine,
                                self.mean_coarse, self.m2_coarse, self.comoment, self.cost_sum)

    # -- derived statistics (sample variances, ddof = 1)

    def _var(self, m2):
        if self.count < 2:
            return np.full(self.n_outputs, np.nan)
        return np.maximum(m2 / (self.count - 1), 0.0)

    @property
    def var_delta(self) -> np.ndarray:
        return self._var(self.m2_delta)

    @property
    def var_fine(self) -> np.ndarray:
        return self._var(self.m2_fine)

    @property
    def var_coarse(self) -> np.ndarray:
        return self._var(self.m2_coarse)

    @property
    def cov_fine_coarse(self) -> np.ndarray:
        if self.count < 2:
            return np.full(self.n_outputs, np.nan)
        return self.comoment / (self.count - 1)

    @property
    def correlation(self) -> np.ndarray:
        """Pearson correlation of fine and coarse values; NaN where undefined."""
        denom = np.sqrt(self.m2_fine * self.m2_coarse)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(denom > 0, self.comoment / denom, np.nan)
        if not self.coupled or self.count < 2:
            rho = np.full(self.n_outputs, np.nan)
        return np.clip(rho, -1.0, 1.0)

    @property
    def mean_cost(self) -> float:
        return self.cost_sum / self.count if self.count else float("nan")

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "coupled": self.coupled,
            "count": self.count,
            "cost_total": self.cost_sum,
            "cost_mean": self.mean_cost if self.count else None,
            "mean_delta": self.mean_delta.tolist(),
            "var_delta": _nan_to_none(self.var_delta),
            "mean_fine": self.mean_fine.tolist(),
            "var_fine": _nan_to_none(self.var_fine),
            "correlation": _nan_to_none(self.correlation),
        }


def _nan_to_none(a: np.ndarray) -> list:
    return [None if not np.isfinite(x) else float(x) for x in a]
