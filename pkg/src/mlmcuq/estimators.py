"""Estimator arithmetic: telescoping mean, optimal allocation, bias proxy, reports."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .accumulator import LevelAccumulator
from .screening import ScreeningError

MIN_SAMPLES = 2


class EstimatorUsageError(ValueError):
    pass


def mlmc_point_estimate(accs: Sequence[LevelAccumulator]) -> np.ndarray:
    """Sum over levels of the mean backward difference."""
    accs = list(accs)
    if not accs:
        raise EstimatorUsageError("no levels to combine")
    for a in accs:
        if a.count < MIN_SAMPLES:
            raise EstimatorUsageError(f"level {a.level} has {a.count} < {MIN_SAMPLES} samples")
    return np.sum([a.mean_delta for a in accs], axis=0)


def statistical_variance(accs: Sequence[LevelAccumulator]) -> np.ndarray:
    """Per-output estimator variance ``sum_l V[dQ_l] / N_l``."""
    return np.sum([a.var_delta / a.count for a in accs], axis=0)


def allocation_reals(var_deltas, cost_deltas, eps: float) -> np.ndarray:
    """Unrounded optimal sample counts."""
    V = np.asarray(var_deltas, dtype=float)
    C = np.asarray(cost_deltas, dtype=float)
    if V.shape != C.shape or V.ndim != 1 or V.size == 0:
        raise ValueError("need one variance and one cost per level")
    if np.any(V < 0) or not np.all(np.isfinite(V)):
        raise ValueError("variances must be finite and non-negative")
    if np.any(C <= 0) or not np.all(np.isfinite(C)):
        raise ValueError("costs must be finite and positive")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    total = np.sum(np.sqrt(V * C))
    return (2.0 / eps ** 2) * np.sqrt(V / C) * total


def optimal_allocation(var_deltas, cost_deltas, eps: float) -> np.ndarray:
    """``N_l = ceil((2/eps^2) sqrt(V_l/C_l) sum_k sqrt(V_k C_k))``, at least 2.

    The result satisfies ``sum_l V_l/N_l <= eps^2/2``.
    """
    n = allocation_reals(var_deltas, cost_deltas, eps)
    # guard against ceil of values a hair above an integer from rounding
    n = np.ceil(n * (1.0 - 1e-14))
    out = np.maximum(n, MIN_SAMPLES).astype(np.int64)
    V = np.asarray(var_deltas, dtype=float)
    # restore feasibility if the guard rounded down an exact integer too far
    while np.sum(V / out) > eps ** 2 / 2:
        out = out + (V > 0)
    return out


def bias_estimate(acc_L: LevelAccumulator, alpha: float) -> np.ndarray:
    """``|E[dQ_L]| / (2**alpha - 1)`` per output."""
    if not alpha > 0:
        raise ScreeningError(f"alpha must be positive for the bias estimate, got {alpha}")
    if acc_L.count < MIN_SAMPLES:
        raise EstimatorUsageError(f"level {acc_L.level} needs at least {MIN_SAMPLES} samples")
    return np.abs(acc_L.mean_delta) / (2.0 ** alpha - 1.0)


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        return None if not math.isfinite(float(x)) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


@dataclass
class EstimatorReport:
    method: str                        # "MC" or "MLMC"
    estimate: list
    stat_error: list                   # 1 standard deviation per output
    bias: Optional[list]               # per output, None when not estimable
    eps: Optional[float]
    levels: list                       # per-level accumulator summaries
    total_cost: float                  # model-reported seconds, active levels
    screening_cost: float = 0.0
    converged: bool = False
    flags: list = field(default_factory=list)
    rates: Optional[dict] = None
    alpha_used: Optional[float] = None
    screening: Optional[dict] = None
    run_seed: Optional[int] = None
    n_outputs: int = 0
    config_digest: Optional[str] = None
    tool_version: Optional[str] = None
    abscissae: Optional[list] = None

    @property
    def n_by_level(self) -> dict[int, int]:
        return {int(l["level"]): int(l["count"]) for l in self.levels}

    @property
    def cost_by_level(self) -> dict[int, float]:
        return {int(l["level"]): float(l["cost_total"]) for l in self.levels}

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorReport":
        return cls(**d)

    @classmethod
    def read(cls, path: str | Path) -> "EstimatorReport":
        return cls.from_dict(json.loads(Path(path).read_text()))
