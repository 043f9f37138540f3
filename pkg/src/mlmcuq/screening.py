"""Decay/growth rate fits and coarse-level screening.

Rates are slopes of unweighted least-squares lines through
``log2 |E[dQ_l]|`` (-alpha), ``log2 V[dQ_l]`` (-beta) and
``log2 mean cost_l`` (+gamma) against the level index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .accumulator import LevelAccumulator

log = logging.getLogger(__name__)


class ScreeningError(ValueError):
    pass


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_se: float
    levels: tuple[int, ...]
    residuals: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "slope_se": None if not np.isfinite(self.slope_se) else self.slope_se,
                "levels": list(self.levels), "residuals": list(self.residuals)}


def fit_line(levels: Sequence[int], log2_values: Sequence[float]) -> LineFit:
    """OLS line through at least two points; slope SE is NaN with two points."""
    x = np.asarray(levels, dtype=float)
    y = np.asarray(log2_values, dtype=float)
    if x.size < 2:
        raise ScreeningError(f"need at least 2 points for a rate fit, got {x.size}")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (slope * x + intercept)
    dof = x.size - 2
    sxx = np.sum((x - x.mean()) ** 2)
    se = float(np.sqrt(np.sum(res ** 2) / dof / sxx)) if dof > 0 else float("nan")
    return LineFit(float(slope), float(intercept), se, tuple(int(v) for v in levels),
                   tuple(float(r) for r in res))


def _usable(levels, values, what):
    pts = [(l, v) for l, v in zip(levels, values) if np.isfinite(v) and v > 0]
    dropped = [l for l, v in zip(levels, values) if not (np.isfinite(v) and v > 0)]
    if dropped:
        log.warning("%s: excluding levels %s with zero or undefined values from the fit", what, dropped)
    return [p[0] for p in pts], [np.log2(p[1]) for p in pts]


@dataclass(frozen=True)
class RateFit:
    alpha: float
    beta: float
    gamma: float
    alpha_se: float
    beta_se: float
    gamma_se: float
    alpha_per_output: tuple[float, ...]
    beta_per_output: tuple[float, ...]
    levels_ab: tuple[int, ...]
    levels_gamma: tuple[int, ...]
    fits: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def low_confidence(self) -> bool:
        return min(len(self.levels_ab), len(self.levels_gamma)) < 3

    def to_dict(self) -> dict:
        def f(x):
            return None if x is None or not np.isfinite(x) else float(x)
        return {
            "alpha": f(self.alpha), "beta": f(self.beta), "gamma": f(self.gamma),
            "alpha_se": f(self.alpha_se), "beta_se": f(self.beta_se), "gamma_se": f(self.gamma_se),
            "alpha_per_output": [f(a) for a in self.alpha_per_output],
            "beta_per_output": [f(b) for b in self.beta_per_output],
            "levels_alpha_beta": list(self.levels_ab),
            "levels_gamma": list(self.levels_gamma),
            "low_confidence": self.low_confidence,
        }


def _fit_or_nan(levels, values, what):
    lv, y = _usable(levels, values, what)
    if len(lv) < 2:
        return None
    return fit_line(lv, y)


def fit_rates(accs: Sequence[LevelAccumulator]) -> RateFit:
    """Fit (alpha, beta, gamma) from per-level accumulators.

    ``alpha`` and ``beta`` use coupled levels only (a base level's
    difference is the value itself); ``gamma`` uses every level.  The
    aggregate alpha/beta fit the per-level maximum over outputs.
    """
    accs = sorted((a for a in accs if a.count >= 2), key=lambda a: a.level)
    if not accs:
        raise ScreeningError("no level has at least 2 samples")
    coupled = [a for a in accs if a.coupled]
    lv = [a.level for a in coupled]
    n_out = accs[0].n_outputs
    mean_abs = np.array([np.abs(a.mean_delta) for a in coupled]).reshape(len(coupled), n_out)
    var = np.array([a.var_delta for a in coupled]).reshape(len(coupled), n_out)
    fa = _fit_or_nan(lv, mean_abs.max(axis=1), "alpha")
    fb = _fit_or_nan(lv, var.max(axis=1), "beta")
    fg = _fit_or_nan([a.level for a in accs], [a.mean_cost for a in accs], "gamma")
    if fa is None and fb is None and fg is None:
        raise ScreeningError("fewer than 2 usable levels for every rate")
    a_out, b_out = [], []
    for j in range(n_out):
        fj = _fit_or_nan(lv, mean_abs[:, j], f"alpha[{j}]")
        a_out.append(-fj.slope if fj else float("nan"))
        fj = _fit_or_nan(lv, var[:, j], f"beta[{j}]")
        b_out.append(-fj.slope if fj else float("nan"))
    nan = float("nan")
    return RateFit(
        alpha=-fa.slope if fa else nan, beta=-fb.slope if fb else nan, gamma=fg.slope if fg else nan,
        alpha_se=fa.slope_se if fa else nan, beta_se=fb.slope_se if fb else nan,
        gamma_se=fg.slope_se if fg else nan,
        alpha_per_output=tuple(a_out), beta_per_output=tuple(b_out),
        levels_ab=fa.levels if fa else (), levels_gamma=fg.levels if fg else (),
        fits={"alpha": fa, "beta": fb, "gamma": fg},
    )


def fit_cost_rate(levels: Sequence[int], costs: Sequence[float]) -> LineFit:
    """Slope of ``log2 cost`` against level (gamma)."""
    lv, y = _usable(levels, costs, "gamma")
    return fit_line(lv, y)


@dataclass(frozen=True)
class ScreeningPolicy:
    enabled: bool = True
    # separate preliminary samples per level for screening; None reuses warm-up
    samples: int | None = None


@dataclass(frozen=True)
class ScreeningResult:
    active: tuple[int, ...]
    dropped: tuple[int, ...]
    violations: dict  # level -> list of outputs with V[dQ] > V[Q]

    @property
    def single_level(self) -> bool:
        return len(self.active) == 1

    def to_dict(self) -> dict:
        return {"active_levels": list(self.active), "dropped_levels": list(self.dropped),
                "violations": {str(k): v for k, v in sorted(self.violations.items())},
                "single_level_fallback": self.single_level}


def screen_levels(accs: Sequence[LevelAccumulator], policy: ScreeningPolicy = ScreeningPolicy()) -> ScreeningResult:
    """Drop every level below the finest level whose coupling fails.

    A coupled level ``l`` fails when ``V[dQ_l] > V[Q_l]`` for some output;
    then level ``l-1`` and all coarser levels are dropped and ``l`` becomes
    the base level.  At least one level always survives.
    """
    accs = sorted(accs, key=lambda a: a.level)
    levels = tuple(a.level for a in accs)
    if not accs:
        raise ScreeningError("nothing to screen")
    violations = {}
    for a in accs:
        if not a.coupled:
            continue
        if a.count < 2:
            raise ScreeningError(f"level {a.level} needs at least 2 samples for screening")
        bad = np.flatnonzero(a.var_delta > a.var_fine)
        if bad.size:
            violations[a.level] = [int(j) for j in bad]
    if not policy.enabled or not violations:
        return ScreeningResult(levels, (), violations)
    cut = max(violations)
    active = tuple(l for l in levels if l >= cut)
    dropped = tuple(l for l in levels if l < cut)
    if len(active) == 1:
        log.warning("screening left a single level %d; falling back to plain Monte Carlo", active[0])
    return ScreeningResult(active, dropped, violations)


def correlation_profile(accs: Sequence[LevelAccumulator]) -> dict[int, np.ndarray]:
    """Per-level, per-output fine/coarse Pearson correlation (NaN if undefined)."""
    out = {}
    for a in sorted(accs, key=lambda a: a.level):
        if a.coupled:
            if a.count < 2:
                raise ScreeningError(f"level {a.level} needs at least 2 samples")
            out[a.level] = a.correlation
    return out


def decay_table(accs: Sequence[LevelAccumulator]) -> list[dict]:
    """Per-level expectation/variance decay rows (max over outputs)."""
    rows = []
    for a in sorted(accs, key=lambda a: a.level):
        rows.append({
            "level": a.level,
            "count": a.count,
            "coupled": a.coupled,
            "max_abs_mean_delta": float(np.max(np.abs(a.mean_delta))),
            "max_var_delta": float(np.nanmax(a.var_delta)) if a.count >= 2 else None,
            "max_abs_mean_fine": float(np.max(np.abs(a.mean_fine))),
            "max_var_fine": float(np.nanmax(a.var_fine)) if a.count >= 2 else None,
            "mean_cost": a.mean_cost,
        })
    return rows
