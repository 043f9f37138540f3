"""Sampling engine: adaptive MLMC, plain MC and the MC/MLMC comparison.

Sample indices are handed out sequentially per level, results come back in
index order whatever the worker count, and accumulators are updated in
that order, so a run is a deterministic function of its configuration and
seed.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .accumulator import LevelAccumulator
from .estimators import (EstimatorReport, bias_estimate, mlmc_point_estimate, optimal_allocation,
                         statistical_variance)
from .ledger import LedgerRecord, SampleLedger
from .model import CoupledEvaluation, ModelEvaluationError, MultilevelModel, SampleKey
from .screening import (ScreeningError, ScreeningPolicy, ScreeningResult, correlation_profile, decay_table,
                        fit_rates, screen_levels)

log = logging.getLogger(__name__)

MAX_RETRIES = 3
FLAG_BIAS_UNMET = "bias_unmet"
FLAG_BUDGET = "budget_exhausted"
FLAG_BIAS_UNCHECKED = "bias_unchecked"
FLAG_MAX_ITER = "max_iterations"


def screening_seed(run_seed: int) -> int:
    """Seed of the preliminary screening samples, distinct from the run's."""
    state = np.random.SeedSequence(run_seed, spawn_key=(0x5C2EE7,)).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


# worker-side model, set once per process
_WORKER_MODEL: Optional[MultilevelModel] = None


def _init_worker(model):
    global _WORKER_MODEL
    _WORKER_MODEL = model


def _evaluate(args):
    key, coupled = args
    t0 = time.perf_counter()
    try:
        e = _WORKER_MODEL.evaluate_coupled(key, coupled=coupled)
    except ModelEvaluationError as exc:
        return None, str(exc), time.perf_counter() - t0
    return e, None, time.perf_counter() - t0


class BudgetExhausted(RuntimeError):
    pass


class Sampler:
    """Draws coupled evaluations by index, through a ledger and a worker pool."""

    def __init__(self, model: MultilevelModel, run_seed: int, workers: int = 1,
                 ledger: SampleLedger | None = None, max_retries: int = MAX_RETRIES):
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.model = model
        self.run_seed = int(run_seed)
        self.workers = workers
        self.ledger = ledger if ledger is not None else SampleLedger(None)
        self.max_retries = max_retries
        self._next: dict[tuple[int, int], int] = {}
        self._pool: ProcessPoolExecutor | None = None
        self.wall_s = 0.0
        self.evaluated = 0
        self.replayed = 0

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        self.ledger.flush()
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def reset_indices(self):
        self._next.clear()

    def _take(self, seed: int, level: int, n: int) -> list[int]:
        start = self._next.get((seed, level), 0)
        self._next[(seed, level)] = start + n
        return list(range(start, start + n))

    def _run(self, keys: list[SampleKey], coupled: bool):
        if self.workers == 1 or len(keys) < 2:
            _init_worker(self.model)
            return [_evaluate((k, coupled)) for k in keys]
        if self._pool is None:
            self._pool = ProcessPoolExecutor(self.workers, initializer=_init_worker, initargs=(self.model,))
        chunk = max(1, math.ceil(len(keys) / (4 * self.workers)))
        return list(self._pool.map(_evaluate, [(k, coupled) for k in keys], chunksize=chunk))

    def draw(self, level: int, n: int, coupled: bool = True, seed: int | None = None) -> list[CoupledEvaluation]:
        """``n`` evaluations at ``level`` with fresh indices, in index order.

        A failed evaluation is replaced, in its position, by the next unused
        index, at most ``max_retries`` times per failure.
        """
        seed = self.run_seed if seed is None else seed
        with_coarse = coupled and level > self.model.hierarchy.min_level
        results: dict[int, CoupledEvaluation] = {}
        order = self._take(seed, level, n)
        todo = [(slot, idx, 0) for slot, idx in enumerate(order)]
        while todo:
            fresh = []
            got = {}
            for slot, idx, tries in todo:
                rec = self.ledger.get(seed, level, idx)
                if rec is None:
                    fresh.append((slot, idx, tries))
                    continue
                if not rec.failed and (rec.coarse is not None) != with_coarse:
                    raise ValueError(f"ledger record (seed={seed}, level={level}, index={idx}) does not "
                                     f"match the requested coupling")
                self.replayed += 1
                got[slot] = rec
            if fresh:
                outs = self._run([SampleKey(seed, idx, level) for _, idx, _ in fresh], with_coarse)
                for (slot, idx, tries), (e, err, wall) in zip(fresh, outs):
                    self.wall_s += wall
                    self.evaluated += 1
                    if e is None:
                        rec = LedgerRecord(seed, idx, level, None, None, 0.0, wall, True, err)
                    else:
                        rec = LedgerRecord(seed, idx, level, tuple(float(x) for x in e.fine),
                                           None if e.coarse is None else tuple(float(x) for x in e.coarse),
                                           float(e.cost), wall)
                    self.ledger.append(rec)
                    got[slot] = rec
            retry = []
            for slot, idx, tries in todo:
                rec = got[slot]
                if rec.failed:
                    log.warning("evaluation failed at seed=%d level=%d index=%d: %s", seed, level, idx, rec.error)
                    if tries + 1 > self.max_retries:
                        self.ledger.flush()
                        raise ModelEvaluationError(
                            f"giving up after {self.max_retries} retries: {rec.error}",
                            SampleKey(seed, idx, level))
                    retry.append((slot, self._take(seed, level, 1)[0], tries + 1))
                else:
                    results[slot] = CoupledEvaluation(
                        np.array(rec.fine), None if rec.coarse is None else np.array(rec.coarse), rec.cost_s)
            todo = retry
        self.ledger.flush()
        return [results[s] for s in range(n)]


@dataclass(frozen=True)
class MLMCSettings:
    eps: float
    warmup: int = 8
    screening: ScreeningPolicy = field(default_factory=ScreeningPolicy)
    alpha: Optional[float] = None          # fixed bias-decay rate; None fits it
    alpha_fallback: float = 1.0            # used when the fit is impossible
    start_max_level: Optional[int] = None  # None starts with every level
    budget: Optional[float] = None         # model-cost seconds
    cost_source: str = "observed"          # or "nominal"
    max_iterations: int = 200

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.warmup < 2:
            raise ValueError(f"warmup must be >= 2, got {self.warmup}")
        if self.cost_source not in ("observed", "nominal"):
            raise ValueError(f"cost_source must be 'observed' or 'nominal', got {self.cost_source!r}")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.alpha_fallback > 0:
            raise ValueError("alpha_fallback must be positive")
        if self.budget is not None and not self.budget > 0:
            raise ValueError("budget must be positive")


class _Run:
    """Mutable state of one adaptive MLMC run."""

    def __init__(self, model: MultilevelModel, sampler: Sampler, settings: MLMCSettings):
        self.model = model
        self.sampler = sampler
        self.s = settings
        self.accs: dict[int, LevelAccumulator] = {}
        self.spent = 0.0
        self.screening_cost = 0.0
        self.flags: list[str] = []

    def _check_budget(self, projected: float) -> bool:
        if self.s.budget is not None and self.spent + projected > self.s.budget:
            if FLAG_BUDGET not in self.flags:
                self.flags.append(FLAG_BUDGET)
            return False
        return True

    def draw_into(self, acc: LevelAccumulator, n: int, seed: int | None = None) -> None:
        if n <= 0:
            return
        evals = self.sampler.draw(acc.level, n, coupled=acc.coupled, seed=seed)
        acc.add_evaluations(evals)
        self.spent += sum(e.cost for e in evals)

    def cost_of(self, acc: LevelAccumulator) -> float:
        if self.s.cost_source == "nominal" or acc.count == 0:
            return self.model.level_cost(acc.level, acc.coupled)
        return acc.mean_cost


def _level_summaries(accs: Sequence[LevelAccumulator]) -> list[dict]:
    return [a.to_dict() for a in sorted(accs, key=lambda a: a.level)]


def run_adaptive_mlmc(model: MultilevelModel, settings: MLMCSettings, sampler: Sampler,
                      meta: dict | None = None) -> EstimatorReport:
    """Adaptive MLMC to mean-square error ``eps**2`` in the max-output norm.

    Warm-up samples are always drawn; the budget caps everything after
    them and a run that stops on it is flagged ``budget_exhausted``.
    """
    H = model.hierarchy
    s = settings
    run = _Run(model, sampler, s)
    top = H.max_level if s.start_max_level is None else min(max(s.start_max_level, H.min_level), H.max_level)
    initial = [l for l in H.indices() if l <= top]
    n_out = model.n_outputs
    screening = ScreeningResult(tuple(initial), (), {})
    screen_accs: list[LevelAccumulator] = []
    do_screen = s.screening.enabled and len(initial) > 1

    if do_screen and s.screening.samples is not None:
        seed = screening_seed(sampler.run_seed)
        for l in initial:
            acc = LevelAccumulator(l, n_out, l > H.min_level)
            run.draw_into(acc, s.screening.samples, seed=seed)
            screen_accs.append(acc)
        screening = screen_levels(screen_accs, s.screening)
        run.screening_cost = sum(a.cost_sum for a in screen_accs)
    else:
        for l in initial:
            acc = LevelAccumulator(l, n_out, l > H.min_level)
            run.draw_into(acc, s.warmup)
            run.accs[l] = acc
        if do_screen:
            screening = screen_levels(list(run.accs.values()), s.screening)
            base = screening.active[0]
            for l in list(run.accs):
                if l < base or (l == base and run.accs[l].coupled):
                    screen_accs.append(run.accs.pop(l))
            run.screening_cost = sum(a.cost_sum for a in screen_accs)

    active = list(screening.active)
    base = active[0]
    for l in active:
        if l not in run.accs:
            acc = LevelAccumulator(l, n_out, l > base)
            run.draw_into(acc, s.warmup)
            run.accs[l] = acc

    alpha_used = None
    rates = None
    bias = None
    converged = False
    for _ in range(s.max_iterations):
        levels = sorted(run.accs)
        accs = [run.accs[l] for l in levels]
        V = np.array([np.max(a.var_delta) for a in accs])
        C = np.array([run.cost_of(a) for a in accs])
        target = optimal_allocation(V, C, s.eps)
        short = {l: int(max(0, n - a.count)) for l, n, a in zip(levels, target, accs)}
        if any(short.values()):
            projected = sum(short[l] * c for l, c in zip(levels, C))
            if not run._check_budget(projected):
                break
            for l in levels:
                run.draw_into(run.accs[l], short[l])
            continue
        # variance condition holds for the current estimates; check bias
        top_acc = run.accs[levels[-1]]
        if not top_acc.coupled:
            if FLAG_BIAS_UNCHECKED not in run.flags:
                run.flags.append(FLAG_BIAS_UNCHECKED)
            converged = True
            break
        rates, alpha_used = _alpha(accs, s)
        bias = bias_estimate(top_acc, alpha_used)
        if np.max(bias) <= s.eps / math.sqrt(2.0):
            converged = True
            break
        nxt = levels[-1] + 1
        if nxt > H.max_level:
            run.flags.append(FLAG_BIAS_UNMET)
            break
        acc = LevelAccumulator(nxt, n_out, True)
        if not run._check_budget(s.warmup * model.level_cost(nxt, True)):
            break
        run.draw_into(acc, s.warmup)
        run.accs[nxt] = acc
    else:
        run.flags.append(FLAG_MAX_ITER)

    accs = [run.accs[l] for l in sorted(run.accs)]
    if rates is None:
        rates, alpha_used = _alpha(accs, s)
    if not accs[-1].coupled:
        alpha_used = None
    elif bias is None:
        bias = bias_estimate(accs[-1], alpha_used)
    screen_info = screening.to_dict()
    screen_info["levels"] = _level_summaries(screen_accs)
    screen_info["separate_samples"] = s.screening.samples
    meta = meta or {}
    return EstimatorReport(
        method="MLMC",
        estimate=mlmc_point_estimate(accs).tolist(),
        stat_error=np.sqrt(statistical_variance(accs)).tolist(),
        bias=None if bias is None else bias.tolist(),
        eps=s.eps,
        levels=_level_summaries(accs),
        total_cost=float(sum(a.cost_sum for a in accs)),
        screening_cost=float(run.screening_cost),
        converged=converged and FLAG_BUDGET not in run.flags,
        flags=list(run.flags),
        rates=None if rates is None else rates.to_dict(),
        alpha_used=alpha_used,
        screening=screen_info,
        run_seed=sampler.run_seed,
        n_outputs=n_out,
        config_digest=meta.get("config_digest"),
        tool_version=meta.get("tool_version"),
        abscissae=meta.get("abscissae"),
    )


def _alpha(accs, s: MLMCSettings):
    """Rate fit over the run's coupled levels and the bias-decay rate to use."""
    try:
        rates = fit_rates(accs)
    except ScreeningError:
        rates = None
    if s.alpha is not None:
        return rates, float(s.alpha)
    if rates is not None and np.isfinite(rates.alpha) and rates.alpha > 0:
        return rates, float(rates.alpha)
    return rates, float(s.alpha_fallback)


def mc_estimate(model: MultilevelModel, level: int, n: int, sampler: Sampler,
                meta: dict | None = None, eps: float | None = None) -> EstimatorReport:
    """Plain Monte Carlo mean of ``n`` fine-level evaluations (no coarse solves)."""
    if n < 2:
        raise ValueError(f"MC needs n >= 2, got {n}")
    if level not in model.hierarchy:
        raise ValueError(f"level {level} outside hierarchy")
    acc = LevelAccumulator(level, model.n_outputs, False)
    acc.add_evaluations(sampler.draw(level, n, coupled=False))
    return _mc_report(model, acc, sampler, meta, eps, [])


def _mc_report(model, acc, sampler, meta, eps, flags):
    meta = meta or {}
    return EstimatorReport(
        method="MC",
        estimate=acc.mean_fine.tolist(),
        stat_error=np.sqrt(acc.var_fine / acc.count).tolist(),
        bias=None,
        eps=eps,
        levels=_level_summaries([acc]),
        total_cost=float(acc.cost_sum),
        converged=eps is None or bool(np.max(acc.var_fine / acc.count) <= eps ** 2 / 2),
        flags=flags,
        run_seed=sampler.run_seed,
        n_outputs=model.n_outputs,
        config_digest=meta.get("config_digest"),
        tool_version=meta.get("tool_version"),
        abscissae=meta.get("abscissae"),
    )


def run_mc(model: MultilevelModel, level: int, eps: float, sampler: Sampler, warmup: int = 8,
           budget: float | None = None, meta: dict | None = None) -> EstimatorReport:
    """MC at ``level`` with ``N = ceil(2 max V / eps**2)`` after a warm-up."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    acc = LevelAccumulator(level, model.n_outputs, False)
    acc.add_evaluations(sampler.draw(level, max(2, warmup), coupled=False))
    flags = []
    for _ in range(100):
        need = int(max(2, math.ceil(2.0 * np.max(acc.var_fine) / eps ** 2))) - acc.count
        if need <= 0:
            break
        if budget is not None and acc.cost_sum + need * acc.mean_cost > budget:
            flags.append(FLAG_BUDGET)
            break
        acc.add_evaluations(sampler.draw(level, need, coupled=False))
    flags.append(FLAG_BIAS_UNCHECKED)
    return _mc_report(model, acc, sampler, meta, eps, flags)


@dataclass(frozen=True)
class ComparisonRow:
    eps: float
    mc_n_fine: int
    mc_cost_hr: float
    mlmc_n_by_level: dict
    mlmc_cost_hr: float
    speedup: float
    cost_fraction: dict
    flags: tuple

    def csv_row(self) -> list:
        nbl = ";".join(f"{l}:{n}" for l, n in sorted(self.mlmc_n_by_level.items()))
        return [repr(self.eps), self.mc_n_fine, f"{self.mc_cost_hr:.6f}", nbl,
                f"{self.mlmc_cost_hr:.6f}", f"{self.speedup:.6f}"]


COMPARISON_COLUMNS = ("eps", "mc_n_fine", "mc_cost_hr", "mlmc_n_by_level", "mlmc_cost_hr", "speedup")


def compare_mc_mlmc(model: MultilevelModel, settings: MLMCSettings, eps_list: Sequence[float],
                    sampler: Sampler, meta: dict | None = None):
    """MLMC at every tolerance against the approximate fine-level MC cost.

    MC's fine-level sample count is taken as the MLMC count of the base
    (coarsest active) level, whose difference is the full value and so
    carries the variance MC has to beat, priced at the fine level's
    single-sample cost.  With two active levels this is the count of the
    level below the finest.
    """
    if not len(eps_list):
        raise ValueError("empty tolerance list")
    rows, reports = [], []
    for eps in eps_list:
        sampler.reset_indices()
        s = MLMCSettings(**{**settings.__dict__, "eps": float(eps)})
        rep = run_adaptive_mlmc(model, s, sampler, meta)
        n = rep.n_by_level
        levels = sorted(n)
        L = levels[-1]
        n_fine = n[levels[0]]
        top = rep.levels[-1]
        fine_cost = model.fine_sample_cost(L, top["cost_mean"])
        if len(levels) == 1:
            fine_cost = top["cost_mean"]
        mc_cost = n_fine * fine_cost
        total = rep.total_cost
        rows.append(ComparisonRow(
            eps=float(eps), mc_n_fine=int(n_fine), mc_cost_hr=mc_cost / 3600.0,
            mlmc_n_by_level=n, mlmc_cost_hr=total / 3600.0,
            speedup=mc_cost / total if total > 0 else float("nan"),
            cost_fraction={l: c / total for l, c in rep.cost_by_level.items()},
            flags=tuple(rep.flags)))
        reports.append(rep)
    return rows, reports
