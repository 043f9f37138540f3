"""Command-line interface.

Commands: ``screen``, ``run --method {mc,mlmc}``, ``compare``,
``report show FILE`` and ``dump-curve``.  Exit status is 0 on convergence,
2 when the bias target cannot be met with the available levels, 3 when the
model-cost budget runs out and 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig
from .engine import (FLAG_BIAS_UNMET, FLAG_BUDGET, Sampler, compare_mc_mlmc, mc_estimate, run_adaptive_mlmc,
                     run_mc, screening_seed)
from .accumulator import LevelAccumulator
from .ledger import SampleLedger
from .model import ModelEvaluationError, SampleKey
from .reports import (format_artifact, load_artifact, write_comparison_csv, write_cost_fractions_csv, write_json,
                      write_summary_csv)
from .screening import ScreeningError, correlation_profile, decay_table, fit_rates, screen_levels

log = logging.getLogger("mlmcuq")

EXIT_OK, EXIT_ERROR, EXIT_BIAS_UNMET, EXIT_BUDGET = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser, eps=True):
    p.add_argument("--config", required=True, help="run configuration (TOML or JSON)")
    if eps:
        p.add_argument("--eps", type=float, help="tolerance (overrides tolerance.eps)")
    p.add_argument("--seed", type=int, help="run seed (overrides run_seed)")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--budget-hours", type=float, help="model-cost budget in hours")
    p.add_argument("--out", help="output directory")
    p.add_argument("--resume", action="store_true", help="replay an existing ledger in --out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mlmcuq", description="Multilevel Monte Carlo UQ runs")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("screen", help="warm-up, rate fits and level screening"), eps=False)
    p = sub.add_parser("run", help="run the MC or MLMC estimator")
    p.add_argument("--method", choices=("mc", "mlmc"), default="mlmc")
    _common(p)
    _common(sub.add_parser("compare", help="MC vs MLMC cost over a tolerance ladder"))
    p = sub.add_parser("report", help="inspect emitted files")
    rs = p.add_subparsers(dest="report_command", required=True)
    show = rs.add_parser("show")
    show.add_argument("file")
    p = sub.add_parser("dump-curve", help="write one sample's stress-strain curve as CSV")
    _common(p, eps=False)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--microstructure", action="store_true", help="also dump the grain list")
    return ap


def _load(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    return cfg.with_overrides(eps=getattr(args, "eps", None), run_seed=args.seed, workers=args.workers,
                              budget_hours=args.budget_hours, out=args.out)


def _outdir(cfg: RunConfig, default: str) -> Path:
    out = Path(cfg.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(cfg: RunConfig, model) -> dict:
    absc = getattr(getattr(model, "cfg", None), "abscissae", None) if cfg.model_kind == "crystal-plasticity" \
        else cfg.abscissae
    return {"config_digest": cfg.digest(), "tool_version": __version__,
            "abscissae": None if absc is None else list(absc)}


def _timing(out: Path, sampler: Sampler, t0: float) -> None:
    write_json(out / "timing.json", {"artifact": "timing", "wall_clock_s": time.perf_counter() - t0,
                                     "model_wall_s": sampler.wall_s, "evaluated": sampler.evaluated,
                                     "replayed": sampler.replayed, "workers": sampler.workers})


def _exit_code(flags) -> int:
    if FLAG_BUDGET in flags:
        return EXIT_BUDGET
    if FLAG_BIAS_UNMET in flags:
        return EXIT_BIAS_UNMET
    return EXIT_OK


def cmd_screen(args) -> int:
    cfg = _load(args)
    model = cfg.build_model()
    out = _outdir(cfg, "mlmcuq-screen")
    n = cfg.screening.samples or cfg.warmup
    t0 = time.perf_counter()
    ledger = SampleLedger(out / "screen_ledger.jsonl", resume=args.resume)
    H = model.hierarchy
    accs = []
    with Sampler(model, cfg.run_seed, cfg.workers, ledger) as sampler:
        seed = screening_seed(cfg.run_seed) if cfg.screening.samples else cfg.run_seed
        for l in H.indices():
            acc = LevelAccumulator(l, model.n_outputs, l > H.min_level)
            acc.add_evaluations(sampler.draw(l, n, coupled=True, seed=seed))
            accs.append(acc)
        _timing(out, sampler, t0)
    result = screen_levels(accs, cfg.screening)
    try:
        rates = fit_rates(accs).to_dict()
    except ScreeningError as exc:
        rates = {"error": str(exc)}
    rho = correlation_profile(accs)
    artifact = {
        "artifact": "screening",
        "samples_per_level": n,
        "rates": rates,
        "correlation": {str(l): [None if v != v else float(v) for v in r] for l, r in rho.items()},
        "decay": decay_table(accs),
        "screening": result.to_dict(),
        "recommended_levels": list(result.active),
        "levels": [a.to_dict() for a in accs],
        "config_digest": cfg.digest(),
        "tool_version": __version__,
    }
    write_json(out / "screening.json", artifact)
    print(f"active levels {list(result.active)}  dropped {list(result.dropped)}")
    if "alpha" in rates:
        print(f"alpha {rates['alpha']}  beta {rates['beta']}  gamma {rates['gamma']}"
              + ("  (low confidence)" if rates.get("low_confidence") else ""))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    model = cfg.build_model()
    out = _outdir(cfg, "mlmcuq-run")
    meta = _meta(cfg, model)
    t0 = time.perf_counter()
    ledger = SampleLedger(out / "ledger.jsonl", resume=args.resume)
    with Sampler(model, cfg.run_seed, cfg.workers, ledger) as sampler:
        if args.method == "mlmc":
            report = run_adaptive_mlmc(model, cfg.settings(), sampler, meta)
        else:
            level = model.hierarchy.max_level if cfg.mc_level is None else cfg.mc_level
            if cfg.mc_n is not None:
                report = mc_estimate(model, level, cfg.mc_n, sampler, meta, eps=cfg.eps)
            else:
                if cfg.eps is None:
                    raise ConfigError("tolerance.eps", "MC needs tolerance.eps or mc.n")
                report = run_mc(model, level, cfg.eps, sampler, cfg.warmup, cfg.budget_seconds, meta)
        _timing(out, sampler, t0)
    report.write(out / "report.json")
    write_summary_csv(out / "summary.csv", report)
    sys.stdout.write(format_artifact("report", report))
    return _exit_code(report.flags)


def cmd_compare(args) -> int:
    cfg = _load(args)
    ladder = cfg.ladder or ((cfg.eps,) if cfg.eps is not None else ())
    if args.eps is not None:
        ladder = (args.eps,)
    if not ladder:
        raise ConfigError("tolerance.ladder", "compare needs a non-empty ladder or eps")
    model = cfg.build_model()
    out = _outdir(cfg, "mlmcuq-compare")
    meta = _meta(cfg, model)
    t0 = time.perf_counter()
    ledger = SampleLedger(out / "ledger.jsonl", resume=args.resume)
    with Sampler(model, cfg.run_seed, cfg.workers, ledger) as sampler:
        rows, reports = compare_mc_mlmc(model, cfg.settings(ladder[0]), ladder, sampler, meta)
        _timing(out, sampler, t0)
    write_comparison_csv(out / "comparison.csv", rows)
    write_cost_fractions_csv(out / "cost_fractions.csv", rows)
    write_json(out / "comparison_reports.json",
               {"artifact": "comparison", "reports": [r.to_dict() for r in reports]})
    print("eps            speedup")
    for r in rows:
        print(f"{r.eps:<14.6g} {r.speedup:.2f}x")
    flags = set().union(*(r.flags for r in rows))
    return _exit_code(flags)


def cmd_report(args) -> int:
    kind, obj = load_artifact(args.file)
    sys.stdout.write(format_artifact(kind, obj))
    return EXIT_OK


def cmd_dump_curve(args) -> int:
    cfg = _load(args)
    model = cfg.build_model()
    if cfg.model_kind != "crystal-plasticity":
        raise ConfigError("model.kind", "dump-curve needs the crystal-plasticity model")
    if args.level not in model.hierarchy:
        raise ConfigError("--level", f"level {args.level} outside the model hierarchy")
    out = _outdir(cfg, "mlmcuq-curves")
    key = SampleKey(cfg.run_seed, args.index, args.level)
    curve = model.curve(key)
    path = out / f"curve_l{args.level}_i{args.index}.csv"
    curve.to_csv(path)
    print(path)
    if args.microstructure:
        mpath = out / f"micro_l{args.level}_i{args.index}.csv"
        model.microstructure(key).to_csv(mpath)
        print(mpath)
    return EXIT_OK


COMMANDS = {"screen": cmd_screen, "run": cmd_run, "compare": cmd_compare, "report": cmd_report,
            "dump-curve": cmd_dump_curve}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ScreeningError, ModelEvaluationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
