"""File outputs of the command-line tool and their reader.

Every file written here can be parsed back by :func:`load_artifact`, which
the ``report show`` command uses.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

from .engine import COMPARISON_COLUMNS, ComparisonRow
from .estimators import EstimatorReport
from .ledger import read_ledger

SUMMARY_COLUMNS = ("output", "abscissa", "estimate", "stat_error", "bias")
FRACTION_COLUMNS = ("eps", "level", "cost_fraction")


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_summary_csv(path: str | Path, report: EstimatorReport) -> None:
    absc = report.abscissae or [None] * len(report.estimate)
    bias = report.bias or [None] * len(report.estimate)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for j, (a, e, s, b) in enumerate(zip(absc, report.estimate, report.stat_error, bias)):
            w.writerow([j, "" if a is None else repr(a), repr(e), "" if s is None else repr(s),
                        "" if b is None else repr(b)])


def write_comparison_csv(path: str | Path, rows: Sequence[ComparisonRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARISON_COLUMNS)
        for r in rows:
            w.writerow(r.csv_row())


def write_cost_fractions_csv(path: str | Path, rows: Sequence[ComparisonRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FRACTION_COLUMNS)
        for r in rows:
            for level, frac in sorted(r.cost_fraction.items()):
                w.writerow([repr(r.eps), level, f"{frac:.6f}"])


def read_csv(path: str | Path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


def parse_n_by_level(text: str) -> dict[int, int]:
    out = {}
    for part in filter(None, text.split(";")):
        level, n = part.split(":")
        out[int(level)] = int(n)
    return out


def load_artifact(path: str | Path):
    """Parse any emitted file; returns ``(kind, object)``."""
    path = Path(path)
    if path.suffix == ".jsonl":
        return "ledger", list(read_ledger(path))
    if path.suffix == ".csv":
        header, rows = read_csv(path)
        if tuple(header) == COMPARISON_COLUMNS:
            for r in rows:
                r["mlmc_n_by_level"] = parse_n_by_level(r["mlmc_n_by_level"])
            return "comparison", rows
        if tuple(header) == SUMMARY_COLUMNS:
            return "summary", rows
        if tuple(header) == FRACTION_COLUMNS:
            return "cost_fractions", rows
        if header[:2] == ["strain", "stress_mpa"]:
            return "curve", rows
        if header[:2] == ["diameter", "weight"]:
            return "microstructure", rows
        raise ValueError(f"unrecognised CSV header in {path}: {header}")
    d = json.loads(path.read_text())
    if isinstance(d, dict) and "method" in d and "estimate" in d:
        return "report", EstimatorReport.from_dict(d)
    if isinstance(d, dict) and d.get("artifact") == "screening":
        return "screening", d
    if isinstance(d, dict) and d.get("artifact") == "timing":
        return "timing", d
    if isinstance(d, dict) and d.get("artifact") == "comparison":
        return "comparison_reports", [EstimatorReport.from_dict(r) for r in d["reports"]]
    raise ValueError(f"unrecognised JSON artifact {path}")


def _fmt(x, nd=6):
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.{nd}g}"
    return str(x)


def format_report(r: EstimatorReport) -> str:
    out = io.StringIO()
    out.write(f"method {r.method}  eps {_fmt(r.eps)}  converged {r.converged}  flags {r.flags or '-'}\n")
    out.write(f"model cost {r.total_cost / 3600:.4f} h (screening {r.screening_cost / 3600:.4f} h)\n")
    if r.alpha_used is not None:
        out.write(f"alpha used {r.alpha_used:.4f}\n")
    out.write("level      N   mean cost   max V[dQ]\n")
    for lv in r.levels:
        vmax = max((v for v in lv["var_delta"] if v is not None), default=None)
        out.write(f"{lv['level']:5d} {lv['count']:6d} {_fmt(lv['cost_mean']):>11} {_fmt(vmax):>11}\n")
    out.write("output   estimate  stat_err      bias\n")
    bias = r.bias or [None] * len(r.estimate)
    for j, (e, s, b) in enumerate(zip(r.estimate, r.stat_error, bias)):
        out.write(f"{j:6d} {_fmt(e):>10} {_fmt(s):>9} {_fmt(b):>9}\n")
    return out.getvalue()


def format_artifact(kind: str, obj) -> str:
    if kind == "report":
        return format_report(obj)
    if kind == "comparison_reports":
        return "\n".join(format_report(r) for r in obj)
    if kind == "ledger":
        ok = [r for r in obj if not r.failed]
        levels = sorted({r.level for r in ok})
        lines = [f"{len(obj)} records ({len(obj) - len(ok)} failed)"]
        for l in levels:
            recs = [r for r in ok if r.level == l]
            lines.append(f"level {l}: {len(recs)} samples, cost {sum(r.cost_s for r in recs):.6g} s")
        return "\n".join(lines) + "\n"
    if kind in ("screening", "timing"):
        return json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if kind == "comparison":
        lines = ["eps            mc_N  mc_hr       mlmc_N            mlmc_hr     speedup"]
        for r in obj:
            nbl = ",".join(f"{l}:{n}" for l, n in sorted(r["mlmc_n_by_level"].items()))
            lines.append(f"{float(r['eps']):<14.6g} {r['mc_n_fine']:>5} {float(r['mc_cost_hr']):>9.3f}   "
                         f"{nbl:<16} {float(r['mlmc_cost_hr']):>9.3f}   {float(r['speedup']):.2f}x")
        return "\n".join(lines) + "\n"
    header = list(obj[0].keys()) if obj else []
    lines = [",".join(header)] + [",".join(str(r[h]) for h in header) for r in obj]
    return "\n".join(lines) + "\n"
