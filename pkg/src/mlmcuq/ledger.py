"""Append-only JSON-lines record of every coupled evaluation.

One line per evaluation::

    {"run_seed": ..., "sample_index": ..., "level": ..., "fine": [...],
     "coarse": [...] | null, "cost_s": ..., "wall_s": ...}

Failed evaluations are recorded with ``"failed": true`` and an ``"error"``
message so a resumed run does not repeat them.  Records are written at
batch boundaries; a truncated trailing line (from a crash mid-write) is
ignored on load.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LedgerRecord:
    run_seed: int
    sample_index: int
    level: int
    fine: Optional[tuple[float, ...]]
    coarse: Optional[tuple[float, ...]]
    cost_s: float
    wall_s: float
    failed: bool = False
    error: str = ""

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.run_seed, self.level, self.sample_index)

    def to_json(self) -> str:
        d = {"run_seed": self.run_seed, "sample_index": self.sample_index, "level": self.level,
             "fine": None if self.fine is None else list(self.fine),
             "coarse": None if self.coarse is None else list(self.coarse),
             "cost_s": self.cost_s, "wall_s": self.wall_s}
        if self.failed:
            d["failed"] = True
            d["error"] = self.error
        return json.dumps(d)

    @classmethod
    def from_dict(cls, d: dict) -> "LedgerRecord":
        fine = d.get("fine")
        coarse = d.get("coarse")
        return cls(int(d["run_seed"]), int(d["sample_index"]), int(d["level"]),
                   None if fine is None else tuple(float(x) for x in fine),
                   None if coarse is None else tuple(float(x) for x in coarse),
                   float(d["cost_s"]), float(d.get("wall_s", 0.0)),
                   bool(d.get("failed", False)), str(d.get("error", "")))


def read_ledger(path: str | Path) -> Iterator[LedgerRecord]:
    path = Path(path)
    if not path.exists():
        return
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield LedgerRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                log.warning("ignoring unreadable ledger line %d of %s", lineno, path)


class SampleLedger:
    """Writer with an in-memory index of everything already recorded."""

    def __init__(self, path: str | Path | None, resume: bool = False):
        self.path = None if path is None else Path(path)
        self.records: dict[tuple[int, int, int], LedgerRecord] = {}
        self._pending: list[LedgerRecord] = []
        if self.path is not None:
            if resume:
                for rec in read_ledger(self.path):
                    self.records[rec.key] = rec
                self._rewrite_clean()
            else:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.write_text("")

    def _rewrite_clean(self) -> None:
        # drop a partial trailing line so appends start on a fresh line
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w") as fh:
            for rec in self.records.values():
                fh.write(rec.to_json() + "\n")

    def get(self, run_seed: int, level: int, sample_index: int) -> Optional[LedgerRecord]:
        return self.records.get((run_seed, level, sample_index))

    def append(self, rec: LedgerRecord) -> None:
        self.records[rec.key] = rec
        self._pending.append(rec)

    def flush(self) -> None:
        if self.path is not None and self._pending:
            with open(self.path, "a") as fh:
                for rec in self._pending:
                    fh.write(rec.to_json() + "\n")
                fh.flush()
        self._pending.clear()

    def __len__(self) -> int:
        return len(self.records)


def replay(path: str | Path, n_outputs: int | None = None):
    """Rebuild per-(run_seed, level, coupled) accumulators from a ledger file."""
    from .accumulator import LevelAccumulator

    accs: dict[tuple[int, int, bool], LevelAccumulator] = {}
    for rec in sorted((r for r in read_ledger(path) if not r.failed), key=lambda r: r.key):
        coupled = rec.coarse is not None
        k = (rec.run_seed, rec.level, coupled)
        n = len(rec.fine) if n_outputs is None else n_outputs
        acc = accs.setdefault(k, LevelAccumulator(rec.level, n, coupled))
        acc.add_batch(np.array([rec.fine]), None if not coupled else np.array([rec.coarse]), [rec.cost_s])
    return accs
