import json

import numpy as np
import pytest

from mlmcuq.engine import (FLAG_BUDGET, MLMCSettings, Sampler, compare_mc_mlmc, run_adaptive_mlmc, run_mc,
                           screening_seed)
from mlmcuq.ledger import SampleLedger, read_ledger, replay
from mlmcuq.manufactured import ManufacturedConfig, ManufacturedModel
from mlmcuq.model import ModelEvaluationError
from mlmcuq.screening import ScreeningPolicy


def _model(**kw):
    base = dict(alpha=2, beta=3, gamma=2, noise_amp=0.5, n_outputs=3, max_level=5)
    base.update(kw)
    return ManufacturedModel(ManufacturedConfig(**base))


class FlakyModel(ManufacturedModel):
    """Fails on a fixed set of sample indices."""

    def __init__(self, cfg, bad):
        super().__init__(cfg)
        self.bad = set(bad)
        self.calls = []

    def evaluate_coupled(self, key, coupled=True):
        self.calls.append(key.sample_index)
        if key.sample_index in self.bad:
            raise ModelEvaluationError(f"solver diverged at {key.sample_index}", key)
        return super().evaluate_coupled(key, coupled=coupled)


SETTINGS = MLMCSettings(eps=0.02, warmup=10, start_max_level=1)


def test_report_identical_across_worker_counts():
    m = _model()
    dumps = []
    for w in (1, 2, 4):
        with Sampler(m, 99, workers=w) as s:
            dumps.append(run_adaptive_mlmc(m, SETTINGS, s).to_json())
    assert dumps[0] == dumps[1] == dumps[2]


def test_same_seed_same_report_different_seed_differs():
    m = _model()
    with Sampler(m, 5) as s:
        a = run_adaptive_mlmc(m, SETTINGS, s).to_json()
    with Sampler(m, 5) as s:
        b = run_adaptive_mlmc(m, SETTINGS, s).to_json()
    with Sampler(m, 6) as s:
        c = run_adaptive_mlmc(m, SETTINGS, s).to_json()
    assert a == b
    assert a != c


def test_draw_returns_index_order_and_fresh_indices():
    m = _model()
    with Sampler(m, 1) as s:
        first = s.draw(2, 5)
        second = s.draw(2, 3)
        s.reset_indices()
        again = s.draw(2, 8)
    got = [e.fine for e in first + second]
    for x, y in zip(got, again):
        np.testing.assert_array_equal(x, y.fine)


def test_draw_with_other_seed_uses_other_stream():
    m = _model()
    with Sampler(m, 1) as s:
        a = s.draw(1, 4)
        b = s.draw(1, 4, seed=screening_seed(1))
    assert not np.allclose([e.fine for e in a], [e.fine for e in b])
    assert screening_seed(1) != 1


def test_resume_from_truncated_ledger_matches_uninterrupted(tmp_path):
    m = _model()
    full = tmp_path / "full.jsonl"
    with Sampler(m, 11, ledger=SampleLedger(full)) as s:
        ref = run_adaptive_mlmc(m, SETTINGS, s).to_json()
    lines = full.read_text().splitlines()
    assert len(lines) > 20
    # crash after a batch plus a half-written line
    part = tmp_path / "part.jsonl"
    part.write_text("\n".join(lines[: len(lines) // 2]) + "\n" + lines[len(lines) // 2][:17])
    ledger = SampleLedger(part, resume=True)
    assert len(ledger) == len(lines) // 2
    with Sampler(m, 11, ledger=ledger) as s:
        got = run_adaptive_mlmc(m, SETTINGS, s).to_json()
        assert s.replayed == len(lines) // 2
    assert got == ref
    assert sorted(r.key for r in read_ledger(part)) == sorted(r.key for r in read_ledger(full))


def test_resume_with_complete_ledger_evaluates_nothing(tmp_path):
    m = _model()
    path = tmp_path / "l.jsonl"
    with Sampler(m, 3, ledger=SampleLedger(path)) as s:
        ref = run_adaptive_mlmc(m, SETTINGS, s).to_json()
    with Sampler(m, 3, ledger=SampleLedger(path, resume=True)) as s:
        got = run_adaptive_mlmc(m, SETTINGS, s).to_json()
        assert s.evaluated == 0
    assert got == ref


def test_ledger_replay_idempotent(tmp_path):
    m = _model()
    path = tmp_path / "l.jsonl"
    with Sampler(m, 4, ledger=SampleLedger(path)) as s:
        run_adaptive_mlmc(m, SETTINGS, s)
    a = replay(path)
    b = replay(path)
    assert a.keys() == b.keys()
    for k in a:
        assert a[k].to_dict() == b[k].to_dict()


def test_replay_matches_report_accumulators(tmp_path):
    m = _model()
    path = tmp_path / "l.jsonl"
    with Sampler(m, 4, ledger=SampleLedger(path)) as s:
        rep = run_adaptive_mlmc(m, MLMCSettings(eps=0.02, warmup=10, start_max_level=1,
                                                screening=ScreeningPolicy(enabled=False)), s)
    accs = replay(path)
    for lv in rep.levels:
        acc = accs[(4, lv["level"], lv["coupled"])]
        assert acc.count == lv["count"]
        np.testing.assert_allclose(acc.mean_delta, lv["mean_delta"], rtol=1e-12)


def test_failed_evaluation_replaced_by_next_index_in_place(caplog):
    m = FlakyModel(ManufacturedConfig(max_level=2), bad={2})
    with Sampler(m, 0, max_retries=3) as s:
        evals = s.draw(1, 4)
    assert len(evals) == 4
    clean = _model(max_level=2, noise_amp=1.0, n_outputs=1)
    with Sampler(clean, 0) as s:
        ref = s.draw(1, 5)
    expect = [ref[i].fine for i in (0, 1, 4, 3)]
    np.testing.assert_array_equal([e.fine for e in evals], expect)
    assert "diverged" in caplog.text


def test_gives_up_after_max_retries(tmp_path):
    m = FlakyModel(ManufacturedConfig(max_level=2), bad={1, 2, 3, 4})
    path = tmp_path / "l.jsonl"
    with pytest.raises(ModelEvaluationError, match="after 3 retries"):
        with Sampler(m, 0, ledger=SampleLedger(path), max_retries=3) as s:
            s.draw(0, 2)
    failed = [r for r in read_ledger(path) if r.failed]
    assert sorted(r.sample_index for r in failed) == [1, 2, 3, 4]
    assert all("diverged" in r.error for r in failed)


def test_failed_records_not_retried_on_resume(tmp_path):
    cfg = ManufacturedConfig(max_level=2)
    path = tmp_path / "l.jsonl"
    with Sampler(FlakyModel(cfg, bad={1}), 0, ledger=SampleLedger(path)) as s:
        s.draw(0, 3)
    m = FlakyModel(cfg, bad=set())
    with Sampler(m, 0, ledger=SampleLedger(path, resume=True)) as s:
        evals = s.draw(0, 3)
    assert m.calls == []
    assert len(evals) == 3


def test_budget_flag_and_cap():
    m = _model()
    warm = 10 * sum(m.level_cost(l, l > 0) for l in range(6))
    budget = 2.0 * warm
    with Sampler(m, 2) as s:
        rep = run_adaptive_mlmc(m, MLMCSettings(eps=1e-3, warmup=10, budget=budget), s)
    assert FLAG_BUDGET in rep.flags
    assert not rep.converged
    assert rep.total_cost + rep.screening_cost <= budget


def test_warmup_is_drawn_even_beyond_budget():
    m = _model()
    with Sampler(m, 2) as s:
        rep = run_adaptive_mlmc(m, MLMCSettings(eps=1e-3, warmup=10, budget=1.0, start_max_level=1,
                                                screening=ScreeningPolicy(enabled=False)), s)
    assert FLAG_BUDGET in rep.flags
    assert [lv["count"] for lv in rep.levels] == [10, 10]


def test_mc_budget_flag():
    m = _model()
    with Sampler(m, 2) as s:
        rep = run_mc(m, 3, 1e-3, s, warmup=8, budget=1000.0)
    assert FLAG_BUDGET in rep.flags


def test_ledger_records_round_trip_json(tmp_path):
    m = _model()
    path = tmp_path / "l.jsonl"
    with Sampler(m, 8, ledger=SampleLedger(path)) as s:
        s.draw(2, 3)
    for line in path.read_text().splitlines():
        d = json.loads(line)
        assert set(d) == {"run_seed", "sample_index", "level", "fine", "coarse", "cost_s", "wall_s"}
        assert len(d["fine"]) == 3 and len(d["coarse"]) == 3


def test_compare_is_deterministic_across_workers():
    m = _model()
    out = []
    for w in (1, 2):
        with Sampler(m, 21, workers=w) as s:
            rows, _ = compare_mc_mlmc(m, SETTINGS, [0.05, 0.02], s)
        out.append([r.csv_row() for r in rows])
    assert out[0] == out[1]


def test_sampler_rejects_zero_workers():
    with pytest.raises(ValueError):
        Sampler(_model(), 0, workers=0)
