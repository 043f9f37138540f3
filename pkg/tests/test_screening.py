import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlmcuq.accumulator import LevelAccumulator
from mlmcuq.engine import Sampler
from mlmcuq.manufactured import ManufacturedConfig, ManufacturedModel
from mlmcuq.screening import (ScreeningError, ScreeningPolicy, correlation_profile, decay_table, fit_cost_rate,
                              fit_line, fit_rates, screen_levels)

TABLE_COSTS = (39.0, 365.0, 1955.0, 3305.0, 12487.0)


def _level(level, fine, coarse=None, cost=1.0):
    fine = np.asarray(fine, dtype=float).reshape(len(fine), -1)
    a = LevelAccumulator(level, fine.shape[1], coarse is not None)
    c = None if coarse is None else np.asarray(coarse, dtype=float).reshape(fine.shape)
    a.add_batch(fine, c, np.full(len(fine), cost))
    return a


def _warmup(model, n, seed=0):
    H = model.hierarchy
    accs = []
    with Sampler(model, seed) as s:
        for l in H.indices():
            a = LevelAccumulator(l, model.n_outputs, l > H.min_level)
            a.add_evaluations(s.draw(l, n))
            accs.append(a)
    return accs


def test_two_point_fit_is_exact():
    f = fit_line([1, 3], [2.0, -4.0])
    assert f.slope == pytest.approx(-3.0, abs=1e-14)
    assert f.intercept == pytest.approx(5.0, abs=1e-14)
    assert np.isnan(f.slope_se)


def test_fit_needs_two_points():
    with pytest.raises(ScreeningError):
        fit_line([1], [0.0])


def test_reference_cost_growth_rate():
    fit = fit_cost_rate(range(5), TABLE_COSTS)
    assert fit.slope == pytest.approx(1.98, abs=0.05)
    accs = [_level(l, [[0.0], [1.0]], None if l == 0 else [[0.0], [0.5]], cost=c)
            for l, c in enumerate(TABLE_COSTS)]
    assert fit_rates(accs).gamma == pytest.approx(fit.slope, rel=1e-12)


def test_rate_fit_on_manufactured_model():
    m = ManufacturedModel(ManufacturedConfig(alpha=2, beta=3, gamma=2, noise_amp=0.2, n_outputs=3))
    r = fit_rates(_warmup(m, 400)[1:])
    assert r.alpha == pytest.approx(2.0, abs=0.15)
    assert r.beta == pytest.approx(3.0, abs=0.15)
    assert r.gamma == pytest.approx(2.0, abs=1e-9)
    assert len(r.alpha_per_output) == 3
    assert r.levels_ab == (1, 2, 3, 4) and not r.low_confidence


def test_alpha_beta_skip_base_level():
    m = ManufacturedModel(ManufacturedConfig(noise_amp=0.2, max_level=2))
    r = fit_rates(_warmup(m, 20))
    assert r.levels_ab == (1, 2)
    assert r.levels_gamma == (0, 1, 2)
    assert r.low_confidence


def test_zero_points_excluded_with_warning(caplog):
    accs = [_level(1, [[1.0], [2.0]], [[1.0], [2.0]], cost=2.0),
            _level(2, [[1.0], [3.0]], [[0.0], [1.0]], cost=8.0),
            _level(3, [[1.0], [2.0]], [[0.5], [1.0]], cost=32.0)]
    with caplog.at_level(logging.WARNING, logger="mlmcuq.screening"):
        r = fit_rates(accs)
    assert "excluding levels [1]" in caplog.text
    assert r.levels_ab == (2, 3)
    assert r.gamma == pytest.approx(2.0)


def test_no_usable_levels():
    with pytest.raises(ScreeningError):
        fit_rates([_level(1, [[1.0]], [[0.0]])])


def test_strong_coupling_keeps_all_levels():
    m = ManufacturedModel(ManufacturedConfig(noise_amp=0.05, n_outputs=9))
    res = screen_levels(_warmup(m, 100))
    assert res.active == (0, 1, 2, 3, 4) and res.dropped == ()


def test_broken_coupling_drops_coarser_levels():
    m = ManufacturedModel(ManufacturedConfig(noise_amp=0.05, decoupled_levels=(1,)))
    res = screen_levels(_warmup(m, 1000))
    assert res.dropped == (0,)
    assert res.active == (1, 2, 3, 4)
    assert res.violations == {1: [0]}


def test_break_higher_up_drops_whole_prefix():
    m = ManufacturedModel(ManufacturedConfig(noise_amp=0.05, decoupled_levels=(3,), n_outputs=2))
    res = screen_levels(_warmup(m, 200))
    assert res.active == (3, 4) and res.dropped == (0, 1, 2)


def test_single_level_unchanged():
    m = ManufacturedModel(ManufacturedConfig(max_level=0))
    res = screen_levels(_warmup(m, 10))
    assert res.active == (0,) and res.single_level


def test_disabled_policy_reports_but_keeps():
    m = ManufacturedModel(ManufacturedConfig(noise_amp=0.05, decoupled_levels=(1,)))
    res = screen_levels(_warmup(m, 200), ScreeningPolicy(enabled=False))
    assert res.dropped == () and 1 in res.violations


def test_all_but_finest_dropped_falls_back(caplog):
    m = ManufacturedModel(ManufacturedConfig(noise_amp=0.05, decoupled_levels=(4,), n_outputs=2))
    with caplog.at_level(logging.WARNING):
        res = screen_levels(_warmup(m, 200))
    assert res.active == (4,) and res.single_level
    assert "single level" in caplog.text


@given(st.integers(2, 40), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_screening_stable_under_replicated_samples(n, seed):
    rng = np.random.default_rng(seed)
    accs = [_level(0, rng.normal(size=(n, 2)))]
    for l in (1, 2, 3):
        f = rng.normal(size=(n, 2))
        accs.append(_level(l, f, f * rng.uniform(-1, 1.5) + rng.normal(size=(n, 2)) * rng.uniform(0, 1)))
    before = screen_levels(accs)
    # replicating every level's samples scales both variances alike
    after = screen_levels([a.merged(a) for a in accs])
    assert before.active == after.active


def test_correlation_profile():
    x = np.random.default_rng(0).normal(size=(50, 1))
    assert correlation_profile([_level(1, x, x)])[1][0] == pytest.approx(1.0)
    assert correlation_profile([_level(1, x, -x)])[1][0] == pytest.approx(-1.0)
    rho = correlation_profile([_level(1, x, np.ones_like(x))])[1]
    assert np.isnan(rho[0])


def test_independent_streams_are_uncorrelated():
    m = ManufacturedModel(ManufacturedConfig(noise_amp=0.0, decoupled_levels=(1,), max_level=1))
    with Sampler(m, 3) as s:
        a = LevelAccumulator(1, 1, True)
        a.add_evaluations(s.draw(1, 10_000))
    assert abs(correlation_profile([a])[1][0]) < 0.05


def test_decay_table_rows():
    m = ManufacturedModel(ManufacturedConfig(max_level=2))
    rows = decay_table(_warmup(m, 10))
    assert [r["level"] for r in rows] == [0, 1, 2]
    assert rows[0]["coupled"] is False and rows[2]["max_var_delta"] > 0
