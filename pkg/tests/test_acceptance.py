"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N ...: PASS|FAIL`` line (visible with
``pytest -s`` or in the ``-v`` log) before asserting.
"""

import json
import logging
import math
import os
import signal
import subprocess
import sys
import time

import numpy as np
import pytest

from mlmcuq.accumulator import LevelAccumulator
from mlmcuq.config import RunConfig
from mlmcuq.crystal.integrate import (LoadingSpec, integrate_strain_path, projected_stiffness, run_grains,
                                      taylor_homogenize)
from mlmcuq.engine import MLMCSettings, Sampler, compare_mc_mlmc, mc_estimate, run_adaptive_mlmc
from mlmcuq.estimators import optimal_allocation
from mlmcuq.manufactured import EXACT_MEAN, ManufacturedConfig, ManufacturedModel
from mlmcuq.microstructure import bunge_matrix, sample_microstructure
from mlmcuq.model import SampleKey
from mlmcuq.profiles import REFERENCE_EPS_LADDER, profile
from mlmcuq.qoi import DEFAULT_ABSCISSAE, StressStrainCurve, extract_qois, pchip_derivatives, pchip_evaluate
from mlmcuq.screening import ScreeningPolicy, fit_rates, screen_levels

pytestmark = pytest.mark.slow

TABLE_COSTS = (39.0, 365.0, 1955.0, 3305.0, 12487.0)


@pytest.fixture
def verdict(capsys):
    def _say(number, name, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {number} {name}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return _say


@pytest.fixture(autouse=True)
def _quiet():
    logging.disable(logging.WARNING)
    yield
    logging.disable(logging.NOTSET)


def _random_euler(n, seed):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(0, 360, n), np.degrees(np.arccos(rng.uniform(-1, 1, n))),
                            rng.uniform(0, 360, n)])


def _warmup(model, levels, n, seed):
    accs = []
    with Sampler(model, seed) as s:
        for l in levels:
            a = LevelAccumulator(l, model.n_outputs, l > model.hierarchy.min_level)
            a.add_evaluations(s.draw(l, n))
            accs.append(a)
    return accs


def test_criterion_01_estimator_exactness(verdict):
    t0 = time.perf_counter()
    m = ManufacturedModel(ManufacturedConfig(bias_amp=0.0, noise_amp=0.0, max_level=3))
    settings = MLMCSettings(eps=0.05, warmup=8, screening=ScreeningPolicy(enabled=False))
    hits_mlmc = hits_mc = 0
    for seed in range(100):
        with Sampler(m, seed) as s:
            r = run_adaptive_mlmc(m, settings, s)
            hits_mlmc += abs(r.estimate[0] - EXACT_MEAN) <= 3 * r.stat_error[0]
            q = mc_estimate(m, 3, 400, s)
            hits_mc += abs(q.estimate[0] - EXACT_MEAN) <= 3 * q.stat_error[0]
    dt = time.perf_counter() - t0
    ok = hits_mlmc >= 95 and hits_mc >= 95 and dt < 60
    verdict(1, "estimator exactness", ok, f"MLMC {hits_mlmc}/100, MC {hits_mc}/100 within 3 SE, {dt:.1f} s")
    assert ok


def test_criterion_02_rate_recovery(verdict):
    t0 = time.perf_counter()
    m = ManufacturedModel(ManufacturedConfig(alpha=2, beta=3, gamma=2, noise_amp=0.2, max_level=4))
    passed = 0
    worst = 0.0
    for seed in range(20):
        r = fit_rates(_warmup(m, [1, 2, 3, 4], 1000, seed))
        err = max(abs(r.alpha - 2), abs(r.beta - 3), abs(r.gamma - 2))
        worst = max(worst, err)
        passed += err <= 0.15
    dt = time.perf_counter() - t0
    ok = passed >= 18 and dt < 120
    verdict(2, "rate recovery", ok, f"{passed}/20 seeds within 0.15 (worst {worst:.3f}), {dt:.1f} s")
    assert ok


def test_criterion_03_cost_fit(verdict):
    accs = []
    for l, c in enumerate(TABLE_COSTS):
        a = LevelAccumulator(l, 1, l > 0)
        a.add_batch(np.array([[0.0], [1.0]]), None if l == 0 else np.array([[0.0], [0.5]]), [c, c])
        accs.append(a)
    gamma = fit_rates(accs).gamma
    ok = abs(gamma - 1.98) <= 0.05
    verdict(3, "cost-fit reproduction", ok, f"gamma = {gamma:.4f}")
    assert ok


def _brute_force(V, C, eps, upper):
    # the estimator never uses fewer than 2 samples on a level
    grids = np.meshgrid(*[np.arange(2, max(u, 2) + 1) for u in upper], indexing="ij")
    n = np.stack([g.ravel() for g in grids], axis=1)
    feasible = (V / n).sum(axis=1) <= eps ** 2 / 2
    cost = n[feasible] @ C
    return cost.min()


def test_criterion_04_allocation_optimality(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    done = infeasible = too_costly = 0
    while done < 200:
        V = 10.0 ** rng.uniform(-3, 0, 3)
        C = 10.0 ** rng.uniform(0, 2, 3)
        eps = 10.0 ** rng.uniform(-1.2, -0.3)
        n = optimal_allocation(V, C, eps)
        cost = float(n @ C)
        # any allocation cheaper than ours has n_l <= cost / C_l
        upper = np.floor(cost / C).astype(int)
        if np.prod(upper.astype(float)) > 3e6:
            continue
        done += 1
        infeasible += np.sum(V / n) > eps ** 2 / 2
        too_costly += cost > _brute_force(V, C, eps, upper) + C.sum() + 1e-9
    dt = time.perf_counter() - t0
    ok = infeasible == 0 and too_costly == 0 and dt < 60
    verdict(4, "allocation optimality", ok,
            f"200 instances, {infeasible} infeasible, {too_costly} above optimum + one sample per level, {dt:.1f} s")
    assert ok


def _cost_slope(alpha, beta, gamma, noise, eps0, seeds):
    m = ManufacturedModel(ManufacturedConfig(alpha=alpha, beta=beta, gamma=gamma, noise_amp=noise, max_level=14))
    ladder = [eps0 / 2 ** (k / 2) for k in range(5)]
    costs = []
    for eps in ladder:
        # known decay rate, so only the sampling noise moves the finest level
        s = MLMCSettings(eps=eps, warmup=8, screening=ScreeningPolicy(enabled=False), start_max_level=2,
                         cost_source="nominal", alpha=alpha)
        per_seed = []
        for seed in range(seeds):
            with Sampler(m, seed) as sp:
                per_seed.append(run_adaptive_mlmc(m, s, sp).total_cost)
        costs.append(math.exp(np.mean(np.log(per_seed))))
    return np.polyfit(np.log(1 / np.array(ladder)), np.log(costs), 1)[0]


def test_criterion_05_complexity_slopes(verdict):
    t0 = time.perf_counter()
    fast = _cost_slope(2.0, 5.0, 1.0, 0.5, 0.1, 64)
    slow = _cost_slope(1.0, 2.0, 2.5, 0.25, 0.2, 128)
    expect_slow = 2 + (2.5 - 2.0) / 1.0
    dt = time.perf_counter() - t0
    ok = abs(fast - 2.0) <= 0.3 and abs(slow - expect_slow) <= 0.3 and dt < 300
    verdict(5, "complexity slopes", ok,
            f"beta>gamma slope {fast:.2f} (2.0), beta<gamma slope {slow:.2f} ({expect_slow:.2f}), {dt:.1f} s")
    assert ok


def test_criterion_06_speedup_band(verdict):
    bad = []
    all_speedups = []
    for seed in range(20):
        d = profile("reference-shaped")
        d["run_seed"] = seed
        cfg = RunConfig.from_dict(d)
        m = cfg.build_model()
        with Sampler(m, seed) as s:
            rows, reports = compare_mc_mlmc(m, cfg.settings(), REFERENCE_EPS_LADDER, s)
        sp = [r.speedup for r in rows]
        all_speedups.append(sp)
        two_levels = all(len(r.mlmc_n_by_level) == 2 for r in rows)
        if not (two_levels and all(1.2 <= x <= 3.5 for x in sp) and all(x > 2.0 for x in sp[-4:])):
            bad.append(seed)
    mean = np.mean(all_speedups, axis=0)
    ok = not bad
    verdict(6, "speedup band", ok, f"20 seeds, failing {bad}; mean speedups "
            + " ".join(f"{x:.2f}" for x in mean))
    assert ok


def test_criterion_07_level_screening(verdict):
    m = ManufacturedModel(ManufacturedConfig(alpha=2, beta=3, gamma=2, noise_amp=0.5, n_outputs=3,
                                             max_level=4, decoupled_levels=(1,)))
    exact = 0
    for seed in range(20):
        res = screen_levels(_warmup(m, range(5), 50, seed))
        exact += res.dropped == (0,)
    ok = exact >= 19
    verdict(7, "level screening", ok, f"dropped exactly level 0 in {exact}/20 warm-ups")
    assert ok


def test_criterion_08_cp_kernel_physics(verdict):
    t0 = time.perf_counter()
    g = bunge_matrix(_random_euler(20, 0))
    h0 = integrate_strain_path(g, np.zeros((30, 3, 3)), 0.05)
    zero_ok = bool(np.all(h0.axial_stress == 0.0) and np.all(h0.state.stress == 0.0))
    euler = _random_euler(1000, 1)
    L = LoadingSpec()
    h = run_grains(euler, loading=L)
    slope = h.axial_stress[1] / (L.strain_rate * L.step_time())
    rel = np.max(np.abs(slope / projected_stiffness(euler, loading=L) - 1))
    f = h.twin_fraction
    twin_ok = bool(np.all((f >= 0) & (f <= 1)))
    worst_dt = 0.0
    for idx in range(3):
        m = sample_microstructure(SampleKey(8, idx, 1))
        a = taylor_homogenize(m, loading=L).stress[-1]
        b = taylor_homogenize(m, loading=LoadingSpec(dt=L.dt / 2)).stress[-1]
        worst_dt = max(worst_dt, abs(b - a) / abs(b))
    dt = time.perf_counter() - t0
    ok = zero_ok and rel <= 0.01 and twin_ok and worst_dt < 0.005
    verdict(8, "CP kernel physics", ok,
            f"zero load exact {zero_ok}, elastic slope max rel err {rel:.2e} over 1000 orientations, "
            f"f_tw in [{f.min():.3f}, {f.max():.3f}], dt halving {worst_dt:.2e}, {dt:.1f} s")
    assert ok


def test_criterion_09_qoi_extraction(verdict):
    rng = np.random.default_rng(9)
    worst_lin = 0.0
    for _ in range(1000):
        slope, icpt = rng.uniform(-500, 500), 0.0
        # uniform grids, as produced by the strain-path integration
        strain = np.linspace(0.0, 0.9, rng.integers(2, 400))
        q = extract_qois(StressStrainCurve(strain, icpt + slope * strain))
        worst_lin = max(worst_lin, np.max(np.abs(q.values - (icpt + slope * np.asarray(DEFAULT_ABSCISSAE)))))
    broken = 0
    x = np.linspace(0.0, 0.9, 500)
    for _ in range(1000):
        strain = np.concatenate([[0.0], np.sort(rng.uniform(0, 0.9, 15)), [0.9]])
        strain = np.unique(strain)
        stress = np.concatenate([[0.0], np.cumsum(rng.exponential(1.0, len(strain) - 1) * rng.uniform(0, 1) ** 3)])
        stress *= 300.0 / max(stress[-1], 1e-12)
        qv = extract_qois(StressStrainCurve(strain, stress)).values
        y = pchip_evaluate(strain, stress, pchip_derivatives(strain, stress), x)
        broken += bool(np.any(np.diff(qv) < 0) or np.any(np.diff(y) < -1e-9))
    ok = worst_lin <= 1e-12 and broken == 0
    verdict(9, "QoI extraction", ok, f"linear max abs err {worst_lin:.1e}, {broken}/1000 monotone curves broken")
    assert ok


KR_CONFIG = {"run_seed": 13,
             "model": {"kind": "manufactured",
                       "manufactured": {"alpha": 2.0, "beta": 3.0, "gamma": 2.0, "noise_amp": 0.2,
                                        "n_outputs": 9, "max_level": 6}},
             "tolerance": {"eps": 0.006}, "estimator": {"warmup": 20}}


def _cli(args, **kw):
    return subprocess.Popen([sys.executable, "-m", "mlmcuq.cli", *args], stdout=subprocess.DEVNULL,
                            stderr=subprocess.PIPE, **kw)


def test_criterion_10_determinism_and_resume(tmp_path, verdict):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(KR_CONFIG))
    reports = {}
    for w in (1, 4, 8):
        out = tmp_path / f"w{w}"
        assert _cli(["run", "--config", str(cfg), "--out", str(out), "--workers", str(w)]).wait() == 0
        reports[w] = (out / "report.json").read_bytes()
    same = reports[1] == reports[4] == reports[8]

    # hard kill once some batches are on disk, then resume
    out = tmp_path / "killed"
    p = _cli(["run", "--config", str(cfg), "--out", str(out)])
    ledger = out / "ledger.jsonl"
    deadline = time.time() + 60
    while time.time() < deadline and p.poll() is None:
        if ledger.exists() and ledger.stat().st_size > 0:
            break
        time.sleep(0.01)
    killed_mid_run = p.poll() is None
    os.kill(p.pid, signal.SIGKILL)
    p.wait()
    partial = sum(1 for _ in open(ledger))
    assert _cli(["run", "--config", str(cfg), "--out", str(out), "--resume"]).wait() == 0
    timing = json.loads((out / "timing.json").read_text())
    resumed_same = (out / "report.json").read_bytes() == reports[1]

    # simulated crash mid-write: truncated ledger with a partial last line
    out2 = tmp_path / "truncated"
    out2.mkdir()
    lines = (tmp_path / "w1" / "ledger.jsonl").read_text().splitlines()
    cut = len(lines) // 3
    (out2 / "ledger.jsonl").write_text("\n".join(lines[:cut]) + "\n" + lines[cut][:25])
    assert _cli(["run", "--config", str(cfg), "--out", str(out2), "--resume"]).wait() == 0
    truncated_same = (out2 / "report.json").read_bytes() == reports[1]

    ok = same and killed_mid_run and timing["replayed"] > 0 and resumed_same and truncated_same
    verdict(10, "determinism and resume", ok,
            f"workers 1/4/8 identical {same}; SIGKILL after {partial} ledger records, replayed "
            f"{timing['replayed']}, resumed identical {resumed_same}; truncated-ledger resume identical "
            f"{truncated_same}")
    assert ok
