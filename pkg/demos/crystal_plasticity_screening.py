"""Warm-up and level screening on the Taylor crystal-plasticity model.

Levels are nested polycrystals of 8, 64 and 512 grains: the level-l
microstructure is the first n0 * 8**l grains of one long draw, so fine and
coarse share their leading grains.  Because the Taylor average of a small
prefix is a poor predictor of the large aggregate, the difference variance
can exceed the variance of the fine value itself; screening detects this
and drops the offending coarse levels.

    python demos/crystal_plasticity_screening.py      (about 15 s)
"""

import logging

import numpy as np

from mlmcuq import LevelAccumulator, Sampler, correlation_profile, fit_rates, screen_levels
from mlmcuq.crystal.model import CrystalModelConfig, CrystalPlasticityModel

logging.basicConfig(level=logging.WARNING)

model = CrystalPlasticityModel(CrystalModelConfig(max_level=2, cost_mode="nominal"))
n = 6
accs = []
with Sampler(model, run_seed=3) as s:
    for level in model.hierarchy.indices():
        acc = LevelAccumulator(level, model.n_outputs, level > 0)
        acc.add_evaluations(s.draw(level, n))
        accs.append(acc)
        print(f"level {level}: {n} samples drawn")

print("\nstress at 0.5% strain (output 4), MPa")
for a in accs:
    line = f"  level {a.level}: mean {a.mean_fine[4]:7.2f}  sd {np.sqrt(a.var_fine[4]):6.2f}"
    if a.coupled:
        line += f"  sd of difference {np.sqrt(a.var_delta[4]):6.2f}"
    print(line)

rho = correlation_profile(accs)
for level, r in rho.items():
    print(f"fine/coarse correlation at level {level}: min {np.nanmin(r):.2f}, max {np.nanmax(r):.2f}")

rates = fit_rates(accs)
print(f"\nrates alpha {rates.alpha:.2f}  beta {rates.beta:.2f}  gamma {rates.gamma:.2f}"
      + ("  (low confidence: fewer than 3 levels)" if rates.low_confidence else ""))
result = screen_levels(accs)
print(f"screening keeps {list(result.active)} and drops {list(result.dropped)}")
