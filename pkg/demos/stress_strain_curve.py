"""One polycrystal sample: grains, homogenized curve and the nine QoIs.

    python demos/stress_strain_curve.py
"""

import numpy as np

from mlmcuq import extract_qois
from mlmcuq.crystal.model import CrystalModelConfig, CrystalPlasticityModel
from mlmcuq.model import SampleKey

model = CrystalPlasticityModel(CrystalModelConfig(max_level=1))
key = SampleKey(run_seed=5, sample_index=0, level=1)

micro = model.microstructure(key)
print(f"{len(micro)} grains, mean diameter {np.mean(micro.diameters):.1f}")

curve = model.curve(key)
qois = extract_qois(curve)
print("strain %   stress MPa")
for x, y in zip(qois.abscissae, qois.values):
    print(f"   {x:.1f}     {y:8.2f}")

coarse = extract_qois(model.curve(SampleKey(5, 0, 0)))
print("\nsame event on the 8-grain prefix:", " ".join(f"{v:.1f}" for v in coarse.values))
