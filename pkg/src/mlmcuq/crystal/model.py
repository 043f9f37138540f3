"""The crystal-plasticity polycrystal as a multilevel model.

Level ``l`` homogenizes a nested microstructure of ``n0 * 8**l`` grains.
A coupled evaluation integrates the fine grains once; the coarse curve is
the volume-weighted average over the level ``l-1`` prefix of those grains
with renormalized weights, i.e. exactly the level ``l-1`` microstructure of
the same lineage.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..microstructure import DEFAULT_GRAINS_PER_BASE, LogNormalSpec, TextureSpec, grain_count, sample_microstructure
from ..model import CoupledEvaluation, LevelHierarchy, ModelEvaluationError, MultilevelModel, SampleKey
from ..qoi import DEFAULT_ABSCISSAE, StressStrainCurve, extract_qois
from .constitutive import ConstitutiveParams
from .integrate import GrainIntegrationError, LoadingSpec, run_grains, taylor_homogenize

# recorded seconds per sample and processors per sample of the reference
# CPFEM hierarchy (2^3 ... 32^3 voxel meshes)
REFERENCE_COSTS = (39.0, 365.0, 1955.0, 3305.0, 12487.0)
REFERENCE_LABELS = ("2x2x2", "4x4x4", "8x8x8", "16x16x16", "32x32x32")
REFERENCE_PROCESSORS = (1, 1, 2, 4, 8)

COST_MODES = ("measured", "nominal")


@dataclass(frozen=True)
class CrystalModelConfig:
    params: ConstitutiveParams = field(default_factory=ConstitutiveParams)
    loading: LoadingSpec = field(default_factory=LoadingSpec)
    texture: TextureSpec = field(default_factory=TextureSpec)
    grain_stats: LogNormalSpec = field(default_factory=LogNormalSpec)
    n0: int = DEFAULT_GRAINS_PER_BASE
    abscissae: tuple[float, ...] = DEFAULT_ABSCISSAE
    max_level: int = 4
    costs: tuple[float, ...] = REFERENCE_COSTS
    cost_mode: str = "measured"

    def __post_init__(self):
        object.__setattr__(self, "abscissae", tuple(float(a) for a in self.abscissae))
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))
        if self.cost_mode not in COST_MODES:
            raise ValueError(f"cost_mode must be one of {COST_MODES}, got {self.cost_mode!r}")
        if not 0 <= self.max_level < len(self.costs):
            raise ValueError(f"max_level must be in [0, {len(self.costs) - 1}], got {self.max_level}")
        a = self.abscissae
        if not a or a[0] <= 0 or a[-1] > self.loading.final_strain or any(y <= x for x, y in zip(a, a[1:])):
            raise ValueError("abscissae must be strictly increasing in (0, final_strain]")


class CrystalPlasticityModel(MultilevelModel):
    def __init__(self, cfg: CrystalModelConfig = CrystalModelConfig()):
        self.cfg = cfg
        self.n_outputs = len(cfg.abscissae)
        n = cfg.max_level + 1
        labels = list(REFERENCE_LABELS[:n]) if n <= len(REFERENCE_LABELS) else None
        procs = list(REFERENCE_PROCESSORS[:n]) if n <= len(REFERENCE_PROCESSORS) else None
        self.hierarchy = LevelHierarchy.from_costs(cfg.costs[:n], 0, labels, procs)

    def __repr__(self):
        return f"CrystalPlasticityModel(max_level={self.cfg.max_level}, cost_mode={self.cfg.cost_mode!r})"

    def microstructure(self, key: SampleKey, level: int | None = None):
        c = self.cfg
        return sample_microstructure(key, c.texture, c.grain_stats, c.n0, level)

    def curve(self, key: SampleKey, level: int | None = None) -> StressStrainCurve:
        micro = self.microstructure(key, level)
        try:
            return taylor_homogenize(micro, self.cfg.params, self.cfg.loading)
        except (GrainIntegrationError, FloatingPointError) as exc:
            raise ModelEvaluationError(str(exc), key) from exc

    def evaluate_level(self, key: SampleKey, level: int) -> np.ndarray:
        return extract_qois(self.curve(key, level), self.cfg.abscissae).values

    def level_cost(self, level: int, coupled: bool) -> float:
        return self.hierarchy.nominal_cost(level)

    def fine_sample_cost(self, level: int, observed_mean: float | None = None) -> float:
        # the coarse curve is a by-product of the fine integration
        if self.cfg.cost_mode == "measured" and observed_mean is not None:
            return float(observed_mean)
        return self.level_cost(level, coupled=False)

    def coupled_curves(self, key: SampleKey, coupled: bool = True):
        """Fine curve and (optionally) the nested coarse curve from one integration."""
        self._check_key(key)
        c = self.cfg
        micro = self.microstructure(key)
        try:
            history = run_grains(micro.euler_deg, c.params, c.loading)
        except (GrainIntegrationError, FloatingPointError) as exc:
            raise ModelEvaluationError(str(exc), key) from exc
        fine = taylor_homogenize(micro, c.params, c.loading, history=history)
        coarse = None
        if coupled and key.level > self.hierarchy.min_level:
            n = grain_count(key.level - 1, c.n0)
            coarse = taylor_homogenize(micro.prefix(n, key.level - 1), c.params, c.loading, history=history)
        return fine, coarse

    def evaluate_coupled(self, key: SampleKey, coupled: bool = True) -> CoupledEvaluation:
        t0 = time.perf_counter()
        fine, coarse = self.coupled_curves(key, coupled)
        q_fine = extract_qois(fine, self.cfg.abscissae).values
        q_coarse = None if coarse is None else extract_qois(coarse, self.cfg.abscissae).values
        wall = time.perf_counter() - t0
        if self.cfg.cost_mode == "nominal":
            cost = self.level_cost(key.level, q_coarse is not None)
        else:
            cost = max(wall, 1e-9)
        return CoupledEvaluation(q_fine, q_coarse, cost)
