"""A synthetic multilevel model with closed-form statistics.

Each output ``j`` at level ``l`` is::

    Q_l = exp(U_j) + c_b * 2**(-alpha*l) + c_n * 2**(-beta*l/2) * Z_{l,j}

with ``U_j ~ Uniform(0, 1)`` shared by the fine and coarse halves of a
coupled sample and an independent standard normal ``Z_{l,j}`` per level.
Hence ``E[Q] = e - 1``, the bias at level ``l`` is ``c_b * 2**(-alpha*l)``
and ``V[Q_l - Q_{l-1}] = c_n**2 * 2**(-beta*l) * (1 + 2**beta)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .model import CoupledEvaluation, LevelHierarchy, MultilevelModel, SampleKey

log = logging.getLogger(__name__)

EXACT_MEAN = math.e - 1.0


@dataclass(frozen=True)
class ManufacturedConfig:
    alpha: float = 2.0
    beta: float = 3.0
    gamma: float = 2.0
    bias_amp: float = 1.0
    noise_amp: float = 1.0
    n_outputs: int = 1
    max_level: int = 4
    min_level: int = 0
    # per-level sample cost overriding 2**(gamma*l); entries are the cost the
    # sampler records for one evaluation at that level, coupled or not
    cost_profile: Optional[tuple[float, ...]] = None
    # levels whose coarse partner is drawn independently (broken coupling)
    decoupled_levels: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.noise_amp < 0:
            raise ValueError(f"noise_amp must be non-negative, got {self.noise_amp}")
        if self.n_outputs < 1:
            raise ValueError(f"n_outputs must be positive, got {self.n_outputs}")
        if not 0 <= self.min_level <= self.max_level:
            raise ValueError(f"need 0 <= min_level <= max_level, got {self.min_level}, {self.max_level}")
        if self.cost_profile is not None:
            object.__setattr__(self, "cost_profile", tuple(float(c) for c in self.cost_profile))
            if len(self.cost_profile) != self.max_level - self.min_level + 1:
                raise ValueError("cost_profile needs one entry per level")
        object.__setattr__(self, "decoupled_levels", tuple(int(l) for l in self.decoupled_levels))
        if 2 * self.alpha < min(self.beta, self.gamma):
            log.warning("2*alpha = %g < min(beta, gamma) = %g; complexity theorem assumption violated",
                        2 * self.alpha, min(self.beta, self.gamma))


class ManufacturedModel(MultilevelModel):
    def __init__(self, cfg: ManufacturedConfig):
        self.cfg = cfg
        self.n_outputs = cfg.n_outputs
        levels = range(cfg.min_level, cfg.max_level + 1)
        costs = cfg.cost_profile or tuple(2.0 ** (cfg.gamma * l) for l in levels)
        self.hierarchy = LevelHierarchy.from_costs(costs, min_level=cfg.min_level)

    def __repr__(self):
        return f"ManufacturedModel({self.cfg})"

    def _draws(self, key: SampleKey):
        # one stream per lineage, fixed layout: shared U, decoupled U,
        # noise at key.level, noise at key.level - 1
        n = self.cfg.n_outputs
        g = rng.stream(key.run_seed, key.sample_index, key.level, rng.TAG_UNIFORM)
        u = g.random(2 * n)
        z = g.standard_normal(2 * n) if self.cfg.noise_amp != 0.0 else np.zeros(2 * n)
        return u[:n], u[n:], z[:n], z[n:]

    def _value(self, level: int, u: np.ndarray, z: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        q = np.exp(u) + cfg.bias_amp * 2.0 ** (-cfg.alpha * level)
        if cfg.noise_amp != 0.0:
            q = q + cfg.noise_amp * 2.0 ** (-cfg.beta * level / 2.0) * z
        return q

    def evaluate_level(self, key: SampleKey, level: int) -> np.ndarray:
        if not 0 <= key.level - level <= 1:
            raise ValueError(f"level {level} is not {key.level} or {key.level - 1}")
        u, u_dec, z_f, z_c = self._draws(key)
        if level == key.level:
            return self._value(level, u, z_f)
        return self._value(level, u_dec if key.level in self.cfg.decoupled_levels else u, z_c)

    def evaluate_coupled(self, key: SampleKey, coupled: bool = True) -> CoupledEvaluation:
        self._check_key(key)
        u, u_dec, z_f, z_c = self._draws(key)
        fine = self._value(key.level, u, z_f)
        with_coarse = coupled and key.level > self.hierarchy.min_level
        coarse = None
        if with_coarse:
            coarse = self._value(key.level - 1, u_dec if key.level in self.cfg.decoupled_levels else u, z_c)
        return CoupledEvaluation(fine, coarse, self.level_cost(key.level, with_coarse))

    def level_cost(self, level: int, coupled: bool) -> float:
        cfg = self.cfg
        if cfg.cost_profile is not None:
            return cfg.cost_profile[level - cfg.min_level]
        cost = 2.0 ** (cfg.gamma * level)
        if coupled:
            cost += 2.0 ** (cfg.gamma * (level - 1))
        return cost

    # closed-form statistics

    def true_mean(self, level: int | None = None) -> float:
        """``E[Q]`` (``level=None``) or ``E[Q_level]``."""
        if level is None:
            return EXACT_MEAN
        return EXACT_MEAN + self.cfg.bias_amp * 2.0 ** (-self.cfg.alpha * level)

    def bias(self, level: int) -> float:
        return self.cfg.bias_amp * 2.0 ** (-self.cfg.alpha * level)

    def delta_variance(self, level: int) -> float:
        """``V[dQ_level]`` for a coupled level above ``min_level``."""
        b = self.cfg.beta
        return self.cfg.noise_amp ** 2 * 2.0 ** (-b * level) * (1.0 + 2.0 ** b)
