"""The multilevel model contract consumed by the estimators.

A model maps a random event (addressed by a :class:`SampleKey`) to a vector
of quantities of interest at a given level.  The estimators only ever ask
for *coupled* evaluations: the level-``l`` value together with the
level-``l-1`` value computed from the same random event, so that the
backward difference has small variance.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np


class ModelEvaluationError(RuntimeError):
    """A model could not produce a sample (e.g. non-convergent integration)."""

    def __init__(self, message: str, key: "SampleKey | None" = None):
        super().__init__(message if key is None else f"{message} [key={key}]")
        self.key = key


@dataclass(frozen=True, order=True)
class SampleKey:
    """Address of one random event: ``(run_seed, sample_index, level)``."""

    run_seed: int
    sample_index: int
    level: int

    def __post_init__(self):
        if not 0 <= self.run_seed < 2**64:
            raise ValueError(f"run_seed out of u64 range: {self.run_seed}")
        if self.sample_index < 0 or self.level < 0:
            raise ValueError(f"sample_index and level must be non-negative: {self}")


@dataclass(frozen=True)
class CoupledEvaluation:
    """Fine value, optional coarse value on the same event, and model cost."""

    fine: np.ndarray
    coarse: Optional[np.ndarray]
    cost: float

    def __post_init__(self):
        fine = np.asarray(self.fine, dtype=float)
        object.__setattr__(self, "fine", fine)
        if self.coarse is not None:
            coarse = np.asarray(self.coarse, dtype=float)
            if coarse.shape != fine.shape:
                raise ValueError(f"fine/coarse shape mismatch: {fine.shape} vs {coarse.shape}")
            object.__setattr__(self, "coarse", coarse)
        if not self.cost > 0:
            raise ValueError(f"cost must be positive, got {self.cost}")


def delta(e: CoupledEvaluation) -> np.ndarray:
    """Backward difference: ``fine - coarse``, or ``fine`` on the base level."""
    if e.coarse is None:
        return e.fine.copy()
    return e.fine - e.coarse


@dataclass(frozen=True)
class LevelDescriptor:
    level: int
    dof_label: str
    nominal_cost: float
    processors: int = 1


@dataclass(frozen=True)
class LevelHierarchy:
    """Contiguous levels with strictly increasing nominal cost."""

    levels: tuple[LevelDescriptor, ...] = field(default_factory=tuple)

    def __post_init__(self):
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("hierarchy must contain at least one level")
        idx = [d.level for d in levels]
        if idx != list(range(idx[0], idx[0] + len(idx))):
            raise ValueError(f"level indices must be contiguous and increasing, got {idx}")
        costs = [d.nominal_cost for d in levels]
        if any(c <= 0 for c in costs):
            raise ValueError("nominal costs must be positive")
        if any(b <= a for a, b in zip(costs, costs[1:])):
            raise ValueError(f"nominal costs must increase strictly with level, got {costs}")

    @classmethod
    def from_costs(cls, costs: Sequence[float], min_level: int = 0,
                   labels: Sequence[str] | None = None,
                   processors: Sequence[int] | None = None) -> "LevelHierarchy":
        n = len(costs)
        labels = labels or [f"level-{min_level + i}" for i in range(n)]
        processors = processors or [1] * n
        return cls(tuple(LevelDescriptor(min_level + i, labels[i], float(costs[i]), int(processors[i]))
                         for i in range(n)))

    @property
    def min_level(self) -> int:
        return self.levels[0].level

    @property
    def max_level(self) -> int:
        return self.levels[-1].level

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self) -> Iterator[LevelDescriptor]:
        return iter(self.levels)

    def __contains__(self, level: int) -> bool:
        return self.min_level <= level <= self.max_level

    def indices(self) -> list[int]:
        return [d.level for d in self.levels]

    def nominal_cost(self, level: int) -> float:
        return self.levels[level - self.min_level].nominal_cost

    def truncate(self, max_level: int) -> "LevelHierarchy":
        return LevelHierarchy(tuple(d for d in self.levels if d.level <= max_level))


class MultilevelModel(abc.ABC):
    """Abstract multilevel stochastic model.

    Subclasses implement :meth:`evaluate_level`, the level-``l`` quantity of
    interest for the random event of a key, and :meth:`level_cost`.  The
    default :meth:`evaluate_coupled` combines two such evaluations; models
    that can share work between fine and coarse override it.

    Implementations must be pure functions of the key and their own
    (immutable) configuration so that they can be called from many workers.
    """

    hierarchy: LevelHierarchy
    n_outputs: int

    @abc.abstractmethod
    def evaluate_level(self, key: SampleKey, level: int) -> np.ndarray:
        """Quantity of interest at ``level`` for the random event of ``key``.

        ``level`` may be below ``key.level``; the event (the "lineage") is
        fixed by ``(run_seed, sample_index, key.level)``.
        """

    @abc.abstractmethod
    def level_cost(self, level: int, coupled: bool) -> float:
        """Model-reported cost of one evaluation at ``level``."""

    def fine_sample_cost(self, level: int, observed_mean: float | None = None) -> float:
        """Cost of one uncoupled evaluation at ``level`` (used to price plain MC)."""
        return self.level_cost(level, coupled=False)

    def evaluate_coupled(self, key: SampleKey, coupled: bool = True) -> CoupledEvaluation:
        self._check_key(key)
        fine = self.evaluate_level(key, key.level)
        with_coarse = coupled and key.level > self.hierarchy.min_level
        coarse = self.evaluate_level(key, key.level - 1) if with_coarse else None
        return CoupledEvaluation(fine, coarse, self.level_cost(key.level, with_coarse))

    def _check_key(self, key: SampleKey) -> None:
        if key.level not in self.hierarchy:
            raise ValueError(
                f"level {key.level} outside hierarchy "
                f"[{self.hierarchy.min_level}, {self.hierarchy.max_level}]")


def evaluate_coupled(model: MultilevelModel, key: SampleKey, coupled: bool = True) -> CoupledEvaluation:
    """Evaluate ``Q_l`` and, for ``l`` above the base level, ``Q_{l-1}`` on one event."""
    return model.evaluate_coupled(key, coupled=coupled)
