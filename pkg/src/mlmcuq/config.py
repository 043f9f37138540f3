"""Run configuration (TOML or JSON) and model construction.

Layout::

    run_seed = 42
    workers = 1
    out = "runs/example"

    [model]
    kind = "manufactured"            # or "crystal-plasticity"

    [model.manufactured]             # ManufacturedConfig fields
    alpha = 2.0

    [model.crystal_plasticity]       # CrystalModelConfig fields
    max_level = 2
    cost_mode = "nominal"
    [model.crystal_plasticity.params]     # ConstitutiveParams fields
    [model.crystal_plasticity.loading]    # LoadingSpec fields
    [model.crystal_plasticity.texture]    # TextureSpec fields
    [model.crystal_plasticity.grain_stats]

    [hierarchy]
    costs = [39, 365, 1955]          # optional nominal cost override

    [qoi]
    abscissae = [0.1, 0.2, 0.3]

    [tolerance]
    eps = 0.05
    ladder = [0.2, 0.1, 0.05]

    [estimator]
    warmup = 8                       # plus alpha, alpha_fallback, start_max_level,
                                     # cost_source, max_iterations
    [screening]
    enabled = true
    samples = 20                     # optional separate screening sample count

    [mc]
    level = 4                        # default: finest level
    n = 100                          # fixed count instead of eps

    [budget]
    hours = 10.0                     # model-cost hours

Errors name the offending field by its dotted path.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .crystal.constitutive import ConstitutiveParams
from .crystal.integrate import LoadingSpec
from .crystal.model import CrystalModelConfig, CrystalPlasticityModel
from .engine import MLMCSettings
from .manufactured import ManufacturedConfig, ManufacturedModel
from .microstructure import LogNormalSpec, TextureSpec
from .screening import ScreeningPolicy

MODEL_KINDS = ("manufactured", "crystal-plasticity")
_TOP = {"run_seed", "workers", "out", "model", "hierarchy", "qoi", "tolerance", "estimator", "screening",
        "mc", "budget"}
_SECTIONS = {
    "model": {"kind", "manufactured", "crystal_plasticity"},
    "hierarchy": {"costs"},
    "qoi": {"abscissae"},
    "tolerance": {"eps", "ladder"},
    "estimator": {"warmup", "alpha", "alpha_fallback", "start_max_level", "cost_source", "max_iterations"},
    "screening": {"enabled", "samples"},
    "mc": {"level", "n"},
    "budget": {"hours"},
}
# fields that do not change results and are left out of the digest
_NON_SEMANTIC = ("workers", "out")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _check_keys(d: dict, allowed, path: str):
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown field")


def _build(cls, d: dict, path: str):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a table")
    names = {f.name for f in fields(cls)}
    _check_keys(d, names, path)
    kw = {}
    for k, v in d.items():
        kw[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def _positive(value, path, integer=False, allow_zero=False):
    ok_type = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok_type:
        raise ConfigError(path, f"expected {'an integer' if integer else 'a number'}, got {value!r}")
    if not (value >= 0 if allow_zero else value > 0):
        raise ConfigError(path, f"must be {'non-negative' if allow_zero else 'positive'}, got {value!r}")
    return value


@dataclass
class RunConfig:
    raw: dict
    run_seed: int
    workers: int
    out: Optional[str]
    model_kind: str
    eps: Optional[float]
    ladder: tuple[float, ...]
    budget_seconds: Optional[float]
    warmup: int
    screening: ScreeningPolicy
    estimator: dict
    mc_level: Optional[int]
    mc_n: Optional[int]
    abscissae: Optional[tuple[float, ...]]

    # -- construction

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = copy.deepcopy(d)
        _check_keys(d, _TOP, "")
        for sec, allowed in _SECTIONS.items():
            if sec in d:
                if not isinstance(d[sec], dict):
                    raise ConfigError(sec, "expected a table")
                _check_keys(d[sec], allowed, sec)
        run_seed = d.get("run_seed", 0)
        if isinstance(run_seed, bool) or not isinstance(run_seed, int) or not 0 <= run_seed < 2 ** 64:
            raise ConfigError("run_seed", f"must be an unsigned 64-bit integer, got {run_seed!r}")
        workers = _positive(d.get("workers", 1), "workers", integer=True)
        model = d.get("model", {})
        kind = model.get("kind")
        if kind not in MODEL_KINDS:
            raise ConfigError("model.kind", f"must be one of {MODEL_KINDS}, got {kind!r}")
        other = "crystal_plasticity" if kind == "manufactured" else "manufactured"
        if other in model:
            raise ConfigError(f"model.{other}", f"section given but model.kind is {kind!r}")
        tol = d.get("tolerance", {})
        eps = tol.get("eps")
        if eps is not None:
            _positive(eps, "tolerance.eps")
        ladder = tol.get("ladder", [])
        if not isinstance(ladder, list):
            raise ConfigError("tolerance.ladder", "expected a list")
        for i, e in enumerate(ladder):
            _positive(e, f"tolerance.ladder[{i}]")
        budget = d.get("budget", {}).get("hours")
        if budget is not None:
            _positive(budget, "budget.hours")
        est = dict(d.get("estimator", {}))
        warmup = est.pop("warmup", 8)
        _positive(warmup, "estimator.warmup", integer=True)
        if warmup < 2:
            raise ConfigError("estimator.warmup", f"must be >= 2, got {warmup}")
        if est.get("alpha") is not None:
            _positive(est["alpha"], "estimator.alpha")
        if "alpha_fallback" in est:
            _positive(est["alpha_fallback"], "estimator.alpha_fallback")
        if "start_max_level" in est:
            _positive(est["start_max_level"], "estimator.start_max_level", integer=True, allow_zero=True)
        if "max_iterations" in est:
            _positive(est["max_iterations"], "estimator.max_iterations", integer=True)
        if est.get("cost_source", "observed") not in ("observed", "nominal"):
            raise ConfigError("estimator.cost_source", "must be 'observed' or 'nominal'")
        scr = d.get("screening", {})
        samples = scr.get("samples")
        if samples is not None:
            _positive(samples, "screening.samples", integer=True)
            if samples < 2:
                raise ConfigError("screening.samples", "must be >= 2")
        enabled = scr.get("enabled", True)
        if not isinstance(enabled, bool):
            raise ConfigError("screening.enabled", "expected true or false")
        mc = d.get("mc", {})
        if "level" in mc:
            _positive(mc["level"], "mc.level", integer=True, allow_zero=True)
        if "n" in mc:
            _positive(mc["n"], "mc.n", integer=True)
            if mc["n"] < 2:
                raise ConfigError("mc.n", "must be >= 2")
        absc = d.get("qoi", {}).get("abscissae")
        if absc is not None:
            if not isinstance(absc, list) or not absc:
                raise ConfigError("qoi.abscissae", "expected a non-empty list")
            for i, a in enumerate(absc):
                _positive(a, f"qoi.abscissae[{i}]")
            if any(b <= a for a, b in zip(absc, absc[1:])):
                raise ConfigError("qoi.abscissae", "must be strictly increasing")
            absc = tuple(float(a) for a in absc)
        costs = d.get("hierarchy", {}).get("costs")
        if costs is not None:
            if not isinstance(costs, list) or not costs:
                raise ConfigError("hierarchy.costs", "expected a non-empty list")
            for i, c in enumerate(costs):
                _positive(c, f"hierarchy.costs[{i}]")
            if any(b <= a for a, b in zip(costs, costs[1:])):
                raise ConfigError("hierarchy.costs", "must increase strictly with level")
        cfg = cls(raw=d, run_seed=int(run_seed), workers=int(workers), out=d.get("out"), model_kind=kind,
                  eps=None if eps is None else float(eps), ladder=tuple(float(e) for e in ladder),
                  budget_seconds=None if budget is None else float(budget) * 3600.0,
                  warmup=int(warmup), screening=ScreeningPolicy(enabled, samples), estimator=est,
                  mc_level=mc.get("level"), mc_n=mc.get("n"), abscissae=absc)
        model_obj = cfg.build_model()  # validates model parameters
        if cfg.mc_level is not None and cfg.mc_level not in model_obj.hierarchy:
            raise ConfigError("mc.level", f"level {cfg.mc_level} outside the model hierarchy")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        text = path.read_text()
        try:
            if path.suffix.lower() == ".json":
                d = json.loads(text)
            else:
                d = tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(str(path), f"cannot parse: {exc}") from exc
        return cls.from_dict(d)

    # -- derived objects

    def with_overrides(self, **kw) -> "RunConfig":
        """Apply CLI overrides (``eps``, ``run_seed``, ``workers``, ``budget_hours``, ``out``)."""
        d = copy.deepcopy(self.raw)
        if kw.get("eps") is not None:
            d.setdefault("tolerance", {})["eps"] = kw["eps"]
        if kw.get("run_seed") is not None:
            d["run_seed"] = kw["run_seed"]
        if kw.get("workers") is not None:
            d["workers"] = kw["workers"]
        if kw.get("budget_hours") is not None:
            d.setdefault("budget", {})["hours"] = kw["budget_hours"]
        if kw.get("out") is not None:
            d["out"] = str(kw["out"])
        return RunConfig.from_dict(d)

    def build_model(self):
        model = self.raw["model"]
        costs = self.raw.get("hierarchy", {}).get("costs")
        if self.model_kind == "manufactured":
            sec = dict(model.get("manufactured", {}))
            if costs is not None:
                sec["cost_profile"] = costs
                sec.setdefault("max_level", sec.get("min_level", 0) + len(costs) - 1)
            if self.abscissae is not None:
                sec.setdefault("n_outputs", len(self.abscissae))
            mcfg = _build(ManufacturedConfig, sec, "model.manufactured")
            if self.abscissae is not None and mcfg.n_outputs != len(self.abscissae):
                raise ConfigError("qoi.abscissae", "length must equal model.manufactured.n_outputs")
            return ManufacturedModel(mcfg)
        sec = dict(model.get("crystal_plasticity", {}))
        path = "model.crystal_plasticity"
        sub = {}
        for name, cls in (("params", ConstitutiveParams), ("loading", LoadingSpec),
                          ("texture", TextureSpec), ("grain_stats", LogNormalSpec)):
            if name in sec:
                sub[name] = _build(cls, sec.pop(name), f"{path}.{name}")
        if costs is not None:
            sec["costs"] = costs
            sec.setdefault("max_level", len(costs) - 1)
        if self.abscissae is not None:
            sec["abscissae"] = self.abscissae
        sec.update(sub)
        return CrystalPlasticityModel(_build(CrystalModelConfig, sec, path))

    def settings(self, eps: float | None = None) -> MLMCSettings:
        eps = self.eps if eps is None else eps
        if eps is None:
            raise ConfigError("tolerance.eps", "required for this command")
        est = self.estimator
        return MLMCSettings(eps=float(eps), warmup=self.warmup, screening=self.screening,
                            alpha=est.get("alpha"), alpha_fallback=est.get("alpha_fallback", 1.0),
                            start_max_level=est.get("start_max_level"), budget=self.budget_seconds,
                            cost_source=est.get("cost_source", "observed"),
                            max_iterations=est.get("max_iterations", 200))

    def digest(self) -> str:
        d = {k: v for k, v in self.raw.items() if k not in _NON_SEMANTIC}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path: str | Path) -> RunConfig:
    return RunConfig.load(path)
