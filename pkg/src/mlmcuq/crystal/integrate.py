"""Material-point integration of the slip/twin law and Taylor homogenization.

Small-strain rate form: ``sigma_dot = C : (eps_dot - eps_p_dot)`` in the
crystal frame.  Each step solves for the end-of-step stress with Newton
(shear rates evaluated at the new stress, resistances at the old state)
and then advances the resistances by forward Euler.  Grains whose Newton
solve fails, or whose shear increment on any system exceeds the cap, are
re-integrated over that step with two half steps, recursively.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np

from ..microstructure import Microstructure, bunge_matrix
from ..qoi import StressStrainCurve
from .constitutive import (ConstitutiveParams, GrainState, Material, harden, shear_rate_slopes,
                           shear_rates, twin_fraction)
from .lattice import strain_tensor_to_voigt

log = logging.getLogger(__name__)


class GrainIntegrationError(RuntimeError):
    def __init__(self, message: str, grain_index: int):
        super().__init__(f"{message} (grain {grain_index})")
        self.grain_index = grain_index


@dataclass(frozen=True)
class LoadingSpec:
    """Monotone uniaxial straining.

    ``final_strain`` is in curve units; ``strain_scale`` converts curve units
    to true strain (0.01: the curve axis is in percent).
    """

    strain_rate: float = 1e-3      # true strain per second
    final_strain: float = 0.9      # curve units
    dt: float = 0.05               # s
    strain_scale: float = 0.01
    axis: int = 2                  # sample axis of loading
    gamma_cap: float = 0.02
    dt_min: float = 1e-7
    newton_tol: float = 1e-8       # MPa, scaled by (1 + |sigma|)
    newton_max_iter: int = 40

    def __post_init__(self):
        if not (self.strain_rate > 0 and self.final_strain > 0 and self.dt > 0):
            raise ValueError("loading needs strain_rate > 0, final_strain > 0 and dt > 0")
        if not self.strain_scale > 0:
            raise ValueError("strain_scale must be positive")
        if self.axis not in (0, 1, 2):
            raise ValueError(f"loading axis must be 0, 1 or 2, got {self.axis}")
        if not 0 < self.dt_min <= self.dt:
            raise ValueError("need 0 < dt_min <= dt")
        if not self.gamma_cap > 0:
            raise ValueError("gamma_cap must be positive")

    @property
    def n_steps(self) -> int:
        total_time = self.final_strain * self.strain_scale / self.strain_rate
        return max(1, int(round(total_time / self.dt)))

    def curve_strain(self) -> np.ndarray:
        return np.linspace(0.0, self.final_strain, self.n_steps + 1)

    def step_time(self) -> float:
        return self.final_strain * self.strain_scale / self.strain_rate / self.n_steps

    def direction(self) -> np.ndarray:
        """Sample-frame strain tensor per unit axial strain (isochoric)."""
        e = np.zeros(3)
        e[self.axis] = 1.0
        axial = np.outer(e, e)
        return axial - 0.5 * (np.eye(3) - axial)


@functools.lru_cache(maxsize=16)
def material(params: ConstitutiveParams) -> Material:
    return Material.from_params(params)


@dataclass
class GrainHistory:
    """Per-grain axial stress (and diagnostics) at every curve point."""

    axial_stress: np.ndarray      # (n_steps + 1, N)
    twin_fraction: np.ndarray     # (n_steps + 1, N)
    dissipation: np.ndarray       # (n_steps, N) plastic work per step, MJ/m^3
    state: GrainState


def rotate_strain_to_crystal(g: np.ndarray, strain_sample: np.ndarray) -> np.ndarray:
    """Sample-frame strain tensor to crystal-frame engineering Voigt, per grain."""
    eps_c = np.einsum("nij,jk,nlk->nil", g, strain_sample, g)
    return strain_tensor_to_voigt(eps_c)


def axial_projector(g: np.ndarray, axis: int) -> np.ndarray:
    """Voigt weights giving the sample ``axis-axis`` stress from crystal stress."""
    m = g[:, :, axis]
    return np.stack([m[:, 0] ** 2, m[:, 1] ** 2, m[:, 2] ** 2,
                     2 * m[:, 1] * m[:, 2], 2 * m[:, 0] * m[:, 2], 2 * m[:, 0] * m[:, 1]], axis=1)


def _solve_stress(state: GrainState, d_eps: np.ndarray, dt: float, mat: Material, loading: LoadingSpec):
    """Newton solve of the backward-Euler stress residual; returns (stress, ok)."""
    C = mat.stiffness
    P = np.vstack([mat.slip_schmid, mat.twin_schmid])
    n_slip = mat.table.n_slip
    sigma_trial = state.stress + d_eps @ C.T

    def residual(sig):
        gs, gt = shear_rates(state, sig, mat)
        gd = np.concatenate([gs, gt], axis=1)
        return sig - sigma_trial + dt * (gd @ P) @ C.T

    n = len(state)
    sig = state.stress.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        r = residual(sig)
        rn = np.linalg.norm(r, axis=1)
        ok = np.zeros(n, dtype=bool)
        for _ in range(loading.newton_max_iter):
            ok = rn <= loading.newton_tol * (1.0 + np.linalg.norm(sig, axis=1))
            if ok.all():
                break
            act = ~ok
            ds, dtw = shear_rate_slopes(state.take(act), sig[act], mat)
            slopes = np.concatenate([ds, dtw], axis=1)
            K = np.einsum("nk,ki,kj->nij", slopes, P, P)
            J = np.eye(6) + dt * np.einsum("ab,nbj->naj", C, K)
            step = -np.linalg.solve(J, r[act][:, :, None])[:, :, 0]
            # backtracking on the residual norm
            lam = np.ones(act.sum())
            sub = state.take(act)
            base = sig[act]
            best_r = r[act]
            best_n = rn[act]
            pending = np.ones(act.sum(), dtype=bool)
            new_sig = base.copy()
            for _ in range(12):
                trial = base[pending] + lam[pending, None] * step[pending]
                gs, gt = shear_rates(sub.take(pending), trial, mat) if np.all(np.isfinite(trial)) else (None, None)
                if gs is None:
                    lam[pending] *= 0.5
                    continue
                tr = trial - sigma_trial[act][pending] + dt * (np.concatenate([gs, gt], axis=1) @ P) @ C.T
                tn = np.linalg.norm(tr, axis=1)
                good = np.isfinite(tn) & (tn < best_n[pending])
                idx = np.flatnonzero(pending)
                new_sig[idx[good]] = trial[good]
                best_r[idx[good]] = tr[good]
                best_n[idx[good]] = tn[good]
                pending[idx[good]] = False
                if not pending.any():
                    break
                lam[pending] *= 0.5
            sig[act] = new_sig
            r[act] = best_r
            rn[act] = best_n
            if pending.all():
                break
        ok = np.isfinite(rn) & (rn <= loading.newton_tol * (1.0 + np.linalg.norm(sig, axis=1)))
    return sig, ok, n_slip


def _attempt(state: GrainState, d_eps: np.ndarray, dt: float, mat: Material, loading: LoadingSpec):
    """One trial step; returns (new_state, dissipation, ok)."""
    sig, ok, n_slip = _solve_stress(state, d_eps, dt, mat, loading)
    sig_safe = np.where(ok[:, None], sig, state.stress)
    gs, gt = shear_rates(state, sig_safe, mat)
    ok &= np.all(np.abs(gs) * dt <= loading.gamma_cap, axis=1)
    ok &= np.all(gt * dt <= loading.gamma_cap, axis=1)
    xi_s, xi_t = harden(state, gs, gt, mat, dt)
    ok &= np.all(np.isfinite(xi_s), axis=1) & np.all(np.isfinite(xi_t), axis=1)
    tau_s = sig_safe @ mat.slip_schmid.T
    tau_t = sig_safe @ mat.twin_schmid.T
    work = dt * (np.sum(tau_s * gs, axis=1) + np.sum(tau_t * gt, axis=1))
    new = GrainState(
        xi_slip=xi_s,
        xi_twin=xi_t,
        gamma_slip=state.gamma_slip + gs * dt,
        gamma_twin=state.gamma_twin + gt * dt,
        eps_p=state.eps_p + dt * (gs @ mat.slip_schmid + gt @ mat.twin_schmid),
        stress=sig_safe,
    )
    return new, work, ok


def _advance(state: GrainState, d_eps: np.ndarray, dt: float, mat: Material, loading: LoadingSpec,
             grain_ids: np.ndarray):
    """Advance ``state`` over one step of length ``dt`` with strain increment ``d_eps``."""
    new, work, ok = _attempt(state, d_eps, dt, mat, loading)
    if ok.all():
        return new, work
    bad = ~ok
    half = 0.5 * dt
    if half < loading.dt_min:
        raise GrainIntegrationError(f"step size fell below dt_min={loading.dt_min:g}",
                                    int(grain_ids[np.flatnonzero(bad)[0]]))
    sub = state.take(bad)
    sub, w1 = _advance(sub, 0.5 * d_eps[bad], half, mat, loading, grain_ids[bad])
    sub, w2 = _advance(sub, 0.5 * d_eps[bad], half, mat, loading, grain_ids[bad])
    new.put(bad, sub)
    work[bad] = w1 + w2
    return new, work


def integrate_strain_path(g: np.ndarray, strain_increments: np.ndarray, dt: float,
                          params: ConstitutiveParams = ConstitutiveParams(),
                          loading: LoadingSpec = LoadingSpec(), axis: int | None = None) -> GrainHistory:
    """Integrate grains (orientations ``g``, sample->crystal) along a strain path.

    ``strain_increments`` has shape ``(n_steps, 3, 3)``: the sample-frame
    strain increment of every step, shared by all grains.
    """
    g = np.asarray(g, dtype=float).reshape(-1, 3, 3)
    incs = np.asarray(strain_increments, dtype=float)
    if incs.ndim != 3 or incs.shape[1:] != (3, 3):
        raise ValueError("strain_increments must have shape (n_steps, 3, 3)")
    if not dt > 0:
        raise ValueError("dt must be positive")
    axis = loading.axis if axis is None else axis
    mat = material(params)
    n = g.shape[0]
    state = GrainState.initial(mat, n)
    proj = axial_projector(g, axis)
    ids = np.arange(n)
    n_steps = incs.shape[0]
    axial = np.zeros((n_steps + 1, n))
    ftw = np.zeros((n_steps + 1, n))
    diss = np.zeros((n_steps, n))
    for k in range(n_steps):
        d_eps = rotate_strain_to_crystal(g, incs[k])
        state, diss[k] = _advance(state, d_eps, dt, mat, loading, ids)
        axial[k + 1] = np.sum(state.stress * proj, axis=1)
        ftw[k + 1] = twin_fraction(state.gamma_twin, mat.gamma_char)
    return GrainHistory(axial, ftw, diss, state)


def run_grains(euler_deg: np.ndarray, params: ConstitutiveParams = ConstitutiveParams(),
               loading: LoadingSpec = LoadingSpec()) -> GrainHistory:
    """Integrate every grain of ``euler_deg`` (``(N, 3)`` Bunge degrees) under ``loading``."""
    g = bunge_matrix(np.asarray(euler_deg, dtype=float).reshape(-1, 3))
    dt = loading.step_time()
    d = loading.direction() * loading.strain_rate * dt
    incs = np.broadcast_to(d, (loading.n_steps, 3, 3))
    return integrate_strain_path(g, incs, dt, params, loading)


def run_grain(orientation, params: ConstitutiveParams = ConstitutiveParams(),
              loading: LoadingSpec = LoadingSpec()) -> np.ndarray:
    """Axial stress history of a single grain at every curve point."""
    return run_grains(np.asarray(orientation, dtype=float)[None, :], params, loading).axial_stress[:, 0]


def taylor_homogenize(micro: Microstructure, params: ConstitutiveParams = ConstitutiveParams(),
                      loading: LoadingSpec = LoadingSpec(), weights: np.ndarray | None = None,
                      history: GrainHistory | None = None) -> StressStrainCurve:
    """Volume-weighted iso-strain average of the grain stress histories.

    ``history`` may be passed to reuse a previous integration of the same
    grains (e.g. when homogenizing a prefix of a larger ensemble).
    """
    if len(micro) == 0:
        raise ValueError("microstructure has no grains")
    if history is None:
        history = run_grains(micro.euler_deg, params, loading)
    w = micro.weights if weights is None else np.asarray(weights, dtype=float)
    stress = history.axial_stress[:, : w.size] @ w
    stress[0] = 0.0
    return StressStrainCurve(loading.curve_strain(), stress)


def projected_stiffness(euler_deg, params: ConstitutiveParams = ConstitutiveParams(),
                        loading: LoadingSpec = LoadingSpec()) -> np.ndarray:
    """Elastic axial stress per unit axial strain under the loading direction."""
    g = bunge_matrix(np.asarray(euler_deg, dtype=float).reshape(-1, 3))
    d = rotate_strain_to_crystal(g, loading.direction())
    sig = d @ material(params).stiffness.T
    return np.sum(sig * axial_projector(g, loading.axis), axis=1)
