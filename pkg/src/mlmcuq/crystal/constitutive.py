"""Phenomenological slip/twin constitutive law for HCP magnesium.

Defaults are the Mg parameters of the case study (stresses in MPa).  The
elastic constants are assigned as C11 = 59.3, C33 = 61.5, C44 = 16.4,
C12 = 25.7, C13 = 21.4 GPa.  Interaction matrices default to all ones,
``c1..c4 = 1`` and ``h_int = 0``.

All functions are vectorised over a leading grain axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .lattice import (BASAL, C2, PRISMATIC, PYR_A, PYR_CA, T1, SlipTwinSystemTable,
                      hcp_systems, hexagonal_stiffness)


@dataclass(frozen=True)
class ConstitutiveParams:
    # elastic constants, MPa
    C11: float = 59300.0
    C12: float = 25700.0
    C13: float = 21400.0
    C33: float = 61500.0
    C44: float = 16400.0
    c_over_a: float = 1.635
    # reference shear rates, 1/s
    gdot0_slip: float = 1e-3
    gdot0_twin: float = 1e-3
    # initial resistances, MPa
    tau0_basal: float = 10.0
    tau0_prismatic: float = 55.0
    tau0_pyr_a: float = 60.0
    tau0_pyr_ca: float = 60.0
    tau0_t1: float = 45.0
    tau0_c2: float = 80.0
    # saturation resistances, MPa
    tausat_basal: float = 45.0
    tausat_prismatic: float = 135.0
    tausat_pyr_a: float = 150.0
    tausat_pyr_ca: float = 150.0
    # hardening moduli, MPa
    h0_ss: float = 500.0
    h0_tws: float = 150.0
    h0_twtw: float = 50.0
    n_slip: float = 10.0
    n_twin: float = 5.0
    a: float = 2.5
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 1.0
    h_int: float = 0.0
    # uniform latent-hardening coefficients per family pair
    h_slip_slip: float = 1.0
    h_slip_twin: float = 1.0
    h_twin_slip: float = 1.0
    h_twin_twin: float = 1.0
    gamma_char_t1: float = 0.129
    gamma_char_c2: float = 0.138

    def __post_init__(self):
        positive = ["C11", "C33", "C44", "c_over_a", "gdot0_slip", "gdot0_twin",
                    "tau0_basal", "tau0_prismatic", "tau0_pyr_a", "tau0_pyr_ca", "tau0_t1", "tau0_c2",
                    "tausat_basal", "tausat_prismatic", "tausat_pyr_a", "tausat_pyr_ca",
                    "h0_ss", "h0_tws", "h0_twtw", "a", "gamma_char_t1", "gamma_char_c2"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"constitutive parameter {name} must be positive, got {getattr(self, name)}")
        if self.n_slip < 1 or self.n_twin < 1:
            raise ValueError("rate sensitivity exponents must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ConstitutiveParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown constitutive parameters: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **kw) -> "ConstitutiveParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class Material:
    """Arrays derived once from :class:`ConstitutiveParams`."""

    params: ConstitutiveParams
    table: SlipTwinSystemTable
    stiffness: np.ndarray
    slip_schmid: np.ndarray  # (Ns, 6)
    twin_schmid: np.ndarray  # (Nt, 6)
    tau0_slip: np.ndarray
    tau0_twin: np.ndarray
    tausat_slip: np.ndarray
    gamma_char: np.ndarray
    h_ss: np.ndarray = field(repr=False)
    h_st: np.ndarray = field(repr=False)
    h_ts: np.ndarray = field(repr=False)
    h_tt: np.ndarray = field(repr=False)
    h_int: np.ndarray = field(repr=False)

    @classmethod
    def from_params(cls, p: ConstitutiveParams) -> "Material":
        table = hcp_systems(p.c_over_a, p.gamma_char_t1, p.gamma_char_c2)
        slip_tau0 = {BASAL: p.tau0_basal, PRISMATIC: p.tau0_prismatic, PYR_A: p.tau0_pyr_a, PYR_CA: p.tau0_pyr_ca}
        slip_sat = {BASAL: p.tausat_basal, PRISMATIC: p.tausat_prismatic, PYR_A: p.tausat_pyr_a,
                    PYR_CA: p.tausat_pyr_ca}
        twin_tau0 = {T1: p.tau0_t1, C2: p.tau0_c2}
        ns, nt = table.n_slip, table.n_twin
        return cls(
            params=p,
            table=table,
            stiffness=hexagonal_stiffness(p.C11, p.C12, p.C13, p.C33, p.C44),
            slip_schmid=table.slip_schmid(),
            twin_schmid=table.twin_schmid(),
            tau0_slip=np.array([slip_tau0[f] for f in table.slip_family]),
            tau0_twin=np.array([twin_tau0[f] for f in table.twin_family]),
            tausat_slip=np.array([slip_sat[f] for f in table.slip_family]),
            gamma_char=table.twin_gamma_char.copy(),
            h_ss=np.full((ns, ns), p.h_slip_slip),
            h_st=np.full((ns, nt), p.h_slip_twin),
            h_ts=np.full((nt, ns), p.h_twin_slip),
            h_tt=np.full((nt, nt), p.h_twin_twin),
            h_int=np.full(ns, p.h_int),
        )


@dataclass
class GrainState:
    """State of a stack of grains (leading axis = grain)."""

    xi_slip: np.ndarray       # (N, Ns) resistances, MPa
    xi_twin: np.ndarray       # (N, Nt)
    gamma_slip: np.ndarray    # (N, Ns) accumulated signed shear
    gamma_twin: np.ndarray    # (N, Nt) accumulated twin shear, non-decreasing
    eps_p: np.ndarray         # (N, 6) plastic strain, engineering Voigt, crystal frame
    stress: np.ndarray        # (N, 6) stress, Voigt, crystal frame

    @classmethod
    def initial(cls, mat: Material, n: int) -> "GrainState":
        ns, nt = mat.table.n_slip, mat.table.n_twin
        return cls(np.tile(mat.tau0_slip, (n, 1)), np.tile(mat.tau0_twin, (n, 1)),
                   np.zeros((n, ns)), np.zeros((n, nt)), np.zeros((n, 6)), np.zeros((n, 6)))

    def __len__(self):
        return self.stress.shape[0]

    def take(self, idx) -> "GrainState":
        return GrainState(self.xi_slip[idx], self.xi_twin[idx], self.gamma_slip[idx],
                          self.gamma_twin[idx], self.eps_p[idx], self.stress[idx])

    def put(self, idx, other: "GrainState") -> None:
        self.xi_slip[idx] = other.xi_slip
        self.xi_twin[idx] = other.xi_twin
        self.gamma_slip[idx] = other.gamma_slip
        self.gamma_twin[idx] = other.gamma_twin
        self.eps_p[idx] = other.eps_p
        self.stress[idx] = other.stress


def twin_fraction(gamma_twin: np.ndarray, gamma_char: np.ndarray) -> np.ndarray:
    """Total twin volume fraction, capped at one."""
    return np.minimum(1.0, np.sum(gamma_twin / gamma_char, axis=-1))


def _flow(tau, xi, gdot0, n, f, twin):
    ratio = np.abs(tau / xi)
    base = (1.0 - f)[:, None] * gdot0 * ratio ** n
    if twin:
        return np.where(tau > 0, base, 0.0)
    return base * np.sign(tau)


def _flow_slope(tau, xi, gdot0, n, f, twin):
    """d(gdot)/d(tau)."""
    ratio = np.abs(tau / xi)
    d = (1.0 - f)[:, None] * gdot0 * n * ratio ** (n - 1.0) / xi
    if twin:
        return np.where(tau > 0, d, 0.0)
    return d


def resolved_shears(mat: Material, stress: np.ndarray):
    """Resolved shear stresses ``(slip, twin)`` from Voigt stresses ``(N, 6)``."""
    return stress @ mat.slip_schmid.T, stress @ mat.twin_schmid.T


def shear_rates(state: GrainState, stress: np.ndarray, mat: Material):
    """Slip and twin shear rates at ``stress`` with the state's resistances."""
    if not np.all(np.isfinite(stress)):
        raise FloatingPointError("non-finite stress in shear rate evaluation")
    p = mat.params
    f = twin_fraction(state.gamma_twin, mat.gamma_char)
    tau_s, tau_t = resolved_shears(mat, stress)
    return (_flow(tau_s, state.xi_slip, p.gdot0_slip, p.n_slip, f, twin=False),
            _flow(tau_t, state.xi_twin, p.gdot0_twin, p.n_twin, f, twin=True))


def shear_rate_slopes(state: GrainState, stress: np.ndarray, mat: Material):
    p = mat.params
    f = twin_fraction(state.gamma_twin, mat.gamma_char)
    tau_s, tau_t = resolved_shears(mat, stress)
    return (_flow_slope(tau_s, state.xi_slip, p.gdot0_slip, p.n_slip, f, twin=False),
            _flow_slope(tau_t, state.xi_twin, p.gdot0_twin, p.n_twin, f, twin=True))


def hardening_rates(state: GrainState, gdot_slip: np.ndarray, gdot_twin: np.ndarray, mat: Material):
    """Resistance rates ``(xi_dot_slip, xi_dot_twin)``."""
    p = mat.params
    f = twin_fraction(state.gamma_twin, mat.gamma_char)
    one_minus = 1.0 - state.xi_slip / mat.tausat_slip
    drive = np.abs(gdot_slip) * np.abs(one_minus) ** p.a * np.sign(one_minus)
    prefactor = p.h0_ss * (1.0 + p.c1 * f ** p.c2)
    xi_dot_slip = (prefactor[:, None] * (1.0 + mat.h_int) * (drive @ mat.h_ss.T)
                   + gdot_twin @ mat.h_st.T)
    slip_total = np.sum(np.abs(state.gamma_slip), axis=1)
    xi_dot_twin = (p.h0_tws * (slip_total ** p.c3)[:, None] * (np.abs(gdot_slip) @ mat.h_ts.T)
                   + p.h0_twtw * (f ** p.c4)[:, None] * (gdot_twin @ mat.h_tt.T))
    return xi_dot_slip, xi_dot_twin


def harden(state: GrainState, gdot_slip: np.ndarray, gdot_twin: np.ndarray, mat: Material, dt: float):
    """Forward-Euler resistance update; returns new ``(xi_slip, xi_twin)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    ds, dtw = hardening_rates(state, gdot_slip, gdot_twin, mat)
    return state.xi_slip + ds * dt, state.xi_twin + dtw * dt
