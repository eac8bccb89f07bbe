"""Plating potential, plating current and the constraint set seen by the controller."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cell import CellState, exchange_current_density, solve_overpotential
from .constants import F, R
from .mechanics import surface_stress_signal
from .params import CellParameters


@dataclass(frozen=True)
class ConstraintLimits:
    """Limits in SI units; I_max is signed (negative = charging).

    A channel can be switched off by setting its limit to +/-inf.
    """

    V_d: float = 4.2
    eta_d: float = 0.0
    sigma_d: float = 92e6
    T_d: float = 313.15
    I_max: float = -40.0

    def __post_init__(self):
        if not self.V_d > 0:
            raise ValueError("V_d must be > 0")
        if not self.sigma_d > 0:
            raise ValueError("sigma_d must be > 0")
        if self.I_max > 0:
            raise ValueError("I_max must be <= 0 (charging is negative)")


@dataclass(frozen=True)
class ConstraintSignals:
    eta_pl: float
    sigma: float
    T: float
    V: float
    e_eta: float
    e_sigma: float
    e_T: float
    e_V: float
    plating_active: bool
    stress_active: bool
    thermal_active: bool

    @property
    def any_aging_active(self) -> bool:
        return self.plating_active or self.stress_active or self.thermal_active


def constraint_signals(eta_pl: float, sigma: float, T: float, V: float, limits: ConstraintLimits) -> ConstraintSignals:
    """Errors and gate flags; every aging gate also requires V < V_d (strict)."""
    below_v = V < limits.V_d
    return ConstraintSignals(
        eta_pl=eta_pl,
        sigma=sigma,
        T=T,
        V=V,
        e_eta=eta_pl - limits.eta_d,
        e_sigma=limits.sigma_d - sigma,
        e_T=limits.T_d - T,
        e_V=limits.V_d - V,
        plating_active=below_v and eta_pl < limits.eta_d,
        stress_active=below_v and limits.sigma_d < sigma,
        thermal_active=below_v and limits.T_d < T,
    )


def plating_potential(state: CellState, params: CellParameters) -> float:
    """min over negative size classes of eta_k + U(c_se,k), using the stored fluxes."""
    el = params.negative
    values = []
    for k, g in enumerate(state.electrode("negative")):
        c_se = g.surface_concentration()
        i0 = exchange_current_density(params, state.electrolyte, c_se, "negative", k)
        eta = solve_overpotential(i0, g.j, state.T, params.alpha_a, params.alpha_c)
        values.append(eta + float(el.ocp(c_se / g.c_max)))
    return min(values)


def plating_current(eta_pl: float, T: float, i0_pl: float, alpha_c: float = 0.5) -> float:
    """Lithium deposition flux (mol/(m^2 s)); always negative."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    return -(i0_pl / F) * math.exp(-alpha_c * F * eta_pl / (R * T))


def evaluate_constraints(
    state: CellState, V: float, limits: ConstraintLimits, params: CellParameters
) -> ConstraintSignals:
    return constraint_signals(
        plating_potential(state, params),
        surface_stress_signal(state, params.mechanics),
        state.T,
        V,
        limits,
    )


def gate_matrix(eta_pl, sigma, T, V, limits: ConstraintLimits) -> np.ndarray:
    """Vectorised gate flags (n, 3) for logged trajectories."""
    below_v = np.asarray(V) < limits.V_d
    return np.column_stack(
        [
            below_v & (np.asarray(eta_pl) < limits.eta_d),
            below_v & (limits.sigma_d < np.asarray(sigma)),
            below_v & (limits.T_d < np.asarray(T)),
        ]
    )
