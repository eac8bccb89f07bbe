"""Closed-loop plant: the cell model with operators and stress weights cached.

``Plant.measure(state)`` collects everything that depends only on the state;
``Plant.evaluate(frozen, I)`` returns algebraic outputs for a candidate
current; ``Plant.advance`` moves the state forward one step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cell import (
    CellState,
    ElectrolyteGrid,
    KineticStarvation,
    ParticleGrid,
    StepRejected,
    _electrolyte_operator,
    _i0,
    _partition,
    _source_shape,
    _sphere_operator,
    advance_temperature,
    make_electrolyte,
    make_particle,
    ohmic_resistance,
    surface_concentration,
)
from .constants import F, R
from .mechanics import SurfaceStress
from .params import CellParameters


@dataclass(frozen=True)
class Frozen:
    """State-only quantities shared by every evaluation at one time level."""

    state: CellState
    c_se: tuple[np.ndarray, np.ndarray]
    U: tuple[np.ndarray, np.ndarray]
    dUdT: tuple[np.ndarray, np.ndarray]
    i0: tuple[np.ndarray, np.ndarray]
    conc_drop: float
    sigma: float  # max |sigma_h(R_p)| over negative size classes, Pa
    soc: float


@dataclass(frozen=True)
class Outputs:
    I: float
    V: float
    eta_pl: float
    sigma: float
    T: float
    soc: float
    j: tuple[np.ndarray, np.ndarray]
    eta: tuple[np.ndarray, np.ndarray]
    dphi_e: float
    q: float


class Plant:
    def __init__(self, params: CellParameters, n_r: int = 30, n_e: int = 20, bound_tol: float = 1e-6):
        self.params = params
        self.n_r = n_r
        self.n_e = n_e
        self.bound_tol = bound_tol
        self.els = (params.negative, params.positive)
        self.r_ohm = ohmic_resistance(params)
        self.la = tuple(el.thickness * el.specific_areas() for el in self.els)
        self._template = self.initial_state(0.0)
        neg = self._template.particles[0]
        self._stress = [SurfaceStress(g, params.mechanics) for g in neg]
        self._vol_frac = []
        for grids in self._template.particles:
            self._vol_frac.append([g.shell_volumes() / g.shell_volumes().sum() for g in grids])
        el = params.negative
        self._cmax_mean = float(np.dot(el.fractions, el.c_max))
        self._dx_soc = params.sto_window("negative")

    # ------------------------------------------------------------------ states
    def initial_state(self, soc: float = 0.0, T: float | None = None) -> CellState:
        p = self.params
        parts = []
        for name, el, sign in (("negative", p.negative, 1.0), ("positive", p.positive, -1.0)):
            x = el.sto_0 + sign * soc * p.sto_window(name)
            if not 0.0 < x < 1.0:
                raise ValueError(f"initial {name} stoichiometry {x:.4f} outside (0, 1) for SOC {soc}")
            parts.append(
                tuple(
                    make_particle(el.radii[k], el.c_max[k], el.diffusivities[k], x * el.c_max[k], self.n_r, name, k)
                    for k in range(el.n_sizes)
                )
            )
        T0 = p.T_init if T is None and p.T_init is not None else (p.T_a if T is None else T)
        return CellState(particles=(parts[0], parts[1]), electrolyte=make_electrolyte(p, self.n_e), T=T0)

    def soc(self, state: CellState) -> float:
        el = self.params.negative
        x = sum(
            el.fractions[k] * float(self._vol_frac[0][k] @ g.c) for k, g in enumerate(state.particles[0])
        ) / self._cmax_mean
        return (x - el.sto_0) / self._dx_soc

    # ------------------------------------------------------------- evaluation
    def measure(self, state: CellState) -> Frozen:
        p = self.params
        ce = state.electrolyte
        c_se, U, dUdT, i0 = [], [], [], []
        for e, (el, grids) in enumerate(zip(self.els, state.particles)):
            reg = ce.c[ce.neg] if e == 0 else ce.c[ce.pos]
            if p.alpha_a == 0.5:
                ce_term = float(np.mean(np.sqrt(reg)))
            else:
                ce_term = float(np.mean(reg**p.alpha_a))
            cs = np.array([surface_concentration(g.c, g.j, g.dr, g.D_s) for g in grids])
            x = cs / np.asarray(el.c_max)
            c_se.append(cs)
            U.append(np.interp(x, el.ocp.x, el.ocp.y))
            dUdT.append(np.interp(x, el.dUdT.x, el.dUdT.y))
            i0.append(np.array([_i0(el.k0, ce_term, cs[k], el.c_max[k], p.alpha_a, p.alpha_c) for k in range(cs.size)]))
        cbar_n = float(np.mean(ce.c[ce.neg]))
        cbar_p = float(np.mean(ce.c[ce.pos]))
        conc = 2 * R * state.T / (F * p.c_e_init) * p.tf * (cbar_p - cbar_n)
        sigma = max(abs(s(g.c, c_se[0][k])) for k, (s, g) in enumerate(zip(self._stress, state.particles[0])))
        return Frozen(
            state=state,
            c_se=(c_se[0], c_se[1]),
            U=(U[0], U[1]),
            dUdT=(dUdT[0], dUdT[1]),
            i0=(i0[0], i0[1]),
            conc_drop=conc,
            sigma=sigma,
            soc=self.soc(state),
        )

    def evaluate(self, fz: Frozen, I: float) -> Outputs:
        p = self.params
        T = fz.state.T
        i = I / p.area
        js, etas = [], []
        for e, el in enumerate(self.els):
            i_el = i if e == 0 else -i
            if el.n_sizes == 1:
                i0 = float(fz.i0[e][0])
                jj = i_el / self.la[e][0] / F
                if jj != 0.0 and not i0 > 0.0:
                    raise KineticStarvation(f"{'negative' if e == 0 else 'positive'} surface at stoichiometric limit")
                eta = R * T / (p.alpha_a * F) * math.asinh(F * jj / (2 * i0)) if (
                    jj != 0.0 and p.alpha_a == p.alpha_c
                ) else None
                if eta is None:
                    j_arr, eta_arr = _partition(el, i_el, fz.i0[e], fz.U[e], T, p.alpha_a, p.alpha_c)
                else:
                    j_arr, eta_arr = np.array([jj]), np.array([eta])
            else:
                j_arr, eta_arr = _partition(el, i_el, fz.i0[e], fz.U[e], T, p.alpha_a, p.alpha_c)
            js.append(j_arr)
            etas.append(eta_arr)
        neg, pos = self.els
        dphi = -self.r_ohm * i + fz.conc_drop
        phi_n = etas[0][0] + fz.U[0][0] + neg.asr_f * F * js[0][0]
        phi_p = etas[1][0] + fz.U[1][0] + pos.asr_f * F * js[1][0]
        V = float(phi_p - phi_n + dphi)
        eta_pl = float(np.min(etas[0] + fz.U[0]))
        q = -i * V
        for e, el in enumerate(self.els):
            q -= float(
                np.sum(self.la[e] * F * js[e] * (fz.U[e] + el.asr_f * F * js[e] - T * fz.dUdT[e]))
            )
        return Outputs(
            I=I,
            V=V,
            eta_pl=eta_pl,
            sigma=fz.sigma,
            T=T,
            soc=fz.soc,
            j=(js[0], js[1]),
            eta=(etas[0], etas[1]),
            dphi_e=float(dphi),
            q=q,
        )

    def predict(self, state: CellState, out: Outputs, dt: float) -> tuple[float, float]:
        """Surface stress and temperature at the end of a step taken with ``out``."""
        sig = 0.0
        for k, (g, stress) in enumerate(zip(state.particles[0], self._stress)):
            M, w = _sphere_operator(g.n_r, g.R_p, g.D_s, dt)
            jk = float(out.j[0][k])
            c = M @ g.c - jk * w
            sig = max(sig, abs(stress(c, surface_concentration(c, jk, g.dr, g.D_s))))
        return sig, advance_temperature(state.T, out.q, self.params, dt)

    # ---------------------------------------------------------------- stepping
    def advance(self, state: CellState, out: Outputs, dt: float) -> CellState:
        p = self.params
        new_parts = []
        for e, grids in enumerate(state.particles):
            row = []
            for k, g in enumerate(grids):
                M, w = _sphere_operator(g.n_r, g.R_p, g.D_s, dt)
                jk = float(out.j[e][k])
                c = M @ g.c - jk * w
                tol = self.bound_tol * g.c_max
                if c[-1] > g.c_max + tol or c[-1] < -tol or c.min() < -tol or c.max() > g.c_max + tol:
                    raise StepRejected(
                        f"{g.electrode}[{k}] concentration out of bounds: [{c.min():.6g}, {c.max():.6g}]"
                    )
                row.append(ParticleGrid(g.r, c, g.R_p, g.c_max, g.D_s, g.electrode, g.index, jk))
            new_parts.append(tuple(row))
        ce = state.electrolyte
        M, w = _electrolyte_operator(
            tuple(ce.dx), tuple(ce.eps), p.D_e, p.brug, dt, _source_shape(ce, p)
        ) if not hasattr(self, "_ce_ops") or self._ce_ops[0] != dt else self._ce_ops[1]
        self._ce_ops = (dt, (M, w))
        c_e = M @ ce.c + (out.I / p.area) * w
        if c_e.min() <= 0.0:
            raise StepRejected(f"electrolyte depleted (min c_e = {c_e.min():.4g} mol/m^3)")
        new_ce = ElectrolyteGrid(ce.x, ce.dx, ce.eps, c_e, ce.n_neg, ce.n_sep, ce.n_pos)
        T = advance_temperature(state.T, out.q, p, dt)
        return CellState(
            particles=(new_parts[0], new_parts[1]),
            electrolyte=new_ce,
            T=T,
            charge=state.charge + abs(out.I) * dt,
            t=state.t + dt,
        )
