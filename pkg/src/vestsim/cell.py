"""Reduced-order electrochemical-thermal cell.

Representative spherical particles per electrode and size class, a 1-D
electrolyte across negative electrode / separator / positive electrode, and
a lumped temperature.  Sign convention: I < 0 is charging.  On the negative
electrode ``i = sum(l a_k F j_k)``; on the positive ``i = -sum(l a_k F j_k)``,
so j < 0 lithiates a particle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .constants import F, R
from .params import CellParameters, ElectrodeParameters

ELECTRODES = ("negative", "positive")


class StepRejected(RuntimeError):
    """A time step would break a state bound; retry with a smaller dt."""


class KineticStarvation(StepRejected):
    """Zero exchange current with non-zero flux: no finite overpotential."""


class ConvergenceError(RuntimeError):
    """Nonlinear current partition failed to converge."""


# --------------------------------------------------------------------------- grids


@dataclass(frozen=True)
class ParticleGrid:
    """Finite-volume shells of one representative particle.

    ``c`` holds shell-average concentrations, ``r`` the shell centres and
    ``j`` the pore-wall flux applied over the step that produced ``c``.
    """

    r: np.ndarray
    c: np.ndarray
    R_p: float
    c_max: float
    D_s: float
    electrode: str = "negative"
    index: int = 0
    j: float = 0.0

    @property
    def n_r(self) -> int:
        return self.c.size

    @property
    def dr(self) -> float:
        return self.R_p / self.c.size

    def shell_volumes(self) -> np.ndarray:
        rf = np.arange(self.n_r + 1) * self.dr
        return 4.0 * np.pi * (rf[1:] ** 3 - rf[:-1] ** 3) / 3.0

    def lithium(self) -> float:
        """Moles of lithium in the particle."""
        return float(self.shell_volumes() @ self.c)

    def average(self) -> float:
        return self.lithium() / (4.0 * np.pi * self.R_p**3 / 3.0)

    def surface_concentration(self) -> float:
        return surface_concentration(self.c, self.j, self.dr, self.D_s)


def surface_concentration(c: np.ndarray, j: float, dr: float, D_s: float) -> float:
    """Quadratic reconstruction through the two outer shells with the flux condition."""
    c1 = c[-1]
    c2 = c[-2] if c.size > 1 else c1
    return float(c1 + (c1 - c2) / 8.0 - 0.375 * j * dr / D_s)


def make_particle(
    R_p: float,
    c_max: float,
    D_s: float,
    c0: float,
    n_r: int = 30,
    electrode: str = "negative",
    index: int = 0,
) -> ParticleGrid:
    if n_r < 2:
        raise ValueError("need at least 2 shells")
    dr = R_p / n_r
    r = (np.arange(n_r) + 0.5) * dr
    return ParticleGrid(
        r=r, c=np.full(n_r, float(c0)), R_p=R_p, c_max=c_max, D_s=D_s, electrode=electrode, index=index
    )


@dataclass(frozen=True)
class ElectrolyteGrid:
    """Cell-centred control volumes across the three regions."""

    x: np.ndarray
    dx: np.ndarray
    eps: np.ndarray
    c: np.ndarray
    n_neg: int
    n_sep: int
    n_pos: int

    @property
    def neg(self) -> slice:
        return slice(0, self.n_neg)

    @property
    def sep(self) -> slice:
        return slice(self.n_neg, self.n_neg + self.n_sep)

    @property
    def pos(self) -> slice:
        return slice(self.n_neg + self.n_sep, self.c.size)

    def region(self, electrode: str) -> slice:
        return self.neg if electrode == "negative" else self.pos

    def lithium(self) -> float:
        """Porosity-weighted integral of c_e over the cell thickness (mol/m^2)."""
        return float(np.sum(self.eps * self.dx * self.c))

    def electrode_average(self, electrode: str) -> float:
        s = self.region(electrode)
        return float(np.mean(self.c[s]))


def make_electrolyte(params: CellParameters, n_per_region: int = 20, c0: float | None = None) -> ElectrolyteGrid:
    ls = (params.negative.thickness, params.l_sep, params.positive.thickness)
    es = (params.negative.eps_e, params.eps_e_sep, params.positive.eps_e)
    dx = np.concatenate([np.full(n_per_region, l / n_per_region) for l in ls])
    eps = np.concatenate([np.full(n_per_region, e) for e in es])
    x = np.cumsum(dx) - dx / 2
    c = np.full(dx.size, params.c_e_init if c0 is None else c0, dtype=float)
    return ElectrolyteGrid(x=x, dx=dx, eps=eps, c=c, n_neg=n_per_region, n_sep=n_per_region, n_pos=n_per_region)


@dataclass(frozen=True)
class CellState:
    particles: tuple[tuple[ParticleGrid, ...], tuple[ParticleGrid, ...]]  # (negative, positive)
    electrolyte: ElectrolyteGrid
    T: float
    charge: float = 0.0  # cumulative |I| dt, C
    t: float = 0.0

    def electrode(self, name: str) -> tuple[ParticleGrid, ...]:
        return self.particles[0] if name == "negative" else self.particles[1]

    def fluxes(self, name: str) -> np.ndarray:
        return np.array([p.j for p in self.electrode(name)])


# ----------------------------------------------------------------- solid diffusion


@lru_cache(maxsize=512)
def _sphere_operator(n_r: int, R_p: float, D_s: float, dt: float):
    """Implicit-Euler shell operator: c_new = M @ c - j * w."""
    dr = R_p / n_r
    rf = np.arange(n_r + 1) * dr
    vol = (rf[1:] ** 3 - rf[:-1] ** 3) / 3.0
    g = D_s * rf[1:-1] ** 2 / dr
    A = np.diag(vol / dt)
    k = np.arange(n_r - 1)
    A[k, k] += g
    A[k + 1, k + 1] += g
    A[k, k + 1] -= g
    A[k + 1, k] -= g
    Ainv = np.linalg.inv(A)
    M = Ainv * (vol / dt)[None, :]
    b = np.zeros(n_r)
    b[-1] = R_p**2
    w = Ainv @ b
    M.setflags(write=False)
    w.setflags(write=False)
    return M, w


def step_solid_diffusion(
    grid: ParticleGrid, D_s: float, j: float, dt: float, bound_tol: float = 1e-6
) -> ParticleGrid:
    """Advance one particle by ``dt`` with surface flux ``j`` (implicit in diffusion).

    Raises StepRejected if a shell leaves [0, c_max] by more than
    ``bound_tol * c_max``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not math.isfinite(j):
        raise ValueError("surface flux must be finite")
    M, w = _sphere_operator(grid.n_r, grid.R_p, D_s, dt)
    c = M @ grid.c - j * w
    tol = bound_tol * grid.c_max
    lo, hi = c.min(), c.max()
    if lo < -tol or hi > grid.c_max + tol:
        raise StepRejected(f"{grid.electrode}[{grid.index}] concentration out of bounds: [{lo:.6g}, {hi:.6g}]")
    return replace(grid, c=c, j=j, D_s=D_s)


# ------------------------------------------------------------------------ kinetics


def exchange_current_density(
    params: CellParameters, c_e: ElectrolyteGrid, c_se: float, electrode: str, size: int = 0
) -> float:
    """Electrode-averaged exchange current density (A/m^2)."""
    el = params.negative if electrode == "negative" else params.positive
    ce_term = float(np.mean(c_e.c[c_e.region(electrode)] ** params.alpha_a))
    return _i0(el.k0, ce_term, c_se, el.c_max[size], params.alpha_a, params.alpha_c)


def _i0(k0: float, ce_term: float, c_se: float, c_max: float, aa: float, ac: float) -> float:
    if c_se <= 0.0 or c_se >= c_max:
        return 0.0
    if aa == 0.5 and ac == 0.5:
        return k0 * ce_term * math.sqrt((c_max - c_se) * c_se)
    return k0 * ce_term * (c_max - c_se) ** aa * c_se**ac


def butler_volmer(i0: float, eta: float, T: float, alpha_a: float = 0.5, alpha_c: float = 0.5) -> float:
    """Pore-wall flux j (mol/(m^2 s)) for overpotential ``eta``."""
    f = F / (R * T)
    return i0 / F * (math.exp(alpha_a * f * eta) - math.exp(-alpha_c * f * eta))


def solve_overpotential(i0: float, j: float, T: float, alpha_a: float = 0.5, alpha_c: float = 0.5) -> float:
    """Invert Butler-Volmer for the surface overpotential (V)."""
    if j == 0.0:
        return 0.0
    if not i0 > 0.0:
        raise KineticStarvation(f"exchange current {i0!r} with flux {j!r}")
    if alpha_a == alpha_c:
        return R * T / (alpha_a * F) * math.asinh(F * j / (2.0 * i0))
    f = F / (R * T)
    target = F * j / i0

    def g(eta):
        return math.exp(alpha_a * f * eta) - math.exp(-alpha_c * f * eta) - target

    # bracket from the dominant exponential branch
    amin = min(alpha_a, alpha_c)
    span = (math.log1p(abs(target)) + 1.0) / (amin * f)
    return brentq(g, -span, span, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def _electrode_current(electrode: str, i: float) -> float:
    return i if electrode == "negative" else -i


def _partition(
    el: ElectrodeParameters,
    i_el: float,
    i0: np.ndarray,
    U: np.ndarray,
    T: float,
    aa: float,
    ac: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Fluxes and overpotentials making sum(l a F j) = i_el at a common potential."""
    a = el.specific_areas()
    la_F = el.thickness * a * F
    n = el.n_sizes
    if n == 1:
        j = np.array([i_el / la_F[0]])
        eta = np.array([solve_overpotential(float(i0[0]), float(j[0]), T, aa, ac)])
        return j, eta
    if np.any(i0 <= 0) and i_el != 0:
        raise KineticStarvation("zero exchange current in a size class")
    asr = el.asr_f

    def fluxes(phi):
        js = np.empty(n)
        for k in range(n):
            drive = phi - U[k]
            if asr == 0.0:
                js[k] = butler_volmer(float(i0[k]), drive, T, aa, ac)
            else:
                # eta + asr F j = drive, monotone in j
                jmax = abs(drive) / (asr * F)
                if jmax == 0.0:
                    js[k] = 0.0
                    continue
                js[k] = brentq(
                    lambda x: solve_overpotential(float(i0[k]), x, T, aa, ac) + asr * F * x - drive,
                    -jmax,
                    jmax,
                    xtol=1e-30,
                    rtol=1e-15,
                )
        return js

    def resid(phi):
        return float(la_F @ fluxes(phi)) - i_el

    scale = max(abs(i_el), 1e-12)
    lo = float(np.min(U)) - 0.05
    hi = float(np.max(U)) + 0.05
    for _ in range(60):
        if resid(lo) <= 0.0:
            break
        lo -= 2 * (hi - lo)
    for _ in range(60):
        if resid(hi) >= 0.0:
            break
        hi += 2 * (hi - lo)
    r_lo, r_hi = resid(lo), resid(hi)
    if not (r_lo <= 0.0 <= r_hi):
        raise ConvergenceError(f"could not bracket partition root: residuals {r_lo:.3e}, {r_hi:.3e}")
    phi = brentq(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    js = fluxes(phi)
    res = float(la_F @ js) - i_el
    if abs(res) > 1e-10 * scale + 1e-14:
        raise ConvergenceError(f"partition residual {res:.3e} A/m^2 exceeds tolerance (phi={phi:.6f} V)")
    eta = phi - U - asr * F * js
    return js, eta


def partition_current(I: float, state: CellState, params: CellParameters, electrode: str):
    """Split cell current ``I`` (A) among the size classes of one electrode.

    Returns ``(j, eta)`` arrays, one entry per size class.
    """
    el = params.negative if electrode == "negative" else params.positive
    i_el = _electrode_current(electrode, I / params.area)
    grids = state.electrode(electrode)
    c_se = np.array([g.surface_concentration() for k, g in enumerate(grids)])
    i0 = np.array([exchange_current_density(params, state.electrolyte, c_se[k], electrode, k) for k in range(len(grids))])
    U = el.ocp(c_se / np.asarray(el.c_max))
    return _partition(el, i_el, i0, U, state.T, params.alpha_a, params.alpha_c)


# ----------------------------------------------------------------------- electrolyte


@lru_cache(maxsize=128)
def _electrolyte_operator(dx: tuple, eps: tuple, D_e: float, brug: float, dt: float, src: tuple):
    dx = np.array(dx)
    eps = np.array(eps)
    d_eff = D_e * eps**brug
    # harmonic face conductance between neighbouring cells
    g = 1.0 / (dx[:-1] / (2 * d_eff[:-1]) + dx[1:] / (2 * d_eff[1:]))
    cap = eps * dx / dt
    n = dx.size
    A = np.diag(cap)
    k = np.arange(n - 1)
    A[k, k] += g
    A[k + 1, k + 1] += g
    A[k, k + 1] -= g
    A[k + 1, k] -= g
    Ainv = np.linalg.inv(A)
    M = Ainv * cap[None, :]
    w = Ainv @ (np.array(src) * dx)
    M.setflags(write=False)
    w.setflags(write=False)
    return M, w


def _source_shape(grid: ElectrolyteGrid, params: CellParameters) -> tuple:
    """Volumetric source per unit current density (mol/(m^3 s) per A/m^2)."""
    s = np.zeros(grid.c.size)
    k = (1.0 - params.t_plus) / F
    s[grid.neg] = k / params.negative.thickness
    s[grid.pos] = -k / params.positive.thickness
    return tuple(s)


def electrolyte_operator(grid: ElectrolyteGrid, params: CellParameters, dt: float):
    return _electrolyte_operator(
        tuple(grid.dx), tuple(grid.eps), params.D_e, params.brug, dt, _source_shape(grid, params)
    )


def step_electrolyte(grid: ElectrolyteGrid, I: float, params: CellParameters, dt: float) -> ElectrolyteGrid:
    """Implicit step of the electrolyte concentration; zero-flux ends."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    M, w = electrolyte_operator(grid, params, dt)
    c = M @ grid.c + (I / params.area) * w
    if c.min() <= 0.0:
        raise StepRejected(f"electrolyte depleted (min c_e = {c.min():.4g} mol/m^3)")
    return replace(grid, c=c)


def ohmic_resistance(params: CellParameters) -> float:
    """Electrolyte area-specific resistance of the three regions (Ohm m^2)."""
    b = params.brug
    return (
        params.negative.thickness / (3 * params.negative.eps_e**b)
        + params.l_sep / params.eps_e_sep**b
        + params.positive.thickness / (3 * params.positive.eps_e**b)
    ) / params.kappa


def electrolyte_potential_drop(grid: ElectrolyteGrid, I: float, T: float, params: CellParameters) -> float:
    """Phi_e(l_c) - Phi_e(0): ohmic term plus concentration term (V)."""
    i = I / params.area
    ohmic = -ohmic_resistance(params) * i
    conc = 2 * R * T / (F * params.c_e_init) * params.tf * (
        grid.electrode_average("positive") - grid.electrode_average("negative")
    )
    return ohmic + conc


# ---------------------------------------------------------------- voltage and heat


def terminal_voltage(state: CellState, I: float, params: CellParameters, i: int = 0, j: int = 0) -> float:
    """Cell voltage evaluated through positive class ``i`` and negative class ``j``."""
    out = {}
    for name in ELECTRODES:
        el = params.negative if name == "negative" else params.positive
        fl, eta = partition_current(I, state, params, name)
        k = i if name == "positive" else j
        g = state.electrode(name)[k]
        c_se = g.surface_concentration()
        out[name] = eta[k] + float(el.ocp(c_se / el.c_max[k])) + el.asr_f * F * fl[k]
    return out["positive"] - out["negative"] + electrolyte_potential_drop(state.electrolyte, I, state.T, params)


def heat_generation(state: CellState, I: float, V: float, params: CellParameters) -> float:
    """Volumetric heat term of the lumped energy balance, per unit electrode area (W/m^2)."""
    q = -(I / params.area) * V
    for name in ELECTRODES:
        el = params.negative if name == "negative" else params.positive
        fl, _ = partition_current(I, state, params, name)
        la = el.thickness * el.specific_areas()
        for k, g in enumerate(state.electrode(name)):
            x = g.surface_concentration() / el.c_max[k]
            U = float(el.ocp(x))
            q -= la[k] * F * fl[k] * (U + el.asr_f * F * fl[k] - state.T * float(el.dUdT(x)))
    return q


def advance_temperature(T: float, q: float, params: CellParameters, dt: float) -> float:
    """Exponential integrator for C dT/dt = -h (T - T_a) + q with q frozen over dt."""
    C, h = params.thermal_mass, params.h
    if h == 0.0:
        return T + dt * q / C
    T_inf = params.T_a + q / h
    return T_inf + (T - T_inf) * math.exp(-h * dt / C)


def step_temperature(state: CellState, I: float, V: float, params: CellParameters, dt: float) -> float:
    if not dt > 0:
        raise ValueError("dt must be positive")
    return advance_temperature(state.T, heat_generation(state, I, V, params), params, dt)
