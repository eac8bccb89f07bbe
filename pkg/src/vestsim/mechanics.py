"""Intercalation-induced displacement and stress in a spherical particle.

Radial integrals ``I(r) = int_0^r rho^2 dV(rho) drho`` are evaluated exactly
for a piecewise-linear strain profile through the nodes, with the strain held
at its first nodal value on ``[0, r_0]`` so the centre needs no special case.
A uniform profile therefore gives ``I(r) = dV r^3 / 3`` to rounding and is
stress-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cell import CellState, ParticleGrid
from .params import ConfigError, MechanicalParameters, Table


def volumetric_strain(x, table: Table):
    """Volumetric strain at stoichiometry ``x``; clamped outside the table range."""
    if table is None or len(table.x) == 0:
        raise ConfigError("empty volumetric-strain table")
    return table(x)


def _segment_weights(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weights (wa, wb) so that segment k integral = wa[k] f[k] + wb[k] f[k+1]."""
    a, b = r[:-1], r[1:]
    h = b - a
    b3a3 = (b**3 - a**3) / 3.0
    b4a4 = (b**4 - a**4) / 4.0
    wa = (b * b3a3 - b4a4) / h
    wb = (b4a4 - a * b3a3) / h
    return wa, wb


def strain_moments(r: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Cumulative ``int_0^{r_k} rho^2 dV drho`` at every node."""
    r = np.asarray(r, dtype=float)
    dv = np.asarray(dv, dtype=float)
    out = np.empty_like(r)
    out[0] = dv[0] * r[0] ** 3 / 3.0
    if r.size > 1:
        wa, wb = _segment_weights(r)
        out[1:] = out[0] + np.cumsum(wa * dv[:-1] + wb * dv[1:])
    return out


@dataclass(frozen=True)
class StressProfile:
    r: np.ndarray
    sigma_r: np.ndarray
    sigma_t: np.ndarray
    sigma_h: np.ndarray

    @property
    def surface_hydrostatic(self) -> float:
        return float(self.sigma_h[-1])

    @property
    def surface_radial(self) -> float:
        return float(self.sigma_r[-1])


def stress_components(r: np.ndarray, dv: np.ndarray, E: float, nu: float) -> StressProfile:
    """Radial, tangential and hydrostatic stress; the last node is the surface."""
    r = np.asarray(r, dtype=float)
    dv = np.asarray(dv, dtype=float)
    moments = strain_moments(r, dv)
    mean_total = moments[-1] / r[-1] ** 3
    inner = moments / r**3
    k = E / (3.0 * (1.0 - nu))
    sigma_r = 2.0 * k * (mean_total - inner)
    sigma_r[-1] = 0.0  # traction-free surface; exact in the formula up to rounding
    sigma_t = k * (2.0 * mean_total + inner - dv)
    sigma_h = (sigma_r + 2.0 * sigma_t) / 3.0
    return StressProfile(r=r, sigma_r=sigma_r, sigma_t=sigma_t, sigma_h=sigma_h)


def hydrostatic_stress(r: np.ndarray, dv: np.ndarray, E: float, nu: float) -> np.ndarray:
    """Hydrostatic stress straight from the mean strain and the local strain."""
    r = np.asarray(r, dtype=float)
    dv = np.asarray(dv, dtype=float)
    mean_total = strain_moments(r, dv)[-1] / r[-1] ** 3
    return 2.0 * E / (3.0 * (1.0 - nu)) * (mean_total - dv / 3.0)


def displacement(r: np.ndarray, dv: np.ndarray, nu: float) -> np.ndarray:
    """Radial displacement with u(0) = 0 and a traction-free surface."""
    r = np.asarray(r, dtype=float)
    moments = strain_moments(r, dv)
    R_p = r[-1]
    return (1 + nu) / (1 - nu) * moments / (3.0 * r**2) + (1 - 2 * nu) / (1 - nu) * 2.0 * r * moments[-1] / (
        3.0 * R_p**3
    )


def particle_nodes(grid: ParticleGrid, mech: MechanicalParameters) -> tuple[np.ndarray, np.ndarray]:
    """Shell centres plus the surface, with their volumetric strains."""
    r = np.append(grid.r, grid.R_p)
    x = np.append(grid.c, grid.surface_concentration()) / grid.c_max
    return r, volumetric_strain(x, mech.strain)


def stress_profile(grid: ParticleGrid, mech: MechanicalParameters) -> StressProfile:
    r, dv = particle_nodes(grid, mech)
    return stress_components(r, dv, mech.E, mech.nu)


def radial_displacement(grid: ParticleGrid, mech: MechanicalParameters) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (with r = 0 prepended) and the displacement there."""
    r, dv = particle_nodes(grid, mech)
    u = displacement(r, dv, mech.nu)
    return np.insert(r, 0, 0.0), np.insert(u, 0, 0.0)


class SurfaceStress:
    """Precomputed surface hydrostatic stress for a fixed shell geometry."""

    def __init__(self, grid: ParticleGrid, mech: MechanicalParameters):
        r = np.append(grid.r, grid.R_p)
        w = np.zeros(r.size)
        w[0] = r[0] ** 3 / 3.0
        wa, wb = _segment_weights(r)
        w[:-1] += wa
        w[1:] += wb
        self._w = w / grid.R_p**3
        self._k = 2.0 * mech.E / (3.0 * (1.0 - mech.nu))
        self._table = mech.strain
        self._c_max = grid.c_max

    def __call__(self, c: np.ndarray, c_se: float) -> float:
        x = np.append(c, c_se) / self._c_max
        dv = np.interp(x, self._table.x, self._table.y)
        return self._k * (float(self._w @ dv) - dv[-1] / 3.0)


def surface_stress_signal(state: CellState, mech: MechanicalParameters) -> float:
    """Largest |sigma_h(R_p)| over the negative-electrode size classes (Pa)."""
    grids = state.electrode("negative")
    if not grids:
        raise ValueError("no negative-electrode particles")
    return max(abs(stress_profile(g, mech).surface_hydrostatic) for g in grids)
