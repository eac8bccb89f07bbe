"""Parameter containers for the reduced-order cell and its particle mechanics.

All quantities are SI.  Currents handed to the model are in amperes for the
whole cell; ``CellParameters.area`` maps them to current density.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .constants import F


class ConfigError(ValueError):
    """Raised for invalid or inconsistent parameter data."""


@dataclass(frozen=True)
class Table:
    """Piecewise-linear (abscissa, value) table, clamped at both ends."""

    x: np.ndarray
    y: np.ndarray
    name: str = "table"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ConfigError(f"{self.name}: abscissa and values must be 1-D and equal length")
        if x.size < 2:
            raise ConfigError(f"{self.name}: at least 2 points required, got {x.size}")
        if not np.all(np.diff(x) > 0):
            raise ConfigError(f"{self.name}: abscissa must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ConfigError(f"{self.name}: non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __call__(self, v):
        return np.interp(v, self.x, self.y)

    @property
    def slope(self) -> np.ndarray:
        return np.diff(self.y) / np.diff(self.x)


@dataclass(frozen=True)
class ElectrodeParameters:
    thickness: float
    eps_s: float
    eps_e: float
    radii: tuple[float, ...]
    fractions: tuple[float, ...]
    diffusivities: tuple[float, ...]
    c_max: tuple[float, ...]
    k0: float
    ocp: Table
    dUdT: Table
    sto_0: float  # stoichiometry at 0 % SOC
    asr_f: float = 0.0

    @property
    def n_sizes(self) -> int:
        return len(self.radii)

    def specific_areas(self) -> np.ndarray:
        """a_i = 3 zeta_i eps_s / R_i (1/m)."""
        return 3.0 * np.asarray(self.fractions) * self.eps_s / np.asarray(self.radii)

    def validate(self, tag: str):
        n = self.n_sizes
        for name in ("fractions", "diffusivities", "c_max"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"{tag}.{name}: expected {n} entries (one per size class)")
        if n < 1:
            raise ConfigError(f"{tag}: at least one particle size class required")
        positive = {
            "thickness": [self.thickness],
            "radii": self.radii,
            "diffusivities": self.diffusivities,
            "c_max": self.c_max,
            "k0": [self.k0],
        }
        for name, vals in positive.items():
            if any(not (v > 0) for v in vals):
                raise ConfigError(f"{tag}.{name}: must be strictly positive")
        for name, vals in (("eps_s", [self.eps_s]), ("eps_e", [self.eps_e]), ("fractions", self.fractions)):
            if any(not (0 < v <= 1) for v in vals):
                raise ConfigError(f"{tag}.{name}: must lie in (0, 1]")
        if abs(sum(self.fractions) - 1.0) > 1e-12:
            raise ConfigError(f"{tag}.fractions: must sum to 1 (got {sum(self.fractions)!r})")
        if self.asr_f < 0:
            raise ConfigError(f"{tag}.asr_f: must be >= 0")
        if not 0 <= self.sto_0 <= 1:
            raise ConfigError(f"{tag}.sto_0: must lie in [0, 1]")
        for tab in (self.ocp, self.dUdT):
            if tab.x[0] < 0 or tab.x[-1] > 1:
                raise ConfigError(f"{tag}.{tab.name}: stoichiometry axis must stay within [0, 1]")


@dataclass(frozen=True)
class MechanicalParameters:
    E: float
    nu: float
    strain: Table  # volumetric strain vs stoichiometry

    def __post_init__(self):
        if not self.E > 0:
            raise ConfigError("mechanics.E: must be > 0")
        if not 0 <= self.nu < 0.5:
            raise ConfigError("mechanics.nu: must lie in [0, 0.5)")
        if not np.all(np.diff(self.strain.y) >= 0) and not np.all(np.diff(self.strain.y) <= 0):
            raise ConfigError("mechanics.strain: table must be monotone")


@dataclass(frozen=True)
class CellParameters:
    negative: ElectrodeParameters
    positive: ElectrodeParameters
    l_sep: float
    eps_e_sep: float
    c_e_init: float
    D_e: float
    kappa: float
    t_plus: float
    tf: float
    brug: float
    thermal_mass: float  # rho C_c l_c, J/(m^2 K)
    h: float  # W/(m^2 K), per unit electrode area
    T_a: float
    Q_nom: float  # Ah
    area: float  # total electrode area, m^2
    mechanics: MechanicalParameters
    alpha_a: float = 0.5
    alpha_c: float = 0.5
    i0_plating: float = 1e-3  # A/m^2, diagnostic only
    alpha_plating: float = 0.5
    T_init: float | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.negative.validate("cell.negative")
        self.positive.validate("cell.positive")
        for name in ("l_sep", "c_e_init", "D_e", "kappa", "thermal_mass", "T_a", "Q_nom", "area"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be strictly positive")
        if not 0 < self.eps_e_sep <= 1:
            raise ConfigError("eps_e_sep: must lie in (0, 1]")
        if self.h < 0:
            raise ConfigError("h: must be >= 0")
        if not (0 < self.alpha_a < 1 and 0 < self.alpha_c < 1):
            raise ConfigError("charge-transfer coefficients must lie in (0, 1)")
        if self.t_plus >= 1:
            raise ConfigError("t_plus: must be < 1")

    @property
    def l_cell(self) -> float:
        return self.negative.thickness + self.l_sep + self.positive.thickness

    @property
    def one_c(self) -> float:
        """1C current in amperes."""
        return self.Q_nom

    def sto_window(self, which: str) -> float:
        """Stoichiometry swing of one electrode per nominal capacity."""
        el = self.negative if which == "negative" else self.positive
        c_max = float(np.dot(el.fractions, el.c_max))
        return self.Q_nom * 3600.0 / (F * el.eps_s * el.thickness * self.area * c_max)

    def scaled_active_material(self, ratio: float) -> "CellParameters":
        """Copy with the negative active-material fraction scaled by ``ratio``."""
        if not 0 < ratio <= 1:
            raise ConfigError("active-material ratio must lie in (0, 1]")
        return replace(self, negative=replace(self.negative, eps_s=self.negative.eps_s * ratio))
