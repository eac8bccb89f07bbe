"""TOML parameter files.

Sections: ``[cell]`` (with ``[cell.negative]`` and ``[cell.positive]``),
``[mechanics]``, ``[thermal]``, ``[gains]``, ``[limits]``, ``[tables]`` and
``[simulation]``.  Files use the units of the trajectory output where that is
natural (degrees C, MPa, C-rate); everything is converted to SI on load.

Tables are referenced by name from the electrode and mechanics sections.  A
table entry is either ``file = "name.csv"`` (resolved next to the config
file, then in the packaged data directory) or inline ``x = [...]`` and
``y = [...]`` arrays.
"""

from __future__ import annotations

import csv
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .constants import T_ZERO_C
from .controller import ControllerGains
from .params import CellParameters, ConfigError, ElectrodeParameters, MechanicalParameters, Table
from .signals import ConstraintLimits

DEFAULT_CONFIG = "default.toml"

_ELECTRODE_KEYS = {
    "thickness": float,
    "eps_s": float,
    "eps_e": float,
    "radii": list,
    "fractions": list,
    "diffusivities": list,
    "c_max": list,
    "k0": float,
    "sto_0": float,
    "asr_f": float,
    "ocp": str,
    "dUdT": str,
}
_CELL_KEYS = {
    "area": float,
    "Q_nom": float,
    "l_sep": float,
    "eps_e_sep": float,
    "c_e_init": float,
    "D_e": float,
    "kappa": float,
    "t_plus": float,
    "tf": float,
    "brug": float,
    "alpha_a": float,
    "alpha_c": float,
    "i0_plating": float,
    "negative": dict,
    "positive": dict,
}
_MECH_KEYS = {"E_GPa": float, "nu": float, "strain": str}
_THERMAL_KEYS = {"thermal_mass": float, "h": float, "T_ambient_C": float, "T_init_C": float}
_GAIN_KEYS = {
    "K_IV": float,
    "K_Ieta": float,
    "K_Isigma": float,
    "K_Psigma": float,
    "K_IT": float,
    "K_PT": float,
    "K_aw": float,
}
_LIMIT_KEYS = {"V_max": float, "eta_pl_min": float, "sigma_max_MPa": float, "T_max_C": float, "c_rate": float}
_SIM_KEYS = {
    "protocol": str,
    "dt": float,
    "t_max": float,
    "soc_initial": float,
    "soc_target": float,
    "cv_cutoff_c_rate": float,
    "n_r": int,
    "n_e": int,
}
_REQUIRED = {
    "cell": ("area", "Q_nom", "l_sep", "eps_e_sep", "c_e_init", "D_e", "kappa", "t_plus", "negative", "positive"),
    "electrode": ("thickness", "eps_s", "eps_e", "radii", "diffusivities", "c_max", "k0", "sto_0", "ocp", "dUdT"),
    "mechanics": ("E_GPa", "nu", "strain"),
    "thermal": ("thermal_mass", "h", "T_ambient_C"),
}


@dataclass(frozen=True)
class Config:
    params: CellParameters
    gains: ControllerGains
    limits: ConstraintLimits
    simulation: dict = field(default_factory=dict)
    source: str = "<memory>"


class _Locator:
    """Maps dotted keys back to line numbers for diagnostics."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines = {}
        section = ""
        for n, line in enumerate(text.splitlines(), 1):
            s = line.split("#", 1)[0].strip()
            m = re.match(r"^\[+\s*([^\]]+?)\s*\]+$", s)
            if m:
                section = m.group(1)
                self.lines.setdefault(section, n)
                continue
            m = re.match(r"^([A-Za-z0-9_\-\"']+)\s*=", s)
            if m:
                key = m.group(1).strip("\"'")
                self.lines.setdefault(f"{section}.{key}" if section else key, n)

    def error(self, key: str, msg: str) -> ConfigError:
        line = self.lines.get(key)
        if line is None:
            parent = key.rsplit(".", 1)[0] if "." in key else key
            line = self.lines.get(parent)
        where = f"{self.source}:{line}" if line else self.source
        err = ConfigError(f"{where}: [{key}] {msg}")
        err.located = True
        return err

    def relocate(self, exc: ConfigError, key_for) -> ConfigError:
        """Attach file and line to a ``"field: message"`` error from the parameter classes."""
        if getattr(exc, "located", False):
            return exc
        field_name, sep, msg = str(exc).partition(": ")
        if not sep:
            field_name, msg = "", str(exc)
        return self.error(key_for(field_name), msg)


def _check(section: dict, schema: dict, prefix: str, loc: _Locator, required=()):
    if not isinstance(section, dict):
        raise loc.error(prefix, "expected a table")
    for key, value in section.items():
        if key not in schema:
            raise loc.error(f"{prefix}.{key}", "unknown field")
        kind = schema[key]
        if kind is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        elif kind is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif kind is list:
            ok = isinstance(value, list) and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
            )
        else:
            ok = isinstance(value, kind)
        if not ok:
            raise loc.error(f"{prefix}.{key}", f"expected {kind.__name__}, got {type(value).__name__}")
    for key in required:
        if key not in section:
            raise loc.error(f"{prefix}.{key}", "missing required field")


def _read_csv(path: Path, name: str) -> Table:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"table {name!r}: cannot read {path}: {exc.strerror}") from exc
    data = []
    for n, row in enumerate(rows, 1):
        if not row or row[0].startswith("#"):
            continue
        try:
            data.append((float(row[0]), float(row[1])))
        except (ValueError, IndexError):
            if n == 1:
                continue  # header
            raise ConfigError(f"{path}:{n}: expected two numeric columns") from None
    if not data:
        raise ConfigError(f"{path}: empty table")
    arr = np.array(data)
    return Table(arr[:, 0], arr[:, 1], name)


def _data_path(filename: str, base: Path | None) -> Path:
    if base is not None and (base / filename).exists():
        return base / filename
    packaged = resources.files("vestsim") / "data" / filename
    with resources.as_file(packaged) as p:
        return Path(p)


def _tables(spec: dict, loc: _Locator, base: Path | None) -> dict[str, Table]:
    out = {}
    for name, entry in spec.items():
        key = f"tables.{name}"
        if not isinstance(entry, dict):
            raise loc.error(key, "table entry must be a sub-table")
        extra = set(entry) - {"file", "x", "y"}
        if extra:
            raise loc.error(f"{key}.{sorted(extra)[0]}", "unknown field")
        if "file" in entry:
            if "x" in entry or "y" in entry:
                raise loc.error(key, "give either file or x/y, not both")
            if not isinstance(entry["file"], str):
                raise loc.error(f"{key}.file", "expected str")
            try:
                out[name] = _read_csv(_data_path(entry["file"], base), name)
            except ConfigError as exc:
                raise loc.error(f"{key}.file", str(exc)) from None
        else:
            if "x" not in entry or "y" not in entry:
                raise loc.error(key, "inline tables need both x and y")
            try:
                out[name] = Table(np.array(entry["x"], dtype=float), np.array(entry["y"], dtype=float), name)
            except (ConfigError, ValueError, TypeError) as exc:
                raise loc.error(key, str(exc)) from None
    return out


def _lookup(tables: dict, ref: str, key: str, loc: _Locator) -> Table:
    if ref not in tables:
        raise loc.error(key, f"unknown table {ref!r}")
    return tables[ref]


def _electrode(d: dict, name: str, tables: dict, loc: _Locator) -> ElectrodeParameters:
    prefix = f"cell.{name}"
    _check(d, _ELECTRODE_KEYS, prefix, loc, _REQUIRED["electrode"])
    n = len(d["radii"])
    fractions = d.get("fractions", [1.0] if n == 1 else None)
    if fractions is None:
        raise loc.error(f"{prefix}.fractions", "required with several size classes")
    try:
        el = ElectrodeParameters(
            thickness=float(d["thickness"]),
            eps_s=float(d["eps_s"]),
            eps_e=float(d["eps_e"]),
            radii=tuple(float(v) for v in d["radii"]),
            fractions=tuple(float(v) for v in fractions),
            diffusivities=tuple(float(v) for v in d["diffusivities"]),
            c_max=tuple(float(v) for v in d["c_max"]),
            k0=float(d["k0"]),
            ocp=_lookup(tables, d["ocp"], f"{prefix}.ocp", loc),
            dUdT=_lookup(tables, d["dUdT"], f"{prefix}.dUdT", loc),
            sto_0=float(d["sto_0"]),
            asr_f=float(d.get("asr_f", 0.0)),
        )
        el.validate(prefix)
    except ConfigError as exc:
        raise loc.relocate(exc, lambda f: f if f.startswith("cell") else prefix) from None
    return el


def parse_config(text: str, source: str = "<string>", base: Path | None = None) -> Config:
    """Parse TOML text into validated parameter objects."""
    loc = _Locator(text, source)
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    known = {"cell", "mechanics", "thermal", "gains", "limits", "tables", "simulation"}
    for key in doc:
        if key not in known:
            raise loc.error(key, "unknown section")
    for sec in ("cell", "mechanics", "thermal", "tables"):
        if sec not in doc:
            raise ConfigError(f"{source}: missing section [{sec}]")
    tables = _tables(doc["tables"], loc, base)
    cell = doc["cell"]
    _check(cell, _CELL_KEYS, "cell", loc, _REQUIRED["cell"])
    neg = _electrode(cell["negative"], "negative", tables, loc)
    pos = _electrode(cell["positive"], "positive", tables, loc)

    mech = doc["mechanics"]
    _check(mech, _MECH_KEYS, "mechanics", loc, _REQUIRED["mechanics"])
    try:
        mechanics = MechanicalParameters(
            E=mech["E_GPa"] * 1e9, nu=float(mech["nu"]), strain=_lookup(tables, mech["strain"], "mechanics.strain", loc)
        )
    except ConfigError as exc:
        raise loc.relocate(exc, lambda f: f or "mechanics") from None

    th = doc["thermal"]
    _check(th, _THERMAL_KEYS, "thermal", loc, _REQUIRED["thermal"])
    T_init = th.get("T_init_C")
    try:
        params = CellParameters(
            negative=neg,
            positive=pos,
            l_sep=float(cell["l_sep"]),
            eps_e_sep=float(cell["eps_e_sep"]),
            c_e_init=float(cell["c_e_init"]),
            D_e=float(cell["D_e"]),
            kappa=float(cell["kappa"]),
            t_plus=float(cell["t_plus"]),
            tf=float(cell.get("tf", 1.0)),
            brug=float(cell.get("brug", 1.5)),
            thermal_mass=float(th["thermal_mass"]),
            h=float(th["h"]),
            T_a=th["T_ambient_C"] + T_ZERO_C,
            Q_nom=float(cell["Q_nom"]),
            area=float(cell["area"]),
            mechanics=mechanics,
            alpha_a=float(cell.get("alpha_a", 0.5)),
            alpha_c=float(cell.get("alpha_c", 0.5)),
            i0_plating=float(cell.get("i0_plating", 1e-3)),
            T_init=None if T_init is None else T_init + T_ZERO_C,
        )
    except ConfigError as exc:

        def key(name):
            if name == "T_a":
                return "thermal.T_ambient_C"
            return f"{'thermal' if name in ('thermal_mass', 'h') else 'cell'}.{name}" if name else "cell"

        raise loc.relocate(exc, key) from None

    gains_d = doc.get("gains", {})
    _check(gains_d, _GAIN_KEYS, "gains", loc)
    try:
        gains = ControllerGains.from_table_units(
            **{
                {"K_Isigma": "K_Isigma_MPa", "K_Psigma": "K_Psigma_MPa"}.get(k, k): float(v)
                for k, v in gains_d.items()
            }
        )
    except ValueError as exc:
        raise loc.error("gains", str(exc)) from None

    lim = doc.get("limits", {})
    _check(lim, _LIMIT_KEYS, "limits", loc)
    limits = build_limits(params, loc=loc, **lim)

    sim = doc.get("simulation", {})
    _check(sim, _SIM_KEYS, "simulation", loc)
    if "protocol" in sim and sim["protocol"] not in ("cccv", "vest"):
        raise loc.error("simulation.protocol", "must be 'cccv' or 'vest'")
    for k in ("dt", "t_max"):
        if k in sim and not sim[k] > 0:
            raise loc.error(f"simulation.{k}", "must be > 0")
    return Config(params=params, gains=gains, limits=limits, simulation=dict(sim), source=source)


def build_limits(
    params: CellParameters,
    V_max: float = 4.2,
    eta_pl_min: float = 0.0,
    sigma_max_MPa: float = 92.0,
    T_max_C: float = 40.0,
    c_rate: float = 8.0,
    loc: _Locator | None = None,
) -> ConstraintLimits:
    """Limits from file units; ``c_rate`` sets the (signed) current ceiling."""
    if not c_rate > 0:
        if loc is not None:
            raise loc.error("limits.c_rate", "must be > 0")
        raise ConfigError("c_rate must be > 0")
    try:
        return ConstraintLimits(
            V_d=float(V_max),
            eta_d=float(eta_pl_min),
            sigma_d=float(sigma_max_MPa) * 1e6,
            T_d=float(T_max_C) + T_ZERO_C,
            I_max=-float(c_rate) * params.one_c,
        )
    except ValueError as exc:
        if loc is not None:
            raise loc.error("limits", str(exc)) from None
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None = None) -> Config:
    """Load a parameter file; ``None`` gives the packaged default set."""
    if path is None:
        with resources.as_file(resources.files("vestsim") / "data" / DEFAULT_CONFIG) as p:
            return parse_config(Path(p).read_text(), source=DEFAULT_CONFIG, base=Path(p).parent)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read parameter file ({exc.strerror})") from None
    return parse_config(text, source=str(path), base=path.parent)


def default_config() -> Config:
    return load_config(None)
