"""Command-line front end: simulate, compare, sweep-gains, sensitivity.

Everything is simulated before anything is written, and files are moved into
place only once every requested run has finished, so a failed invocation
leaves no partial outputs behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, load_config
from .engine import (
    CHANNELS,
    Scenario,
    SimResult,
    SimulationError,
    gain_sweep,
    oscillation_metric,
    run_charge,
    sensitivity_sweep,
    single_channel,
)
from .params import ConfigError

log = logging.getLogger("vestsim")

EXIT_OK = 0
EXIT_OUTPUT = 1
EXIT_CONFIG = 2
EXIT_SIMULATION = 3

TRAJECTORY_COLUMNS = ("t_s", "I_A", "V_V", "SOC", "eta_pl_V", "sigma_MPa", "T_C", "phase")
MAX_RATE_HZ = 10.0

# gains given per MPa on the command line, stored per Pa
_PER_MPA = {"K_Isigma", "K_Psigma"}
_GAIN_CHANNEL = {"K_Ieta": "plating", "K_Isigma": "stress", "K_Psigma": "stress", "K_IT": "thermal", "K_PT": "thermal"}
GAIN_NAMES = ("K_IV", "K_Ieta", "K_Isigma", "K_Psigma", "K_IT", "K_PT", "K_aw")


class OutputError(RuntimeError):
    pass


# --------------------------------------------------------------------------- formatting


def fmt(x: float) -> str:
    """Shortest fixed-decimal text that parses back to the same double."""
    if not math.isfinite(x):
        raise ValueError(f"cannot write non-finite value {x!r}")
    return np.format_float_positional(x, unique=True, trim="-")


def downsample(t: np.ndarray, max_rate: float = MAX_RATE_HZ) -> np.ndarray:
    """Indices of samples so that consecutive kept samples are >= 1/max_rate apart."""
    spacing = 1.0 / max_rate
    keep = []
    last = -math.inf
    for k, tk in enumerate(t):
        if tk - last >= spacing - 1e-9:
            keep.append(k)
            last = tk
    if keep and keep[-1] != t.size - 1:
        keep.append(t.size - 1)
    return np.asarray(keep, dtype=int)


def trajectory_csv(result: SimResult) -> str:
    idx = downsample(result.t)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for k in idx:
        w.writerow(
            [
                fmt(result.t[k]),
                fmt(result.I[k]),
                fmt(result.V[k]),
                fmt(result.soc[k]),
                fmt(result.eta_pl[k]),
                fmt(result.sigma[k] / 1e6),
                fmt(result.T[k] - 273.15),
                str(int(result.phase[k])),
            ]
        )
    return buf.getvalue()


def read_trajectory(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a trajectory file back into column arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if tuple(header) != TRAJECTORY_COLUMNS:
        raise ValueError(f"unexpected header {header}")
    cols = {}
    for j, name in enumerate(header):
        values = [r[j] for r in body]
        cols[name] = np.array([int(v) for v in values]) if name == "phase" else np.array([float(v) for v in values])
    return cols


def _finite_or_none(x):
    return x if x is None or math.isfinite(x) else None


def limits_report(limits) -> dict:
    return {
        "V_max_V": limits.V_d,
        "eta_pl_min_V": _finite_or_none(limits.eta_d),
        "sigma_max_MPa": _finite_or_none(limits.sigma_d / 1e6),
        "T_max_C": _finite_or_none(limits.T_d - 273.15),
        "I_max_A": limits.I_max,
    }


def summary_report(result: SimResult, scenario: Scenario) -> dict:
    out = {"protocol": scenario.protocol, "dt_s": scenario.dt, "limits": limits_report(result.limits)}
    out.update(result.summary())
    return out


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


# --------------------------------------------------------------------------- output staging


def check_writable(out: Path) -> None:
    """The output directory, or its nearest existing parent, must be writable."""
    p = out.resolve()
    while not p.exists():
        p = p.parent
    if not p.is_dir():
        raise OutputError(f"{p}: not a directory")
    if not os.access(p, os.W_OK | os.X_OK):
        raise OutputError(f"{p}: not writable")


def commit(out: Path, files: dict[str, str]) -> None:
    """Write ``{relative path: text}`` under ``out`` via temp files and atomic renames."""
    staged = []
    try:
        for rel, text in files.items():
            dest = out / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=".tmp-", suffix=dest.suffix)
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, dest))
    except OSError as exc:
        for tmp, _ in staged:
            Path(tmp).unlink(missing_ok=True)
        raise OutputError(f"cannot write outputs: {exc}") from None
    for tmp, dest in staged:
        os.replace(tmp, dest)


# --------------------------------------------------------------------------- scenario assembly


def _positive(name):
    def parse(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"{name} must be > 0, got {text!r}")
        return v

    return parse


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def build_scenario(cfg: Config, args, protocol: str | None = None) -> Scenario:
    sim = cfg.simulation
    limits = cfg.limits
    if args.vmax is not None:
        limits = replace(limits, V_d=args.vmax)
    if args.crate is not None:
        limits = replace(limits, I_max=-args.crate * cfg.params.one_c)
    cutoff = sim.get("cv_cutoff_c_rate")
    try:
        return _scenario(cfg, args, protocol, sim, limits, cutoff)
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: [simulation] {exc}") from None


def _scenario(cfg, args, protocol, sim, limits, cutoff) -> Scenario:
    return Scenario(
        params=cfg.params,
        protocol=protocol or args.protocol or sim.get("protocol", "vest"),
        limits=limits,
        gains=cfg.gains,
        soc_initial=sim.get("soc_initial", 0.0),
        soc_target=sim.get("soc_target", 1.0),
        dt=args.dt if args.dt is not None else sim.get("dt", 0.1),
        t_max=sim.get("t_max", 4000.0),
        cv_cutoff=None if cutoff is None else cutoff * cfg.params.one_c,
        n_r=sim.get("n_r", 30),
        n_e=sim.get("n_e", 20),
    )


def _run(scenario: Scenario) -> SimResult:
    log.info("running %s (dt=%g s)", scenario.protocol, scenario.dt)
    return run_charge(scenario)


def _run_files(result: SimResult, scenario: Scenario, prefix: str = "") -> dict[str, str]:
    return {
        f"{prefix}trajectory.csv": trajectory_csv(result),
        f"{prefix}summary.json": dumps(summary_report(result, scenario)),
    }


# --------------------------------------------------------------------------- commands


def cmd_simulate(cfg: Config, args) -> dict[str, str]:
    sc = build_scenario(cfg, args)
    res = _run(sc)
    s = res.summary()
    print(f"{sc.protocol}: {res.termination} after {s['duration_s']:.1f} s, 0-80% {_t(s['charge_time_s']['0-80'])}")
    return _run_files(res, sc)


def _t(x) -> str:
    return "n/a" if x is None else f"{x:.1f} s"


def cmd_compare(cfg: Config, args) -> dict[str, str]:
    protocols = args.protocols
    files = {}
    rows = []
    seen = {}
    for p in protocols:
        seen[p] = seen.get(p, 0) + 1
        tag = p if seen[p] == 1 else f"{p}_{seen[p]}"
        sc = build_scenario(cfg, args, protocol=p)
        res = _run(sc)
        files.update(_run_files(res, sc, prefix=f"{tag}/"))
        s = res.summary()
        rows.append(
            {
                "run": tag,
                "protocol": p,
                "charge_time_s": s["charge_time_s"],
                "violations": s["violations"],
                "eta_pl_min_V": s["eta_pl_V"]["min"],
                "sigma_max_MPa": s["sigma_MPa"]["max"],
                "T_max_C": s["T_C"]["max"],
            }
        )
    report = {"runs": rows}
    if len(rows) >= 2:
        a, b = rows[0]["charge_time_s"], rows[1]["charge_time_s"]
        report["delta_s"] = {
            k: (None if a[k] is None or b[k] is None else b[k] - a[k]) for k in ("0-80", "0-100")
        }
    files["compare.json"] = dumps(report)
    print(f"{'run':<10}{'0-80%':>10}{'0-100%':>10}  violations")
    for r in rows:
        bad = ",".join(k for k, v in r["violations"].items() if v) or "none"
        ct = r["charge_time_s"]
        print(f"{r['run']:<10}{_t(ct['0-80']):>10}{_t(ct['0-100']):>10}  {bad}")
    if "delta_s" in report:
        d = report["delta_s"]
        print(f"{'delta':<10}{_t(d['0-80']):>10}{_t(d['0-100']):>10}")
    return files


def cmd_sweep_gains(cfg: Config, args) -> dict[str, str]:
    gain = args.gain
    channel = args.channel or _GAIN_CHANNEL.get(gain)
    if channel is None:
        raise ConfigError(f"--channel is required for gain {gain}")
    base = build_scenario(cfg, args, protocol="vest")
    if args.isolate:
        base = single_channel(base, channel)
    scale = 1e-6 if gain in _PER_MPA else 1.0
    values = [v * scale for v in args.values]
    results = gain_sweep(base, gain, values, max_workers=args.workers)
    files = {}
    table = []
    for v_table, res in zip(args.values, results):
        sc = replace(base, gains=replace(base.gains, **{gain: v_table * scale}))
        tag = f"{gain}={fmt(v_table)}/"
        files.update(_run_files(res, sc, prefix=tag))
        m = oscillation_metric(res, CHANNELS[channel])
        table.append({"value": v_table, "oscillation_A": None if math.isnan(m) else m})
        print(f"{gain}={fmt(v_table):<10} oscillation {'n/a' if math.isnan(m) else f'{m:.4f} A'}")
    files["oscillation.json"] = dumps({"gain": gain, "channel": channel, "isolated": args.isolate, "rows": table})
    return files


def cmd_sensitivity(cfg: Config, args) -> dict[str, str]:
    base = build_scenario(cfg, args, protocol="vest")
    entries = sensitivity_sweep(base, args.ratios, args.margins, max_workers=args.workers)
    rows = [
        {
            "margin_V": e.margin,
            "ratio": e.ratio,
            "min_eta_pl_V": e.min_eta_pl,
            "closed_loop_min_eta_pl_V": e.closed_loop_min_eta_pl,
            "plating": e.min_eta_pl < 0,
        }
        for e in entries
    ]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ratio"] + [f"margin_{fmt(m)}_V" for m in args.margins])
    for r in args.ratios:
        w.writerow([fmt(r)] + [fmt(e.min_eta_pl) for m in args.margins for e in entries if e.margin == m and e.ratio == r])
    print(f"{'ratio':<8}" + "".join(f"{'margin ' + fmt(m):>16}" for m in args.margins))
    for r in args.ratios:
        cells = []
        for m in args.margins:
            e = next(e for e in entries if e.margin == m and e.ratio == r)
            cells.append(f"{e.min_eta_pl * 1e3:+.2f} mV{'*' if e.min_eta_pl < 0 else ' '}")
        print(f"{fmt(r):<8}" + "".join(f"{c:>16}" for c in cells))
    print("* min plating potential below zero")
    return {"sensitivity.csv": buf.getvalue(), "sensitivity.json": dumps({"rows": rows})}


COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep-gains": cmd_sweep_gains,
    "sensitivity": cmd_sensitivity,
}


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="parameter file (TOML); default: packaged cell")
    common.add_argument("--crate", type=_positive("--crate"), help="maximum charge current as a C-rate")
    common.add_argument("--vmax", type=_positive("--vmax"), help="maximum voltage [V]")
    common.add_argument("--dt", type=_positive("--dt"), help="time step [s]")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    common.add_argument("--workers", type=int, default=1, help="parallel runs for sweeps (default: 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vestsim", description="Constraint-aware fast-charging simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run one charge")
    p.add_argument("--protocol", choices=("cccv", "vest"))

    p = sub.add_parser("compare", parents=[common], help="run protocols side by side")
    p.add_argument("--protocols", nargs=2, choices=("cccv", "vest"), default=["cccv", "vest"])
    p.set_defaults(protocol=None)

    p = sub.add_parser("sweep-gains", parents=[common], help="sweep one controller gain")
    p.add_argument("--gain", choices=GAIN_NAMES, required=True, help="gain name; stress gains in A/MPa units")
    p.add_argument("--values", type=_float_list, required=True, help="comma-separated values")
    p.add_argument("--channel", choices=tuple(CHANNELS), help="channel for the oscillation metric")
    p.add_argument(
        "--isolate", action="store_true", help="keep only the voltage limit and the swept channel's limit"
    )
    p.set_defaults(protocol=None)

    p = sub.add_parser("sensitivity", parents=[common], help="plating margin vs. active-material loss")
    p.add_argument("--ratios", type=_float_list, default=[1.0, 0.95, 0.9])
    p.add_argument("--margins", type=_float_list, default=[0.0, 0.02], help="minimum plating potential [V]")
    p.set_defaults(protocol=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    if args.command == "sensitivity" and any(not 0 < r <= 1 for r in args.ratios):
        parser.error("--ratios must lie in (0, 1]")
    try:
        check_writable(args.out)
        cfg = load_config(args.config)
        files = COMMANDS[args.command](cfg, args)
        commit(args.out, files)
    except ConfigError as exc:
        print(f"vestsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"vestsim: simulation failed: {exc}", file=sys.stderr)
        for k, v in exc.diagnostic.items():
            print(f"  {k}: {v}", file=sys.stderr)
        return EXIT_SIMULATION
    except OutputError as exc:
        print(f"vestsim: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    log.info("wrote %d files under %s", len(files), args.out)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
