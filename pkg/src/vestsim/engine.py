"""Closed-loop charging runs, charge-time summaries and sweeps."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cell import ConvergenceError, StepRejected
from .controller import ControllerGains, ControllerState, Sensitivity, cccv_step, cccvest_step
from .params import CellParameters
from .plant import Plant
from .signals import ConstraintLimits, constraint_signals, gate_matrix

log = logging.getLogger(__name__)

PROTOCOLS = ("cccv", "vest", "replay")
PHASE_CC, PHASE_PLATING, PHASE_STRESS, PHASE_THERMAL, PHASE_CV = range(5)
CV_BAND = 1e-3  # V below V_d that counts as constant-voltage operation
CV_SUSTAIN = 5.0  # s

# Tracking tolerances used to call a constraint violated.  The integral
# controller settles onto each limit with a small transient overshoot.
ETA_TOL = 1e-3  # V
SIGMA_TOL = 0.005  # relative
T_TOL = 0.1  # K


class SimulationError(RuntimeError):
    """Unrecoverable failure; ``diagnostic`` holds the last good state summary."""

    def __init__(self, message: str, diagnostic: dict | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


@dataclass(frozen=True)
class Scenario:
    params: CellParameters
    protocol: str = "vest"
    limits: ConstraintLimits = field(default_factory=ConstraintLimits)
    gains: ControllerGains = field(default_factory=ControllerGains)
    soc_initial: float = 0.0
    soc_target: float = 1.0
    dt: float = 0.1
    t_max: float = 4000.0
    am_ratio: float = 1.0
    cv_cutoff: float | None = None  # A; default C/20
    dt_min: float = 1e-4
    n_r: int = 30
    n_e: int = 20
    implicit_controller: bool = True
    current_profile: tuple | None = None  # (dt array, I array) for open-loop replay

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if not 0 <= self.soc_initial < self.soc_target <= 1:
            raise ValueError("need 0 <= soc_initial < soc_target <= 1")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not 0 < self.am_ratio <= 1:
            raise ValueError("am_ratio must lie in (0, 1]")
        if self.protocol == "replay" and self.current_profile is None:
            raise ValueError("replay protocol needs a current_profile")

    @property
    def cutoff(self) -> float:
        return self.params.one_c / 20.0 if self.cv_cutoff is None else self.cv_cutoff

    def plant_params(self) -> CellParameters:
        if self.am_ratio == 1.0:
            return self.params
        return self.params.scaled_active_material(self.am_ratio)


@dataclass
class SimResult:
    t: np.ndarray
    dt: np.ndarray
    I: np.ndarray
    V: np.ndarray
    soc: np.ndarray
    eta_pl: np.ndarray
    sigma: np.ndarray  # Pa
    T: np.ndarray  # K
    flags: np.ndarray  # (n, 3) plating / stress / thermal gates
    phase: np.ndarray
    events: dict
    termination: str
    limits: ConstraintLimits
    Q_nom: float

    def __len__(self):
        return self.t.size

    def charge_time(self, soc_lo: float, soc_hi: float) -> float | None:
        return charge_time(self, soc_lo, soc_hi)

    def summary(self) -> dict:
        lim = self.limits
        out = {
            "termination": self.termination,
            "duration_s": float(self.t[-1] + self.dt[-1]) if len(self) else 0.0,
            "charge_time_s": {
                "0-80": self.charge_time(0.0, 0.8),
                "0-100": self.charge_time(0.0, 1.0),
            },
            "events_s": dict(self.events),
            "eta_pl_V": {"min": float(self.eta_pl.min()), "max": float(self.eta_pl.max())},
            "sigma_MPa": {"min": float(self.sigma.min() / 1e6), "max": float(self.sigma.max() / 1e6)},
            "T_C": {"min": float(self.T.min() - 273.15), "max": float(self.T.max() - 273.15)},
            "V_V": {"min": float(self.V.min()), "max": float(self.V.max())},
            "soc_final": float(self.soc[-1]),
        }
        out["violations"] = {
            "plating": bool(self.eta_pl.min() < lim.eta_d - ETA_TOL),
            "stress": bool(self.sigma.max() > lim.sigma_d * (1.0 + SIGMA_TOL)),
            "thermal": bool(self.T.max() > lim.T_d + T_TOL),
        }
        return out


def _first(mask: np.ndarray, t: np.ndarray):
    idx = np.flatnonzero(mask)
    return float(t[idx[0]]) if idx.size else None


def _cv_event(t: np.ndarray, V: np.ndarray, V_d: float) -> float | None:
    """First time the voltage enters the CV band and stays there for CV_SUSTAIN."""
    inside = V >= V_d - CV_BAND
    n = t.size
    k = 0
    while k < n:
        if not inside[k]:
            k += 1
            continue
        start = k
        while k < n and inside[k]:
            k += 1
        end_t = t[k - 1]
        if end_t - t[start] >= CV_SUSTAIN or k == n:
            return float(t[start])
    return None


def phase_channel(flags: np.ndarray, cv: np.ndarray) -> np.ndarray:
    """Single-valued phase: the most recently activated of the active channels."""
    active = np.column_stack([flags, cv])
    n = active.shape[0]
    phase = np.zeros(n, dtype=int)
    last_on = np.full(4, -1)
    prev = np.zeros(4, dtype=bool)
    for k in range(n):
        row = active[k]
        rising = row & ~prev
        last_on[rising] = k
        prev = row
        if row.any():
            cand = np.where(row, last_on, -1)
            # ties go to the higher channel number
            best = np.flatnonzero(cand == cand.max())[-1]
            phase[k] = best + 1
    return phase


def run_charge(scenario: Scenario) -> SimResult:
    """Simulate one charge under the scenario's protocol."""
    sc = scenario
    lim = sc.limits
    plant = Plant(sc.plant_params(), n_r=sc.n_r, n_e=sc.n_e)
    state = plant.initial_state(sc.soc_initial)
    ctrl = ControllerState.initial(lim)
    gains = sc.gains
    if sc.protocol == "replay":
        prof_dt, prof_I = (np.asarray(a, dtype=float) for a in sc.current_profile)
    n_alloc = int(math.ceil(sc.t_max / sc.dt)) + 2 if sc.protocol != "replay" else prof_dt.size + 1
    cols = {k: np.empty(n_alloc) for k in ("t", "dt", "I", "V", "soc", "eta", "sigma", "T")}
    n = 0
    termination = "max_time"
    delta = 1e-3  # A, finite-difference step for output sensitivities
    cv_seen_since = None

    while True:
        if sc.protocol == "replay":
            if n >= prof_dt.size:
                termination = "profile_end"
                break
        elif state.t >= sc.t_max - 1e-9:
            termination = "max_time"
            break
        fz = plant.measure(state)
        if sc.protocol != "replay" and fz.soc >= sc.soc_target:
            termination = "target_soc"
            break
        dt = sc.dt if sc.protocol != "replay" else float(prof_dt[n])
        while True:
            try:
                if sc.protocol == "replay":
                    I = float(prof_I[n])
                    new_ctrl = ctrl
                else:
                    meas = plant.evaluate(fz, ctrl.I_app)
                    sens = None
                    if sc.implicit_controller:
                        probe = plant.evaluate(fz, ctrl.I_app + delta)
                        s0, T0 = plant.predict(state, meas, dt)
                        s1, T1 = plant.predict(state, probe, dt)
                        sens = Sensitivity(
                            (probe.V - meas.V) / delta,
                            (probe.eta_pl - meas.eta_pl) / delta,
                            (s1 - s0) / delta,
                            (T1 - T0) / delta,
                        )
                    if sc.protocol == "cccv":
                        new_ctrl, I = cccv_step(ctrl, meas.V, lim, gains, dt, sens)
                    else:
                        sig = constraint_signals(meas.eta_pl, meas.sigma, meas.T, meas.V, lim)
                        new_ctrl, I = cccvest_step(ctrl, sig, lim, gains, dt, sens)
                out = plant.evaluate(fz, I)
                new_state = plant.advance(state, out, dt)
                break
            except (StepRejected, ConvergenceError) as exc:
                if sc.protocol == "replay" or dt / 2 < sc.dt_min:
                    raise SimulationError(
                        f"step rejected at t={state.t:.3f} s with dt={dt:.3g} s: {exc}",
                        diagnostic=_diagnostic(plant, state, ctrl),
                    ) from exc
                log.debug("step rejected at t=%.3f (dt=%.3g): %s", state.t, dt, exc)
                dt /= 2
        if n >= n_alloc:
            for k in cols:
                cols[k] = np.concatenate([cols[k], np.empty(n_alloc)])
            n_alloc *= 2
        cols["t"][n] = state.t
        cols["dt"][n] = dt
        cols["I"][n] = I
        cols["V"][n] = out.V
        cols["soc"][n] = out.soc
        cols["eta"][n] = out.eta_pl
        cols["sigma"][n] = out.sigma
        cols["T"][n] = out.T
        n += 1
        ctrl = new_ctrl
        state = new_state
        if sc.protocol != "replay":
            in_cv = out.V >= lim.V_d - CV_BAND
            if in_cv:
                cv_seen_since = state.t if cv_seen_since is None else cv_seen_since
            else:
                cv_seen_since = None
            if cv_seen_since is not None and abs(I) < sc.cutoff:
                termination = "cv_cutoff"
                break

    if n == 0:
        raise SimulationError("no steps taken", diagnostic=_diagnostic(plant, state, ctrl))
    c = {k: v[:n].copy() for k, v in cols.items()}
    flags = gate_matrix(c["eta"], c["sigma"], c["T"], c["V"], lim)
    cv = c["V"] >= lim.V_d - CV_BAND
    events = {
        "t1": _first(flags[:, 0], c["t"]),
        "t2": _first(flags[:, 1], c["t"]),
        "t3": _first(flags[:, 2], c["t"]),
        "t4": _cv_event(c["t"], c["V"], lim.V_d),
    }
    return SimResult(
        t=c["t"],
        dt=c["dt"],
        I=c["I"],
        V=c["V"],
        soc=c["soc"],
        eta_pl=c["eta"],
        sigma=c["sigma"],
        T=c["T"],
        flags=flags,
        phase=phase_channel(flags, cv),
        events=events,
        termination=termination,
        limits=lim,
        Q_nom=sc.params.Q_nom,
    )


def _diagnostic(plant: Plant, state, ctrl) -> dict:
    neg = state.particles[0]
    return {
        "t": state.t,
        "T_K": state.T,
        "soc": plant.soc(state),
        "I_app": ctrl.I_app,
        "integrator": ctrl.integrator,
        "neg_c_surface": [g.surface_concentration() for g in neg],
        "c_e_min": float(state.electrolyte.c.min()),
    }


def charge_time(result: SimResult, soc_lo: float, soc_hi: float) -> float | None:
    """Seconds between the first crossings of ``soc_lo`` and ``soc_hi`` (None if not reached)."""
    t_lo = _crossing(result, soc_lo)
    t_hi = _crossing(result, soc_hi)
    if t_lo is None or t_hi is None:
        return None
    return t_hi - t_lo


def _crossing(result: SimResult, level: float) -> float | None:
    # samples carry the state at the start of each step; append the end state
    t = np.append(result.t, result.t[-1] + result.dt[-1])
    soc = np.append(result.soc, result.soc[-1] - result.I[-1] * result.dt[-1] / (result.Q_nom * 3600.0))
    if soc[0] >= level:
        return float(t[0])
    idx = np.flatnonzero(soc >= level)
    if idx.size == 0:
        return None
    k = idx[0]
    s0, s1 = soc[k - 1], soc[k]
    return float(t[k - 1] + (level - s0) / (s1 - s0) * (t[k] - t[k - 1]))


# --------------------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SensitivityEntry:
    margin: float
    ratio: float
    min_eta_pl: float
    closed_loop_min_eta_pl: float


def replay(base: Scenario, result: SimResult, am_ratio: float) -> SimResult:
    """Apply a recorded current open-loop to a plant with scaled negative active material."""
    sc = replace(base, protocol="replay", am_ratio=am_ratio, current_profile=(result.dt, result.I))
    return run_charge(sc)


def sensitivity_sweep(
    base: Scenario, ratios, margins, max_workers: int | None = None
) -> list[SensitivityEntry]:
    """Closed loop on the fresh plant per margin, then open-loop replay per ratio."""
    if not ratios or not margins:
        raise ValueError("ratios and margins must be non-empty")
    for r in ratios:
        if not 0 < r <= 1:
            raise ValueError(f"ratio {r} outside (0, 1]")

    def stage1(m):
        sc = replace(base, protocol="vest", am_ratio=1.0, limits=replace(base.limits, eta_d=m))
        return sc, run_charge(sc)

    def stage2(job):
        (sc, res), r = job
        return replay(sc, res, r)

    with ThreadPoolExecutor(max_workers=max_workers or 1) as pool:
        first = list(pool.map(stage1, margins))
        jobs = [(first[i], r) for i in range(len(margins)) for r in ratios]
        second = list(pool.map(stage2, jobs))
    out = []
    for k, ((sc, res), r) in enumerate(jobs):
        out.append(
            SensitivityEntry(
                margin=sc.limits.eta_d,
                ratio=r,
                min_eta_pl=float(second[k].eta_pl.min()),
                closed_loop_min_eta_pl=float(res.eta_pl.min()),
            )
        )
    return out


def oscillation_metric(result: SimResult, channel: int, window: float = 60.0, smooth: float = 10.0) -> float:
    """Peak-to-peak of the detrended applied current after a channel first activates.

    ``channel`` indexes the gate flags (0 plating, 1 stress, 2 thermal).  The
    trend is a centred moving average over ``smooth`` seconds.
    """
    t_on = _first(result.flags[:, channel], result.t)
    if t_on is None:
        return float("nan")
    sel = (result.t >= t_on) & (result.t <= t_on + window)
    I = result.I[sel]
    dt = float(np.median(result.dt[sel]))
    w = max(int(round(smooth / dt)), 1)
    if I.size <= w:
        return float(np.ptp(I))
    kernel = np.ones(w) / w
    trend = np.convolve(I, kernel, mode="valid")
    lo = (w - 1) // 2
    resid = I[lo : lo + trend.size] - trend
    return float(np.ptp(resid))


CHANNELS = {"plating": 0, "stress": 1, "thermal": 2}


def single_channel(base: Scenario, channel: str) -> Scenario:
    """Keep the voltage limit and one aging channel; switch the other two off."""
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {tuple(CHANNELS)}")
    lim = base.limits
    off = {
        "plating": {"eta_d": -math.inf},
        "stress": {"sigma_d": math.inf},
        "thermal": {"T_d": math.inf},
    }
    kw = {}
    for name, change in off.items():
        if name != channel:
            kw.update(change)
    return replace(base, protocol="vest", limits=replace(lim, **kw))


def gain_sweep(base: Scenario, gain: str, values, max_workers: int | None = None) -> list[SimResult]:
    """One run per value of ``gain`` (a ControllerGains field name, SI units)."""
    if not values:
        raise ValueError("empty sweep")

    def run(v):
        return run_charge(replace(base, gains=replace(base.gains, **{gain: v})))

    with ThreadPoolExecutor(max_workers=max_workers or 1) as pool:
        return list(pool.map(run, values))
