"""CC-CV and constraint-gated CC-CV-eta-sigma-T charging controllers.

Both are a saturated integrator with anti-windup in discrete time.  The
integrand is the weighted sum of the voltage error, the gated aging errors
and the anti-windup bleed; proportional terms for stress and temperature are
added to the integrator output before saturation.  Charging current is
negative, so I_app = max(I, I_max).

When ``sens`` (the derivatives of V and eta_pl with respect to the applied
current at the present state) is supplied, the integrand is linearised in the
new current and the update is taken implicitly.  Without it the update is
plain forward Euler.
"""

from __future__ import annotations

from dataclasses import dataclass

from .signals import ConstraintLimits, ConstraintSignals

MPA = 1e6


@dataclass(frozen=True)
class ControllerGains:
    """SI gains.  Use :meth:`from_table_units` for A/MPa based values."""

    K_IV: float = 50.0  # A/(V s)
    K_Ieta: float = 5e4  # A/(V s)
    K_Isigma: float = 200.0 / MPA  # A/(Pa s)
    K_Psigma: float = 1.0 / MPA  # A/Pa
    K_IT: float = 50.0  # A/(K s)
    K_PT: float = 500.0  # A/K
    K_aw: float = 10.0  # 1/s

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value >= 0:
                raise ValueError(f"gain {name} must be >= 0, got {value!r}")

    @classmethod
    def from_table_units(
        cls,
        K_IV=50.0,
        K_Ieta=5e4,
        K_Isigma_MPa=200.0,
        K_Psigma_MPa=1.0,
        K_IT=50.0,
        K_PT=500.0,
        K_aw=10.0,
    ) -> "ControllerGains":
        return cls(K_IV, K_Ieta, K_Isigma_MPa / MPA, K_Psigma_MPa / MPA, K_IT, K_PT, K_aw)

    def voltage_only(self) -> "ControllerGains":
        return ControllerGains(self.K_IV, 0.0, 0.0, 0.0, 0.0, 0.0, self.K_aw)


@dataclass(frozen=True)
class Sensitivity:
    """Derivatives of the measured channels with respect to the applied current (per A).

    ``dV`` and ``deta`` are instantaneous; ``dsigma`` and ``dT`` refer to the
    values at the end of the step the current is applied over.
    """

    dV: float = 0.0
    deta: float = 0.0
    dsigma: float = 0.0
    dT: float = 0.0


@dataclass(frozen=True)
class ControllerState:
    integrator: float
    I: float  # integrator plus proportional terms, before saturation
    I_app: float
    p_sigma: float = 0.0  # last proportional contributions, for bumpless release
    p_T: float = 0.0

    @classmethod
    def initial(cls, limits: ConstraintLimits) -> "ControllerState":
        return cls(limits.I_max, limits.I_max, limits.I_max)


def _update(
    ctrl: ControllerState,
    rate: float,
    stiffness: float,
    proportional: float,
    p_slope: float,
    I_max: float,
    gains: ControllerGains,
    dt: float,
    implicit: bool,
    integrator: float,
) -> tuple[float, float, float]:
    """Return (integrator, unsaturated current, change in applied current).

    ``rate`` is the plant-driven part of the integrand at the previous applied
    current; the anti-windup bleed is added here.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    I_prev = ctrl.I
    if not implicit:
        x_new = integrator - dt * (rate + gains.K_aw * (I_prev - max(I_max, I_prev)))
        I_new = x_new + proportional
        return x_new, I_new, max(I_new, I_max) - max(I_prev, I_max)
    # linearise in the new applied current; try the unsaturated branch first
    Ia0 = max(I_prev, I_max)
    k = max(stiffness, 0.0)
    p = min(p_slope, 0.0)
    dIa = (integrator + proportional - Ia0 - dt * rate) / (1.0 + dt * k - p)
    if Ia0 + dIa >= I_max:
        return integrator - dt * (rate + k * dIa), Ia0 + dIa, dIa
    dIa = I_max - Ia0
    r_sat = rate + k * dIa
    I_new = (integrator - dt * r_sat + dt * gains.K_aw * I_max + proportional + p * dIa) / (1.0 + dt * gains.K_aw)
    x_new = integrator - dt * (r_sat + gains.K_aw * (I_new - I_max))
    return x_new, I_new, dIa


def cccv_step(
    ctrl: ControllerState,
    V: float,
    limits: ConstraintLimits,
    gains: ControllerGains,
    dt: float,
    sens: Sensitivity | None = None,
) -> tuple[ControllerState, float]:
    """One CC-CV update; returns the new state and the applied current."""
    e_V = limits.V_d - V
    stiff = 0.0 if sens is None else -gains.K_IV * sens.dV
    x, I, _ = _update(
        ctrl, gains.K_IV * e_V, stiff, 0.0, 0.0, limits.I_max, gains, dt, sens is not None, ctrl.integrator
    )
    I_app = max(I, limits.I_max)
    return ControllerState(x, I, I_app), I_app


def cccvest_step(
    ctrl: ControllerState,
    signals: ConstraintSignals,
    limits: ConstraintLimits,
    gains: ControllerGains,
    dt: float,
    sens: Sensitivity | None = None,
) -> tuple[ControllerState, float]:
    """One CC-CV-eta-sigma-T update driven by gated constraint errors.

    Gate flags come from ``signals`` (the last plant measurement).  When a
    proportional channel switches off, its last contribution moves into the
    integrator so the current does not jump.  With all aging gates closed this
    is the CC-CV update bit for bit.
    """
    s = sens if sens is not None else Sensitivity()
    x0 = ctrl.integrator
    rate = gains.K_IV * signals.e_V
    stiff = -gains.K_IV * s.dV
    p_sig = p_T = 0.0
    slope_sig = slope_T = 0.0
    if signals.plating_active:
        rate += gains.K_Ieta * signals.e_eta
        stiff += gains.K_Ieta * s.deta
    if signals.stress_active:
        rate += gains.K_Isigma * signals.e_sigma
        stiff -= gains.K_Isigma * s.dsigma
        p_sig = -gains.K_Psigma * signals.e_sigma
        slope_sig = gains.K_Psigma * s.dsigma
    else:
        x0 += ctrl.p_sigma
    if signals.thermal_active:
        rate += gains.K_IT * signals.e_T
        stiff -= gains.K_IT * s.dT
        p_T = -gains.K_PT * signals.e_T
        slope_T = gains.K_PT * s.dT
    else:
        x0 += ctrl.p_T
    x, I, dIa = _update(
        ctrl, rate, stiff, p_sig + p_T, slope_sig + slope_T, limits.I_max, gains, dt, sens is not None, x0
    )
    if sens is not None:
        p_sig += slope_sig * dIa
        p_T += slope_T * dIa
    I_app = max(I, limits.I_max)
    return ControllerState(x, I, I_app, p_sig, p_T), I_app
