import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vestsim.constants import F, R
from vestsim.signals import ConstraintLimits, constraint_signals, gate_matrix, plating_current

LIM = ConstraintLimits()

volts = st.floats(3.0, 4.4, allow_nan=False)
etas = st.floats(-0.05, 0.2, allow_nan=False)
sigmas = st.floats(0.0, 200e6, allow_nan=False)
temps = st.floats(290.0, 330.0, allow_nan=False)


@given(etas, sigmas, temps, volts)
def test_gates_open_iff_limit_crossed_below_vmax(eta, sigma, T, V):
    s = constraint_signals(eta, sigma, T, V, LIM)
    below = V < LIM.V_d
    assert s.plating_active == (below and eta < LIM.eta_d)
    assert s.stress_active == (below and sigma > LIM.sigma_d)
    assert s.thermal_active == (below and T > LIM.T_d)
    g = gate_matrix([eta], [sigma], [T], [V], LIM)[0]
    assert tuple(g) == (s.plating_active, s.stress_active, s.thermal_active)


def test_error_signs():
    s = constraint_signals(-0.002, 95e6, 314.0, 4.1, LIM)
    assert s.e_eta < 0 and s.e_sigma < 0 and s.e_T < 0 and s.e_V > 0
    assert s.any_aging_active


def test_gates_closed_at_vmax():
    s = constraint_signals(-0.01, 150e6, 330.0, LIM.V_d, LIM)
    assert not s.any_aging_active


def test_infinite_limit_disables_channel():
    lim = ConstraintLimits(eta_d=-math.inf, T_d=math.inf)
    s = constraint_signals(-1.0, 95e6, 400.0, 4.0, lim)
    assert not s.plating_active and not s.thermal_active and s.stress_active


def test_limits_validation():
    with pytest.raises(ValueError):
        ConstraintLimits(I_max=5.0)
    with pytest.raises(ValueError):
        ConstraintLimits(sigma_d=0.0)


def test_plating_current():
    i0, T = 1e-3, 298.15
    assert plating_current(0.0, T, i0) == pytest.approx(-i0 / F)
    eta = np.linspace(-0.05, 0.05, 11)
    j = np.array([plating_current(e, T, i0) for e in eta])
    assert np.all(j < 0)
    assert np.all(np.diff(j) > 0)  # deposition grows as eta falls
    assert j[0] / j[5] == pytest.approx(math.exp(0.5 * F * 0.05 / (R * T)))
    with pytest.raises(ValueError):
        plating_current(0.0, 0.0, i0)
