import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import bisect

from vestsim.cell import (
    KineticStarvation,
    StepRejected,
    _partition,
    advance_temperature,
    butler_volmer,
    make_electrolyte,
    make_particle,
    solve_overpotential,
    step_electrolyte,
    step_solid_diffusion,
)
from vestsim.constants import F
from vestsim.plant import Plant


# ------------------------------------------------------------------ solid diffusion


def test_sphere_conserves_lithium_per_step():
    g = make_particle(2.5e-6, 28746.0, 5e-15, 5000.0, n_r=30)
    rng = np.random.default_rng(0)
    for _ in range(200):
        j = rng.uniform(-2e-5, 2e-5)
        dt = rng.uniform(0.01, 5.0)
        before = g.lithium()
        g = step_solid_diffusion(g, g.D_s, j, dt)
        moved = -j * 4 * math.pi * g.R_p**2 * dt
        assert g.lithium() - before == pytest.approx(moved, rel=1e-8, abs=1e-8 * abs(before) * 1e-6)


def test_sphere_long_time_profile_matches_analytic():
    # constant influx: past the transient the profile is the quasi-steady parabola
    R_p, D, j = 2.5e-6, 5e-15, -1e-6
    g = make_particle(R_p, 28746.0, D, 1000.0, n_r=200)
    t = 0.0
    dt = 0.5
    while t < 3000.0:
        g = step_solid_diffusion(g, D, j, dt)
        t += dt
    tau = R_p**2 / D
    assert t > 2 * tau
    mean = 1000.0 - 3 * j * t / R_p
    exact = mean - j * R_p / D * (g.r**2 / (2 * R_p**2) - 0.3)
    assert g.average() == pytest.approx(mean, rel=1e-10)
    # implicit Euler in time is O(dt): compare shape to a fraction of the swing
    swing = abs(j) * R_p / (2 * D)
    assert np.max(np.abs(g.c - exact)) < 2e-3 * swing
    c_surf_exact = mean - j * R_p / D * 0.2
    assert g.surface_concentration() == pytest.approx(c_surf_exact, abs=5e-3 * swing)


def test_sphere_coarse_grid_close_to_fine_grid():
    R_p, D, j = 2.5e-6, 5e-15, -1.5e-5
    out = {}
    for n in (30, 240):
        g = make_particle(R_p, 28746.0, D, 500.0, n_r=n)
        for _ in range(600):
            g = step_solid_diffusion(g, D, j, 0.1)
        out[n] = g.surface_concentration()
    assert out[30] == pytest.approx(out[240], rel=2e-3)


def test_sphere_rejects_out_of_bounds():
    g = make_particle(2.5e-6, 28746.0, 5e-15, 28700.0, n_r=10)
    with pytest.raises(StepRejected):
        step_solid_diffusion(g, g.D_s, -1e-3, 10.0)


# ---------------------------------------------------------------------- kinetics


def test_butler_volmer_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        i0 = 10 ** rng.uniform(-2, 2)
        T = rng.uniform(250, 330)
        aa = rng.choice([0.5, rng.uniform(0.2, 0.8)])
        eta = rng.uniform(-0.25, 0.25)
        j = butler_volmer(i0, eta, T, aa, 1 - aa if aa != 0.5 else 0.5)
        back = solve_overpotential(i0, j, T, aa, 1 - aa if aa != 0.5 else 0.5)
        assert back == pytest.approx(eta, abs=1e-10)


def test_overpotential_zero_flux_and_starvation():
    assert solve_overpotential(1.0, 0.0, 298.15) == 0.0
    with pytest.raises(KineticStarvation):
        solve_overpotential(0.0, 1e-5, 298.15)


def _two_size_electrode(el, asr=0.0):
    return replace(
        el,
        radii=(2e-6, 5e-6),
        fractions=(0.4, 0.6),
        diffusivities=(5e-15, 5e-15),
        c_max=(28746.0, 28746.0),
        asr_f=asr,
    )


@pytest.mark.parametrize("asr", [0.0, 2e-3])
def test_partition_matches_bisection(cfg, asr):
    el = _two_size_electrode(cfg.params.negative, asr)
    T = 300.0
    i0 = np.array([1.2, 0.7])
    U = np.array([0.12, 0.09])
    la_F = el.thickness * el.specific_areas() * F
    for i_el in (-150.0, -20.0, 35.0):
        js, eta = _partition(el, i_el, i0, U, T, 0.5, 0.5)
        assert float(la_F @ js) == pytest.approx(i_el, rel=1e-10)

        def flux(phi, k):
            # eta + asr F j = phi - U, solved by bisection on j
            drive = phi - U[k]
            if asr == 0:
                return butler_volmer(i0[k], drive, T)
            lim = abs(drive) / (asr * F) + 1e-30
            return bisect(lambda x: solve_overpotential(i0[k], x, T) + asr * F * x - drive, -lim, lim, xtol=1e-30)

        phi = bisect(lambda p: la_F[0] * flux(p, 0) + la_F[1] * flux(p, 1) - i_el, -1.0, 1.0, xtol=1e-14)
        ref = np.array([flux(phi, 0), flux(phi, 1)])
        np.testing.assert_allclose(js, ref, rtol=1e-7)
        # common solid potential across classes
        common = eta + U + asr * F * js
        assert common[0] == pytest.approx(common[1], abs=1e-10)


# -------------------------------------------------------------------- electrolyte


def test_electrolyte_conserves_lithium(cfg):
    p = cfg.params
    g = make_electrolyte(p, 20)
    total = g.lithium()
    for I in (-40.0, -40.0, 10.0, -25.0):
        for _ in range(50):
            g = step_electrolyte(g, I, p, 0.2)
            assert g.lithium() == pytest.approx(total, rel=1e-8)


def test_electrolyte_steady_state_separator_gradient(cfg):
    p = cfg.params
    I = -20.0
    g = make_electrolyte(p, 20)
    for _ in range(400):
        g = step_electrolyte(g, I, p, 5.0)
    nxt = step_electrolyte(g, I, p, 5.0)
    assert np.max(np.abs(nxt.c - g.c)) < 1e-8 * p.c_e_init
    # all of the negative source has crossed the separator: -D_eff dc/dx = (1 - t+) i / F
    i = I / p.area
    d_eff = p.D_e * p.eps_e_sep**p.brug
    c_sep = g.c[g.sep]
    grad = np.diff(c_sep) / np.diff(g.x[g.sep])
    expected = -(1 - p.t_plus) * i / (F * d_eff)
    np.testing.assert_allclose(grad, expected, rtol=1e-8)


def test_electrolyte_rejects_depletion(cfg):
    g = make_electrolyte(cfg.params, 10, c0=1.0)
    with pytest.raises(StepRejected):
        step_electrolyte(g, -500.0, cfg.params, 10.0)


# ------------------------------------------------------------------------ thermal


def test_newton_cooling_closed_form(cfg):
    p = cfg.params
    q = 3.0
    T0 = 300.0
    T = T0
    for _ in range(100):
        T = advance_temperature(T, q, p, 1.0)
    T_inf = p.T_a + q / p.h
    exact = T_inf + (T0 - T_inf) * math.exp(-p.h * 100.0 / p.thermal_mass)
    assert T == pytest.approx(exact, rel=1e-13)
    sol = solve_ivp(
        lambda t, y: [(-p.h * (y[0] - p.T_a) + q) / p.thermal_mass], (0, 100), [T0], rtol=1e-11, atol=1e-11
    )
    assert T == pytest.approx(sol.y[0, -1], abs=1e-8)


def test_newton_cooling_without_convection(cfg):
    p = replace(cfg.params, h=0.0)
    assert advance_temperature(300.0, 2.0, p, 10.0) == pytest.approx(300.0 + 20.0 / p.thermal_mass)


# -------------------------------------------------------------------------- plant


def test_plant_charge_is_coulomb_consistent(cfg):
    plant = Plant(cfg.params)
    state = plant.initial_state(0.0)
    soc0 = plant.soc(state)
    I = -40.0
    for _ in range(300):
        fz = plant.measure(state)
        state = plant.advance(state, plant.evaluate(fz, I), 0.1)
    dsoc = plant.soc(state) - soc0
    assert dsoc * cfg.params.Q_nom * 3600.0 == pytest.approx(abs(I) * 30.0, rel=1e-3)


def test_plant_total_lithium_conserved(cfg):
    plant = Plant(cfg.params)
    state = plant.initial_state(0.2)

    def solid(st):
        total = 0.0
        for e, el in enumerate((cfg.params.negative, cfg.params.positive)):
            for k, g in enumerate(st.particles[e]):
                n_particles = el.fractions[k] * el.eps_s * el.thickness * cfg.params.area / (
                    4 * math.pi * g.R_p**3 / 3
                )
                total += n_particles * g.lithium()
        return total

    before = solid(state)
    for _ in range(100):
        state = plant.advance(state, plant.evaluate(plant.measure(state), -30.0), 0.2)
    assert solid(state) == pytest.approx(before, rel=1e-8)


def test_initial_state_validates_soc(cfg):
    with pytest.raises(ValueError):
        Plant(cfg.params).initial_state(1.5)
