import math
from dataclasses import replace

import numpy as np
import pytest

from pmp_gdth.kinematics import body_positions
from pmp_gdth.structural import (
    GridSpec,
    SingularGearGeometry,
    assemble_system,
    calibrate_gear,
    closed_form_u_phi0,
    max_over_phi,
    payload_capacity,
    payload_capacity_bisect,
    solve_reactions,
    torque_surface,
    u_phi0,
)

from .conftest import random_states

SMALL = GridSpec(n1=9, n2=9)


def _massless(params):
    return replace(params.masses, m_bf=0.0, m0=0.0, m1=0.0, m2=0.0, m_act=0.0, m_obj=0.0)


def _random_gear(params, rng):
    while True:
        gear = replace(
            params.gear,
            r_avg=rng.uniform(0.01, 0.05),
            g_p=rng.uniform(1.0, 8.0),
            h_w=rng.uniform(0.01, 0.05),
            cap_h_w=rng.uniform(0.01, 0.08),
            l_gx=rng.uniform(0.01, 0.1),
            l_gy=rng.uniform(0.01, 0.1),
            psi=rng.uniform(0.0, 0.5),
            varphi=rng.uniform(0.0, 0.5),
        )
        if abs(gear.denominator) > 1e-4:
            return gear


def test_massless_arm_has_no_load(params):
    K, load = assemble_system([0.05, 0.3, 0.4, 0.2], _massless(params), params.gear, params.geometry)
    assert not np.any(load)
    assert closed_form_u_phi0([0.05, 0.3, 0.4, 0.2], _massless(params), params.gear, params.geometry) == 0.0


def test_matrix_rows(params, rng):
    gear = params.gear
    bottom = [0.0, 0.0, gear.g_p, -gear.l_gy, gear.l_gx, 0.0]
    m = params.masses
    for q in random_states(rng, 20):
        K, load = assemble_system(q, m, gear, params.geometry, params.g)
        np.testing.assert_array_equal(K[5], bottom)
        pos = body_positions(q, params.geometry)
        bodies = [(m.m_bf, pos.s0), (m.m1, pos.s1), (m.m2, pos.s2), (m.m_act, pos.s_act), (m.claw_load, pos.s_obj)]
        sx = sum(mass * p[0] for mass, p in bodies)
        sy = sum(mass * p[1] for mass, p in bodies)
        assert load[1] == pytest.approx(params.g * sy, rel=1e-13, abs=1e-13)
        assert load[3] == pytest.approx(-params.g * sx, rel=1e-13, abs=1e-13)
        assert load[4] == pytest.approx(params.g * sum(mass for mass, _ in bodies), rel=1e-14)


def test_dual_route_and_residuals(params, rng):
    for q in random_states(rng, 1000):
        gear = _random_gear(params, rng)
        masses = replace(params.masses, m_obj=rng.uniform(0, 8), m1=rng.uniform(0.5, 4))
        sol = solve_reactions(q, masses, gear, params.geometry, params.g)
        closed = closed_form_u_phi0(q, masses, gear, params.geometry, params.g)
        assert abs(sol.u_phi0 - closed) <= 1e-10 * max(abs(closed), 1e-3)
        K, load = assemble_system(q, masses, gear, params.geometry, params.g)
        assert sol.residual <= 1e-9 * np.max(np.abs(load))
        np.testing.assert_allclose(K @ sol.as_vector(), load, atol=1e-9 * np.max(np.abs(load)))


def test_affine_in_payload(params, rng):
    gear, geom = params.gear, params.geometry
    for q in random_states(rng, 100):
        u0, u1, u3 = (u_phi0(q, params.with_payload(m)) for m in (0.0, 1.0, 3.0))
        obj = body_positions(q, geom).s_obj
        coeff = gear.r_avg * params.g * (gear.l_gx * obj[1] - gear.l_gy * obj[0]) / gear.denominator
        assert u1 - u0 == pytest.approx(coeff, rel=1e-10, abs=1e-12)
        assert u3 - u0 == pytest.approx(3 * coeff, rel=1e-9, abs=1e-11)


def test_gravity_proportional(params):
    q = [0.05, 0.3, 0.4, 0.2]
    a = closed_form_u_phi0(q, params.masses, params.gear, params.geometry, 9.81)
    b = closed_form_u_phi0(q, params.masses, params.gear, params.geometry, 19.62)
    assert b == pytest.approx(2 * a, rel=1e-15)


def test_singular_geometry_is_named(params):
    g = params.gear
    rest = g.h_w * g.l_gx + g.r_avg * g.l_gy * math.tan(g.varphi) + g.h_w * g.l_gy * math.tan(g.psi)
    bad = replace(g, cap_h_w=rest / g.r_avg)
    with pytest.raises(SingularGearGeometry, match="vanishes"):
        solve_reactions([0.05, 0.3, 0.4, 0.2], params.masses, bad, params.geometry)
    with pytest.raises(SingularGearGeometry):
        closed_form_u_phi0([0.05, 0.3, 0.4, 0.2], params.masses, bad, params.geometry)


def test_surfaces_ordered_and_stall_plane(params):
    light = torque_surface(params, m_obj=0.0)
    heavy = torque_surface(params, m_obj=7.11)
    assert np.all(light.u_phi0 <= heavy.u_phi0)
    assert heavy.stall == pytest.approx(233.4, abs=0.05)
    assert np.all(np.isfinite(heavy.u_phi0)) and np.all(np.diff(heavy.theta1) > 0)


def test_surface_refinement(params):
    coarse = torque_surface(params, GridSpec(n1=11, n2=11), m_obj=4.0)
    fine = torque_surface(params, GridSpec(n1=21, n2=21), m_obj=4.0)
    np.testing.assert_allclose(fine.u_phi0[::2, ::2], coarse.u_phi0, rtol=1e-12)
    # midpoints stay within the coarse local slope
    u = coarse.u_phi0
    lip = max(np.max(np.abs(np.diff(u, axis=0))), np.max(np.abs(np.diff(u, axis=1))))
    mids = fine.u_phi0[1::2, ::2]
    assert np.all(np.abs(mids - u[:-1]) <= lip)


def test_max_over_phi_is_conservative(params):
    base = torque_surface(params, SMALL, m_obj=2.0)
    worst = max_over_phi(params.with_payload(2.0), SMALL, n_phi=12)
    assert np.all(worst.u_phi0 >= base.u_phi0 - 1e-12)


def test_empty_grid(params):
    from pmp_gdth.params import ParameterError

    with pytest.raises(ParameterError):
        torque_surface(params, GridSpec(n1=0, n2=3))


def test_capacity_matches_bisection(params, rng):
    for _ in range(8):
        p = replace(params, gear=_random_gear(params, rng))
        cap = payload_capacity(p, SMALL)
        ref = payload_capacity_bisect(p, SMALL, tol=1e-5)
        if math.isinf(ref):
            assert not cap.bounded or math.isinf(cap.mass)
        else:
            assert cap.mass == pytest.approx(ref, abs=1e-3)


def test_capacity_edge_cases(params):
    peak0 = torque_surface(params, SMALL, m_obj=0.0).peak
    assert payload_capacity(params, SMALL, stall=peak0).mass == 0.0
    levered = replace(params, gear=replace(params.gear, l_gx=0.0, l_gy=0.0))
    res = payload_capacity(levered, SMALL)
    assert not res.bounded and math.isinf(res.mass) and res.slope == 0.0


def test_capacity_monotone(params):
    base = payload_capacity(params, SMALL).mass
    assert payload_capacity(params, SMALL, stall=200.0).mass <= base
    heavier = replace(params, masses=replace(params.masses, m1=params.masses.m1 + 1.0))
    assert payload_capacity(heavier, SMALL).mass <= base


def test_calibrated_capacity(params):
    cap = payload_capacity(params)
    assert cap.mass == pytest.approx(6.80389, abs=0.01)
    assert torque_surface(params, m_obj=7.11).exceeds().any()
    assert not torque_surface(params, m_obj=0.0).exceeds().any()


def test_calibration_recovers_shipped_gear(params):
    fitted = calibrate_gear(params, 6.80389, bracket=(0.04, 0.05))
    assert fitted.cap_h_w == pytest.approx(params.gear.cap_h_w, rel=1e-9)
    assert fitted.calibrated
