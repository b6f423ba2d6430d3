from dataclasses import replace

import numpy as np
import pytest

from pmp_gdth import dynamics as dyn
from pmp_gdth.pmp import PmpTrajectory

from .conftest import random_states


def _slack(params, g=0.0):
    """No springs and no damping: zero rated forces zero both."""
    return replace(params, g=g, actuators=replace(params.actuators, rated=(0.0, 0.0, 0.0, 0.0)))


def _springless(params):
    p = replace(params, g=0.0)
    object.__setattr__(p, "stiffness", np.zeros(4))
    return p


def _el_oracle(q, qd, qdd, params):
    """d/dt(dL/dqd) - dL/dq + dR/dqd by finite differences of the energies."""
    B = dyn.damping_coefficients(params)

    def momentum(qq, vv, h=1e-3):
        # T is quadratic in the rates, so the central difference is exact
        out = np.empty(4)
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            out[i] = (dyn.kinetic_energy((qq, vv + e), params) - dyn.kinetic_energy((qq, vv - e), params)) / (2 * h)
        return out

    def along(s):
        return q + qd * s + 0.5 * qdd * s * s, qd + qdd * s

    ht = 1e-3
    p = [momentum(*along(k * ht)) for k in (-2, -1, 1, 2)]
    dpdt = (p[0] - 8 * p[1] + 8 * p[2] - p[3]) / (12 * ht)

    def lagrangian(qq):
        v_g, v_e = dyn.potential_energy(qq, params)
        return dyn.kinetic_energy((qq, qd), params) - v_g - v_e

    dldq = np.empty(4)
    for i in range(4):
        h = 1e-6 * max(1.0, abs(q[i]))
        e = np.zeros(4)
        e[i] = h
        dldq[i] = (lagrangian(q + e) - lagrangian(q - e)) / (2 * h)
    return dpdt - dldq + B * qd


def test_inverse_dynamics_matches_euler_lagrange_oracle(params, rng):
    p = params.with_payload(2.0)
    worst = 0.0
    for q in random_states(rng, 200, r_hi=0.09):
        q[0] += 0.005
        qd = rng.normal(size=4)
        qdd = rng.normal(size=4)
        u = dyn.inverse_dynamics((q, qd), qdd, p)
        ref = _el_oracle(q, qd, qdd, p)
        worst = max(worst, np.linalg.norm(u - ref) / np.linalg.norm(ref))
    assert worst <= 1e-5


def test_quadratic_form_is_kinetic_energy(params, rng):
    for q in random_states(rng, 1000):
        qd = rng.normal(size=4)
        M = dyn.mass_matrix(q, params)
        T = dyn.kinetic_energy((q, qd), params)
        assert 0.5 * qd @ M @ qd == pytest.approx(T, rel=1e-10)


def test_mass_matrix_spd_and_matches_jacobian_assembly(params, rng):
    for q in random_states(rng, 1000):
        M = dyn.mass_matrix(q, params)
        np.testing.assert_array_equal(M, M.T)
        assert np.linalg.eigvalsh(M)[0] > 0
        np.testing.assert_allclose(M, dyn.mass_matrix_from_jacobians(q, params), rtol=1e-12, atol=1e-14)


def test_radial_channel_lower_bound(params, rng):
    for m_obj in (0.0, 4.0):
        p = params.with_payload(m_obj)
        floor = p.masses.m0 + p.masses.m_act + m_obj
        for q in random_states(rng, 200):
            assert dyn.mass_matrix(q, p)[0, 0] >= floor - 1e-12


def test_analytic_mass_derivative_matches_central_differences(params, rng):
    for q in random_states(rng, 100, r_hi=0.09):
        q[0] += 0.005
        dM = dyn.mass_matrix_derivatives(q, params)
        for i in range(4):
            h = 1e-6 * max(1.0, abs(q[i]))
            e = np.zeros(4)
            e[i] = h
            fd = (dyn.mass_matrix(q + e, params) - dyn.mass_matrix(q - e, params)) / (2 * h)
            np.testing.assert_allclose(dM[i], fd, atol=1e-8)


def test_coriolis_skew_and_zero_rate(params, rng):
    for q in random_states(rng, 200):
        qd = rng.normal(size=4)
        dM = dyn.mass_matrix_derivatives(q, params)
        C = dyn.coriolis_matrix((q, qd), params, dM)
        N = dyn.mass_matrix_rate((q, qd), params, dM) - 2 * C
        x = rng.normal(size=4)
        assert abs(x @ N @ x) <= 1e-8
        np.testing.assert_allclose(C @ qd, dyn.coriolis_vector((q, qd), params, dM), atol=1e-12)
        assert not np.any(dyn.coriolis_matrix((q, np.zeros(4)), params))


def test_radial_centrifugal_sign(params):
    # spinning theta1 alone throws the rod outward: u_r picks up a negative term
    q = np.array([0.05, 0.3, 0.4, 0.0])
    qd = np.array([0.0, 2.0, 0.0, 0.0])
    assert dyn.coriolis_vector((q, qd), params)[0] < 0


def test_gravity_gradient(params, rng):
    p = params.with_payload(1.5)
    load = p.masses.m_obj + p.masses.m0 + p.masses.m_act
    assert dyn.gravity_gradient([0.04, 0.3, np.pi / 2 - 0.3, 0.2], p)[0] == pytest.approx(0.0, abs=1e-12)
    assert dyn.gravity_gradient([0.04, 0.7, -0.7, 0.2], p)[0] == pytest.approx(p.g * load, rel=1e-14)
    for q in random_states(rng, 200):
        G = dyn.gravity_gradient(q, p)
        assert G[3] == 0.0
        fd = np.empty(4)
        for i in range(4):
            h = 1e-6 * max(1.0, abs(q[i]))
            e = np.zeros(4)
            e[i] = h
            fd[i] = (dyn.potential_energy(q + e, p)[0] - dyn.potential_energy(q - e, p)[0]) / (2 * h)
        assert np.linalg.norm(G - fd) <= 1e-6 * max(1.0, np.linalg.norm(G))


def test_static_rest_pose_needs_only_gravity(params):
    q0 = np.asarray(params.rest, dtype=float)
    u = dyn.inverse_dynamics((q0, np.zeros(4)), np.zeros(4), params)
    np.testing.assert_allclose(u, dyn.gravity_gradient(q0, params), atol=1e-12)


def test_payload_linearity(params, rng):
    for q in random_states(rng, 50):
        qd, qdd = rng.normal(size=4), rng.normal(size=4)
        B = dyn.damping_coefficients(params)
        u = [dyn.inverse_dynamics((q, qd), qdd, params.with_payload(m), B=B) for m in (0.0, 1.0, 2.0)]
        np.testing.assert_allclose(u[2] - u[0], 2 * (u[1] - u[0]), rtol=1e-9, atol=1e-9)


def test_hamiltonian(params, rng):
    q0 = np.asarray(params.rest, dtype=float)
    assert dyn.rbd_hamiltonian((q0, np.zeros(4)), params) == pytest.approx(dyn.potential_energy(q0, params)[0], rel=1e-15)
    for q in random_states(rng, 100):
        qd = rng.normal(size=4)
        e = dyn.energy_breakdown((q, qd), params)
        assert dyn.rbd_hamiltonian((q, qd), params) == pytest.approx(e.kinetic + e.gravitational + e.elastic, rel=1e-14)
        base = dyn.rbd_hamiltonian((q, qd), params)
        for j in range(4):
            stiffer = replace(params)
            k = params.stiffness.copy()
            k[j] *= 2
            object.__setattr__(stiffer, "stiffness", k)
            assert dyn.rbd_hamiltonian((q, qd), stiffer) >= base


def test_free_system_at_rest_stays_at_rest(params):
    p = _slack(params)
    traj = dyn.forward_integrate(([0.05, 0.4, 0.6, 0.1], np.zeros(4)), lambda t: np.zeros(4), 0.001, 0.1, p)
    assert not np.any(traj.qdot)


def test_free_system_conserves_energy(params):
    p = _slack(params)
    q0 = np.array([0.05, 0.4, 0.6, 0.1])
    qd0 = np.array([0.01, 0.3, -0.2, 0.5])
    drift = []
    for dt in (2e-4, 1e-4):
        traj = dyn.forward_integrate((q0, qd0), lambda t: np.zeros(4), dt, 0.2, p)
        T = [dyn.kinetic_energy((q, v), p) for q, v in zip(traj.q, traj.qdot)]
        drift.append((max(T) - min(T)) / T[0])
    assert drift[0] <= 1e-5
    assert 0.4 <= drift[1] / drift[0] <= 0.6


def test_damping_only_drains_kinetic_energy(params):
    p = _springless(params)
    q0 = np.array([0.05, 0.4, 0.6, 0.1])
    traj = dyn.forward_integrate((q0, np.array([0.01, 0.3, -0.2, 0.5])), lambda t: np.zeros(4), 1e-4, 0.05, p)
    T = np.array([dyn.kinetic_energy((q, v), p) for q, v in zip(traj.q, traj.qdot)])
    assert np.all(np.diff(T) < 0)


def test_energy_balance_with_damping(params):
    p = _springless(params)
    B = dyn.damping_coefficients(p)
    dt = 1e-4
    traj = dyn.forward_integrate(([0.05, 0.4, 0.6, 0.1], [0.01, 0.3, -0.2, 0.5]), lambda t: np.zeros(4), dt, 0.05, p)
    H = np.array([dyn.rbd_hamiltonian((q, v), p) for q, v in zip(traj.q, traj.qdot)])
    loss = np.cumsum([dt * v @ (B * v) for v in traj.qdot[:-1]])
    assert np.max(np.abs(H[1:] - H[0] + loss)) <= 0.02 * loss[-1]


def _track_error(params, traj, rest, dt):
    def control(t):
        q, v, a = traj.sample(t)
        return dyn.inverse_dynamics((q[0], v[0]), a[0], params, rest)

    q0 = traj.sample(0.0)[0][0]
    out = dyn.forward_integrate((q0, np.zeros(4)), control, dt, traj.duration, params, rest)
    ref = traj.sample(out.t)[0]
    return float(np.max(np.abs(out.q - ref)))


def test_tracking_error_is_first_order(params):
    q0 = np.array([0.05, 0.5, 1.0, 0.0])
    qf = np.array([0.07, 0.8, 0.6, 0.4])
    traj = PmpTrajectory.from_boundaries(q0, qf, 0.4)
    e1 = _track_error(params, traj, qf, 0.002)
    e2 = _track_error(params, traj, qf, 0.001)
    assert 0.4 <= e2 / e1 <= 0.6


def test_integrate_rejects_bad_dt(params):
    with pytest.raises(ValueError):
        dyn.forward_integrate(([0.05, 0.4, 0.6, 0.1], np.zeros(4)), lambda t: np.zeros(4), 0.0, 1.0, params)
