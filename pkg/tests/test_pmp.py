import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmp_gdth.params import ParameterError
from pmp_gdth.pmp import (
    BoundaryConditions,
    PmpTrajectory,
    acceleration_cost,
    boundary_matrix,
    bump,
    eval as pmp_eval,
    solve_boundary,
    verify_optimality,
)


def _random_bcs(rng, n):
    tf = np.exp(rng.uniform(np.log(0.01), np.log(100.0), n))
    q0, qf, v0, vf = rng.uniform(-3, 3, (4, n))
    return [BoundaryConditions(*row) for row in zip(q0, qf, v0, vf, tf)]


def test_unit_rest_to_rest_coefficients():
    c = solve_boundary(BoundaryConditions(0.0, 1.0, 0.0, 0.0, 1.0))
    np.testing.assert_allclose(c, [-12.0, 6.0, 0.0, 0.0], atol=1e-12)


def test_stationary_and_scaling():
    c = solve_boundary(BoundaryConditions(0.7, 0.7, 0.0, 0.0, 2.0))
    assert c[0] == 0.0 and c[1] == 0.0
    a = solve_boundary(BoundaryConditions(0.2, 0.5, 0.0, 0.0, 1.3))
    b = solve_boundary(BoundaryConditions(0.2, 0.8, 0.0, 0.0, 1.3))
    np.testing.assert_allclose(b[:2], 2 * a[:2], rtol=1e-14)


def test_rejects_bad_horizon():
    with pytest.raises(ParameterError):
        BoundaryConditions(0, 1, 0, 0, 0.0)
    with pytest.raises(ParameterError):
        BoundaryConditions(0, np.nan, 0, 0, 1.0)


def test_matches_linear_solve_and_meets_boundaries(rng):
    for bc in _random_bcs(rng, 10_000):
        c = solve_boundary(bc)
        rhs = np.array([bc.vf, bc.qf, bc.v0, bc.q0])
        A = boundary_matrix(bc.tf)
        scale = np.abs(A) @ np.abs(c) + np.abs(rhs)
        assert np.all(np.abs(A @ c - rhs) <= 1e-12 * scale)
        oracle = np.linalg.solve(A, rhs)
        np.testing.assert_allclose(c, oracle, rtol=1e-6, atol=1e-9 * np.max(np.abs(oracle)))
        assert c[2] == bc.v0 and c[3] == bc.q0
        traj = PmpTrajectory(c[None, :], [bc.tf])
        assert abs(traj.qf[0] - bc.qf) <= 1e-9 * max(1.0, abs(bc.qf), abs(bc.v0) * bc.tf)
        assert abs(traj.vf[0] - bc.vf) <= 1e-9 * max(1.0, abs(bc.vf), abs(bc.v0))


def test_eval_examples():
    traj = PmpTrajectory.from_boundaries([0.0], [1.0], 1.0)
    assert pmp_eval(traj, 0, 0.0) == (0.0, 0.0, 6.0)
    q, v, _ = pmp_eval(traj, 0, 0.5)
    assert q == pytest.approx(0.5, abs=1e-15) and v == pytest.approx(1.5, abs=1e-15)
    q, v, _ = traj.eval(0, 1.0)
    assert q == pytest.approx(1.0, abs=1e-9) and v == pytest.approx(0.0, abs=1e-9)
    assert traj.eval(0, 3.0) == (traj.qf[0], traj.vf[0], 0.0)
    with pytest.raises(ParameterError):
        traj.eval(0, -0.1)


def test_zero_horizon_holds():
    traj = PmpTrajectory.from_boundaries([0.3, 1.0], [0.3, 2.0], [0.0, 1.0])
    q, v, a = traj.sample([0.0, 0.5, 2.0])
    assert np.all(q[:, 0] == 0.3) and not np.any(v[:, 0]) and not np.any(a[:, 0])
    with pytest.raises(ParameterError):
        PmpTrajectory.from_boundaries([0.3], [0.4], [0.0])


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.05, 20), st.floats(0.1, 5), st.floats(0, 1))
def test_time_scaling(q0, qf, tf, s, frac):
    a = PmpTrajectory.from_boundaries([q0], [qf], tf)
    b = PmpTrajectory.from_boundaries([q0], [qf], s * tf)
    qa, va, _ = a.eval(0, frac * tf)
    qb, vb, _ = b.eval(0, frac * s * tf)
    assert qb == pytest.approx(qa, abs=1e-9 * max(1.0, abs(q0), abs(qf)))
    assert vb == pytest.approx(va / s, abs=1e-9 * max(1.0, abs(va) / s))


def test_acceleration_is_affine(rng):
    for bc in _random_bcs(rng, 200):
        bc = BoundaryConditions(bc.q0, bc.qf, bc.v0, bc.vf, min(bc.tf, 10.0))
        traj = PmpTrajectory(solve_boundary(bc)[None, :], [bc.tf])
        t = np.linspace(0, bc.tf, 11)[:-1]
        a = traj.sample(t)[2][:, 0]
        assert np.max(np.abs(np.diff(a, 2))) <= 1e-8 * max(1.0, np.max(np.abs(a)))


def test_unit_cost_is_six():
    P = np.polynomial.Polynomial
    assert acceleration_cost(P([6.0, -12.0]), 1.0) == pytest.approx(6.0, rel=1e-14)
    traj = PmpTrajectory.from_boundaries([0.0], [1.0], 1.0)
    assert verify_optimality(traj, 0).cost == pytest.approx(6.0, rel=1e-14)

def test_perturbations_raise_cost(rng):
    P = np.polynomial.Polynomial
    accel = P([6.0, -12.0])
    d = bump(1.0).deriv(2)
    assert acceleration_cost(accel + 0.1 * d, 1.0) - 6.0 > 0
    assert acceleration_cost(accel + 0.0 * d, 1.0) == acceleration_cost(accel, 1.0)
    b = bump(2.0)
    assert b(0.0) == 0 and b(2.0) == 0 and b.deriv()(0.0) == 0 and abs(b.deriv()(2.0)) < 1e-12
    for seed in range(20):
        q0, qf = rng.uniform(-2, 2, 2)
        rep = verify_optimality(PmpTrajectory.from_boundaries([q0], [qf], rng.uniform(0.1, 5)), 0, seed=seed)
        assert rep.optimal
        assert rep.cost_increase[0] == 0.0
