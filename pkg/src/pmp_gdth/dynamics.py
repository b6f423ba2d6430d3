"""Euler-Lagrange dynamics assembled from energies and body Jacobians.

The manipulator form is ``M(q) qdd + C(q, qd) qd + G(q) + K (q - q0) + B qd = U``
with viscous Rayleigh damping ``R = 1/2 qd^T B qd`` and virtual springs
``K = diag(kappa)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .inertia import actuator_polar_inertia, equivalent_azimuthal_inertia, link_polar_inertias
from .kinematics import JointState, body_positions, velocity_jacobians
from .params import RobotParams, virtual_damping


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float, q: np.ndarray, qdot: np.ndarray):
        super().__init__(f"{message} at t={t:.6g}, q={np.array2string(q)}, qdot={np.array2string(qdot)}")
        self.t = t
        self.q = q
        self.qdot = qdot


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    gravitational: float
    elastic: float
    dissipation: float  # 2R = qd^T B qd, watts


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray


def _split(state) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(state, JointState):
        return state.q, state.qdot
    q, qd = state
    return np.asarray(q, dtype=float), np.asarray(qd, dtype=float)


def _q(state) -> np.ndarray:
    return state.q if isinstance(state, JointState) else np.asarray(state, dtype=float)


def translating_masses(params: RobotParams) -> dict[str, float]:
    """Point masses carried by each body of :class:`BodyPositions`."""
    m = params.masses
    return {"s0": m.m_bf, "s1": m.m1, "s2": m.m2, "s_act": m.m_act, "s_obj": m.claw_load}


# bodies whose weight enters V_g; the base frame height is constant
_GRAVITY_BODIES = ("s1", "s2", "s_act", "s_obj")


def rotational_inertias(q: np.ndarray, params: RobotParams) -> tuple[float, float, float]:
    """Inertias on the ``theta1``, ``theta1+theta2`` and ``phi`` channels."""
    geom = params.geometry
    rho = params.masses.rho_act
    r = max(q[0], 0.0)
    qq = np.array([r, q[1], q[2], q[3]])
    i1, i2 = link_polar_inertias(qq, params.inertia, geom)
    i_act = actuator_polar_inertia(qq, geom.rod_radius, rho)
    j_eq = equivalent_azimuthal_inertia(qq, params.inertia, geom.rod_radius, rho)
    return i1, i2 + i_act, j_eq


_E1 = np.array([0.0, 1.0, 0.0, 0.0])
_E12 = np.array([0.0, 1.0, 1.0, 0.0])
_E3 = np.array([0.0, 0.0, 0.0, 1.0])


def kinetic_energy(state, params: RobotParams) -> float:
    q, qd = _split(state)
    jac = velocity_jacobians(q, params.geometry)
    T = 0.0
    for body, m in translating_masses(params).items():
        v = getattr(jac, body) @ qd
        T += 0.5 * m * float(v @ v)
    i1, i2, j_eq = rotational_inertias(q, params)
    T += 0.5 * i1 * qd[1] ** 2 + 0.5 * i2 * (qd[1] + qd[2]) ** 2 + 0.5 * j_eq * qd[3] ** 2
    return T


def mass_matrix_from_jacobians(state, params: RobotParams) -> np.ndarray:
    """``sum m J^T J`` plus the rotational channels, assembled from body Jacobians."""
    q = _q(state)
    jac = velocity_jacobians(q, params.geometry)
    M = np.zeros((4, 4))
    for body, m in translating_masses(params).items():
        J = getattr(jac, body)
        M += m * (J.T @ J)
    i1, i2, j_eq = rotational_inertias(q, params)
    M += i1 * np.outer(_E1, _E1) + i2 * np.outer(_E12, _E12) + j_eq * np.outer(_E3, _E3)
    return 0.5 * (M + M.T)


def _chain_bodies(params: RobotParams):
    """``(m, b, c0, moves_r)`` per body: ``b`` along ``e_r1``, ``c0 (+ r)`` along ``e_r2``."""
    g = params.geometry
    m = params.masses
    return (
        (m.m_bf, 0.0, 0.0, False),
        (m.m1, g.lbar1, 0.0, False),
        (m.m2, g.l1, g.lbar2, False),
        (m.m_act, g.l1, g.l2, True),
        (m.claw_load, g.l1, g.l2 + g.r_prime + g.delta_r, True),
    )


# joint rates -> (rdot, w1, w12, phidot) with w12 = theta1dot + theta2dot
_RATES = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 1.0, 1.0, 0], [0, 0, 0, 1.0]])


def inertia_form(state, params: RobotParams) -> tuple[np.ndarray, np.ndarray]:
    """Kinetic form ``A`` in ``(rdot, w1, w12, phidot)`` and its gradient ``dA[i] = dA/dq_i``.

    In cylindrical coordinates a body at ``b*e_r1 + c*e_r2`` past the mount
    has ``2T/m = cdot^2 + b^2 w1^2 + c^2 w12^2 + 2bc cos(theta2) w1 w12
    + 2b sin(theta2) w1 cdot + rho^2 phidot^2``; the link and rod inertias
    add to the ``w1``, ``w12`` and ``phidot`` channels.
    """
    r, t1, t2, phi = (float(v) for v in _q(state))
    t12 = t1 + t2
    s1, c1 = math.sin(t1), math.cos(t1)
    s2, c2 = math.sin(t2), math.cos(t2)
    s12, c12 = math.sin(t12), math.cos(t12)
    geom = params.geometry
    rho0 = geom.l0 * math.sin(geom.vartheta)

    m_r = 0.0  # sum m over bodies riding the rod
    mb_r = 0.0  # sum m*b over those bodies
    b2 = bc = cc = 0.0
    d_bc_r = d_cc_r = 0.0
    pp = pp_r = pp_1 = pp_2 = 0.0
    for m, b, c0, moves in _chain_bodies(params):
        c = c0 + r if moves else c0
        rho = rho0 + b * s1 + c * s12
        b2 += m * b * b
        bc += m * b * c
        cc += m * c * c
        pp += m * rho * rho
        pp_1 += 2.0 * m * rho * (b * c1 + c * c12)
        pp_2 += 2.0 * m * rho * c * c12
        if moves:
            m_r += m
            mb_r += m * b
            d_bc_r += m * b
            d_cc_r += 2.0 * m * c
            pp_r += 2.0 * m * rho * s12

    ins = params.inertia
    R2 = geom.rod_radius**2
    k_rod = math.pi / 12.0 * R2 * params.masses.rho_act
    rr = max(r, 0.0)
    on_rod = 1.0 if r > 0.0 else 0.0
    cp2 = math.cos(phi) ** 2
    sp2 = 1.0 - cp2
    s2p = math.sin(2.0 * phi)
    ct1 = c1 * c1
    st12 = s12 * s12
    ct12 = 1.0 - st12
    s2t1 = math.sin(2.0 * t1)
    s2t12 = math.sin(2.0 * t12)

    lx1 = ins.link1[0] * cp2 + ins.link1[1] * sp2
    i1 = ct1 * lx1 + ins.link1[2] * (1.0 - ct1)
    i1_t1 = -s2t1 * (lx1 - ins.link1[2])
    i1_p = ct1 * (ins.link1[1] - ins.link1[0]) * s2p

    lx2 = ins.link2[0] * cp2 + ins.link2[1] * sp2
    i2 = ct12 * lx2 + ins.link2[2] * st12 + k_rod * rr * (3.0 * R2 * (1.0 + st12) + rr * rr * (1.0 - st12))
    i2_t = s2t12 * (ins.link2[2] - lx2 + k_rod * rr * (3.0 * R2 - rr * rr))
    i2_r = on_rod * k_rod * (3.0 * R2 * (1.0 + st12) + 3.0 * rr * rr * (1.0 - st12))
    i2_p = ct12 * (ins.link2[1] - ins.link2[0]) * s2p

    j = sum(t[0] * cp2 + t[1] * sp2 for t in (ins.base, ins.link1, ins.link2))
    j += k_rod * rr**3 + 3.0 * k_rod * R2 * rr
    j_r = on_rod * 3.0 * k_rod * (rr * rr + R2)
    j_p = sum(t[1] - t[0] for t in (ins.base, ins.link1, ins.link2)) * s2p

    A = np.zeros((4, 4))
    A[0, 0] = m_r
    A[0, 1] = A[1, 0] = mb_r * s2
    A[1, 1] = b2 + i1
    A[1, 2] = A[2, 1] = bc * c2
    A[2, 2] = cc + i2
    A[3, 3] = pp + j

    dA = np.zeros((4, 4, 4))
    # r
    dA[0, 1, 2] = dA[0, 2, 1] = d_bc_r * c2
    dA[0, 2, 2] = d_cc_r + i2_r
    dA[0, 3, 3] = pp_r + j_r
    # theta1
    dA[1, 1, 1] = i1_t1
    dA[1, 2, 2] = i2_t
    dA[1, 3, 3] = pp_1
    # theta2
    dA[2, 0, 1] = dA[2, 1, 0] = mb_r * c2
    dA[2, 1, 2] = dA[2, 2, 1] = -bc * s2
    dA[2, 2, 2] = i2_t
    dA[2, 3, 3] = pp_2
    # phi
    dA[3, 1, 1] = i1_p
    dA[3, 2, 2] = i2_p
    dA[3, 3, 3] = j_p
    return A, dA


def mass_matrix(state, params: RobotParams) -> np.ndarray:
    A, _ = inertia_form(state, params)
    return _RATES.T @ A @ _RATES


def rest_pose(params: RobotParams, rest=None) -> np.ndarray:
    return np.asarray(params.rest if rest is None else rest, dtype=float)


def potential_energy(state, params: RobotParams, rest=None) -> tuple[float, float]:
    """Gravitational and elastic potential, ``(V_g, V_e)``."""
    q = _q(state)
    pos = body_positions(q, params.geometry)
    masses = translating_masses(params)
    v_g = params.g * sum(masses[b] * getattr(pos, b)[2] for b in _GRAVITY_BODIES)
    dq = q - rest_pose(params, rest)
    v_e = 0.5 * float(np.sum(params.stiffness * dq * dq))
    return float(v_g), v_e


def gravity_gradient(state, params: RobotParams) -> np.ndarray:
    """``dV_g/dq``; the azimuth entry is exactly zero."""
    r, t1, t2, _ = (float(v) for v in _q(state))
    s1, s12, c12 = math.sin(t1), math.sin(t1 + t2), math.cos(t1 + t2)
    G = np.zeros(4)
    for m, b, c0, moves in _chain_bodies(params):
        c = c0 + r if moves else c0
        if moves:
            G[0] += m * c12
        G[1] -= m * (b * s1 + c * s12)
        G[2] -= m * c * s12
    return params.g * G


def elastic_gradient(state, params: RobotParams, rest=None) -> np.ndarray:
    return params.stiffness * (_q(state) - rest_pose(params, rest))


def damping_coefficients(params: RobotParams) -> np.ndarray:
    """Critical damping per joint at the home pose.

    Each joint sees the effective inertia ``1/(M^-1)_jj``, the inertia felt
    with the other joints free, rather than the bare diagonal ``M_jj``.
    """
    M = mass_matrix(np.asarray(params.home, dtype=float), params)
    scale = 1.0 / np.diag(np.linalg.inv(M))
    return np.array([virtual_damping(m, u, s) for m, u, s in zip(scale, params.actuators.rated, params.geometry.strokes)])


def mass_matrix_derivatives(state, params: RobotParams) -> np.ndarray:
    """``dM[k, j]/dq[i]`` stacked as ``dM[i]``."""
    _, dA = inertia_form(state, params)
    return _RATES.T @ dA @ _RATES


def coriolis_matrix(state, params: RobotParams, dM: np.ndarray | None = None) -> np.ndarray:
    """Christoffel-symbol Coriolis matrix, so ``Mdot - 2C`` is skew."""
    q, qd = _split(state)
    if dM is None:
        dM = mass_matrix_derivatives(q, params)
    # C[k, j] = 1/2 sum_i (dM[i][k, j] + dM[j][k, i] - dM[k][i, j]) qd[i]
    term1 = np.einsum("ikj,i->kj", dM, qd)
    term2 = np.einsum("jki,i->kj", dM, qd)
    term3 = np.einsum("kij,i->kj", dM, qd)
    return 0.5 * (term1 + term2 - term3)


def kinetic_gradient(state, params: RobotParams, dM: np.ndarray | None = None) -> np.ndarray:
    """``dT/dq`` at fixed rates, ``1/2 qd^T dM[i] qd``."""
    q, qd = _split(state)
    if dM is None:
        dM = mass_matrix_derivatives(q, params)
    return 0.5 * np.einsum("ikj,k,j->i", dM, qd, qd)


def coriolis_vector(state, params: RobotParams, dM: np.ndarray | None = None) -> np.ndarray:
    """``C(q, qd) qd`` as ``Mdot qd - dT/dq``, without forming ``C``."""
    q, qd = _split(state)
    if not np.any(qd):
        return np.zeros(4)
    if dM is None:
        dM = mass_matrix_derivatives(q, params)
    return np.einsum("ikj,i,j->k", dM, qd, qd) - kinetic_gradient((q, qd), params, dM)


def mass_matrix_rate(state, params: RobotParams, dM: np.ndarray | None = None) -> np.ndarray:
    q, qd = _split(state)
    if dM is None:
        dM = mass_matrix_derivatives(q, params)
    return np.einsum("ikj,i->kj", dM, qd)


def inverse_dynamics(state, qddot, params: RobotParams, rest=None, B: np.ndarray | None = None) -> np.ndarray:
    """Generalized forces ``U = (u_r, u_theta1, u_theta2, u_phi)``."""
    q, qd = _split(state)
    qdd = np.asarray(qddot, dtype=float)
    if B is None:
        B = damping_coefficients(params)
    return (
        mass_matrix(q, params) @ qdd
        + coriolis_vector((q, qd), params)
        + gravity_gradient(q, params)
        + elastic_gradient(q, params, rest)
        + B * qd
    )


def rbd_hamiltonian(state, params: RobotParams, rest=None) -> float:
    q, _ = _split(state)
    v_g, v_e = potential_energy(q, params, rest)
    return kinetic_energy(state, params) + v_g + v_e


def energy_breakdown(state, params: RobotParams, rest=None) -> EnergyBreakdown:
    q, qd = _split(state)
    v_g, v_e = potential_energy(q, params, rest)
    B = damping_coefficients(params)
    return EnergyBreakdown(kinetic_energy(state, params), v_g, v_e, float(qd @ (B * qd)))


def forward_dynamics(state, u, params: RobotParams, rest=None, B: np.ndarray | None = None) -> np.ndarray:
    """Joint accelerations produced by generalized forces ``u``."""
    q, qd = _split(state)
    if B is None:
        B = damping_coefficients(params)
    bias = (
        coriolis_vector((q, qd), params)
        + gravity_gradient(q, params)
        + elastic_gradient(q, params, rest)
        + B * qd
    )
    return np.linalg.solve(mass_matrix(q, params), np.asarray(u, dtype=float) - bias)


def forward_integrate(
    initial,
    control: Callable[[float], np.ndarray],
    dt: float,
    horizon: float,
    params: RobotParams,
    rest=None,
) -> Trajectory:
    """Explicit-Euler rollout of the manipulator under ``control(t)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(round(horizon / dt))
    q, qd = (np.array(a, dtype=float) for a in _split(initial))
    B = damping_coefficients(params)
    ts = np.arange(n + 1) * dt
    qs = np.empty((n + 1, 4))
    qds = np.empty((n + 1, 4))
    qs[0], qds[0] = q, qd
    for k in range(n):
        t = ts[k]
        try:
            qdd = forward_dynamics((q, qd), control(t), params, rest, B)
        except np.linalg.LinAlgError:
            raise IntegrationError("singular mass matrix", t, q, qd) from None
        if not np.all(np.isfinite(qdd)):
            raise IntegrationError("non-finite acceleration", t, q, qd)
        q = q + dt * qd
        qd = qd + dt * qdd
        qs[k + 1], qds[k + 1] = q, qd
    return Trajectory(ts, qs, qds)
