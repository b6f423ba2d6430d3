"""Gradient-descent time-horizon estimator.

Each joint descends a physics-informed cost, the rigid-body Hamiltonian
plus end-effector and link-1 height errors weighted by the inverse of the
operational-space inertia, until it settles within tolerance of its target.
The iteration at which a joint freezes, times ``dt``, is its time horizon.

The joint-space target ``q^d`` is the stationary point of the weighted
error terms.  It is found by a damped Gauss-Newton solve whose metric is
the joint no-load speed, so slow joints are asked to move only when the
fast ones cannot reach, and it is refined every iteration with the frozen
joints held fixed.  The virtual springs relax at ``q^d``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import gravity_gradient, kinetic_energy, kinetic_gradient, mass_matrix, potential_energy
from .kinematics import JointState, body_positions, is_reachable, link1_scale, velocity_jacobians
from .params import GdthConfig, ParameterError, RobotParams
from .structural import u_phi0


class UnreachableTarget(ParameterError):
    pass


class StallWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class GdthTarget:
    ee_target: np.ndarray
    z1_target: float | None = None
    m_obj: float = 0.0
    tolerance: float = 0.0254  # end-effector error accepted as converged, m

    def __post_init__(self) -> None:
        ee = np.asarray(self.ee_target, dtype=float).reshape(3)
        if not np.all(np.isfinite(ee)):
            raise ParameterError("ee_target must be finite")
        if self.z1_target is not None and not math.isfinite(self.z1_target):
            raise ParameterError("z1_target must be finite")
        if not self.m_obj >= 0:
            raise ParameterError(f"m_obj must be non-negative, got {self.m_obj!r}")
        if not self.tolerance > 0:
            raise ParameterError("tolerance must be positive")
        object.__setattr__(self, "ee_target", ee)


@dataclass(frozen=True)
class SpatialWeights:
    ee: np.ndarray  # (beta_x, beta_y, beta_z)
    link1: np.ndarray  # (beta_x1, beta_y1, beta_z1)

    def __post_init__(self) -> None:
        for name in ("ee", "link1"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(3)
            if not (np.all(np.isfinite(v)) and np.all(v > 0)):
                raise ParameterError(f"spatial weights ({name}) must be positive and finite")
            object.__setattr__(self, name, v)

    def scaled(self, factor: float) -> "SpatialWeights":
        return SpatialWeights(self.ee * factor, self.link1 * factor)


@dataclass(frozen=True)
class OperationalInertia:
    matrix: np.ndarray
    eigenvalues: np.ndarray  # of J M^-1 J^T, ascending
    degenerate: bool


@dataclass(frozen=True)
class VelocityInit:
    v0: np.ndarray
    stalled: np.ndarray  # joints whose gravity/reaction torque exceeds stall


@dataclass
class GdthTrace:
    q: list = field(default_factory=list)
    qdot: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    ee_error: list = field(default_factory=list)

    def append(self, q, qdot, cost: float, ee_error: float) -> None:
        self.q.append(np.array(q))
        self.qdot.append(np.array(qdot))
        self.cost.append(float(cost))
        self.ee_error.append(float(ee_error))

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "q": np.array(self.q).reshape(-1, 4),
            "qdot": np.array(self.qdot).reshape(-1, 4),
            "cost": np.array(self.cost),
            "ee_error": np.array(self.ee_error),
        }

    def __len__(self) -> int:
        return len(self.cost)


@dataclass(frozen=True)
class GdthResult:
    q_star: np.ndarray
    horizons: np.ndarray  # (t_r, t_theta1, t_theta2, t_phi), s
    iterations: int
    trace: GdthTrace
    converged: bool
    ee_error: float  # final Euclidean end-effector error, m
    frozen: np.ndarray
    freeze_iter: np.ndarray  # -1 for joints still free at exit
    q_des: np.ndarray
    stalled: np.ndarray


# ---------------------------------------------------------------------------
# weights


def operational_inertia(state, params: RobotParams, body: str = "s_obj", M: np.ndarray | None = None, rcond: float = 1e-9) -> OperationalInertia:
    """``Lambda = (J M^-1 J^T)^-1`` at one body; a pseudo-inverse when rank deficient."""
    q = state.q if isinstance(state, JointState) else np.asarray(state, dtype=float)
    if M is None:
        M = mass_matrix(q, params)
    J = getattr(velocity_jacobians(q, params.geometry), body)
    A = J @ np.linalg.solve(M, J.T)
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    keep = w > rcond * max(w[-1], 0.0)
    inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    lam = (V * inv) @ V.T
    return OperationalInertia(0.5 * (lam + lam.T), w, bool(not keep.all()))


def _weights_from(lam_ee: np.ndarray, lam_1: np.ndarray, eps: float) -> SpatialWeights:
    return SpatialWeights(1.0 / (np.abs(np.diag(lam_ee)) + eps), 1.0 / (np.abs(np.diag(lam_1)) + eps))


def weight_calculation(state, m_obj: float, params: RobotParams, M: np.ndarray | None = None) -> SpatialWeights:
    """``beta_i = 1/(|Lambda_ii| + eps)`` for the end-effector and link 1."""
    params = params.with_payload(m_obj)
    q = state.q if isinstance(state, JointState) else np.asarray(state, dtype=float)
    if M is None:
        M = mass_matrix(q, params)
    lam_ee = operational_inertia(q, params, "s_obj", M).matrix
    lam_1 = operational_inertia(q, params, "s1", M).matrix
    return _weights_from(lam_ee, lam_1, params.gdth.epsilon_lambda)


# ---------------------------------------------------------------------------
# cost


def _split(state) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(state, JointState):
        return state.q, state.qdot
    if isinstance(state, tuple):
        q, qd = state
        return np.asarray(q, dtype=float), np.asarray(qd, dtype=float)
    q = np.asarray(state, dtype=float)
    return q, np.zeros_like(q)


def _z1_scale(params: RobotParams) -> float:
    return link1_scale(params.geometry) if params.gdth.z1_mode == "scaled" else 1.0


def task_errors(state, target: GdthTarget, params: RobotParams) -> tuple[np.ndarray, np.ndarray]:
    """End-effector error and link-1 error; the latter only has a z entry."""
    q, _ = _split(state)
    pos = body_positions(q, params.geometry)
    e_ee = pos.s_obj - target.ee_target
    e_1 = np.zeros(3)
    if target.z1_target is not None:
        e_1[2] = pos.s1[2] - _z1_scale(params) * target.z1_target
    return e_ee, e_1


def _rest(params: RobotParams, rest) -> np.ndarray:
    return np.asarray(params.rest if rest is None else rest, dtype=float)


def error_cost(state, target: GdthTarget, weights: SpatialWeights, params: RobotParams) -> float:
    e_ee, e_1 = task_errors(state, target, params)
    w = params.gdth.error_gain
    return 0.5 * w * float(e_ee @ (weights.ee * e_ee) + e_1 @ (weights.link1 * e_1))


def cost(state, target: GdthTarget, weights: SpatialWeights, params: RobotParams, rest=None) -> float:
    """``H + g_e (e_EE^T R_EE e_EE + e_1^T R_1 e_1)/2``.

    ``g_e`` (``gdth.error_gain``) converts the weighted squared error, in
    m^2/kg, into joules so it can be added to the Hamiltonian.
    """
    q, qd = _split(state)
    v_g, v_e = potential_energy(q, params, _rest(params, rest))
    return kinetic_energy((q, qd), params) + v_g + v_e + error_cost((q, qd), target, weights, params)


def error_gradient(state, target: GdthTarget, weights: SpatialWeights, params: RobotParams) -> np.ndarray:
    q, _ = _split(state)
    e_ee, e_1 = task_errors(q, target, params)
    jac = velocity_jacobians(q, params.geometry)
    g = jac.s_obj.T @ (weights.ee * e_ee) + jac.s1.T @ (weights.link1 * e_1)
    return params.gdth.error_gain * g


def cost_gradient(state, target: GdthTarget, weights: SpatialWeights, params: RobotParams, rest=None) -> np.ndarray:
    """``dJ/dq`` at fixed rates and weights."""
    q, qd = _split(state)
    return (
        kinetic_gradient((q, qd), params)
        + gravity_gradient(q, params)
        + params.stiffness * (q - _rest(params, rest))
        + error_gradient((q, qd), target, weights, params)
    )


# ---------------------------------------------------------------------------
# initialization and limits


def initial_torque(state, m_obj: float, params: RobotParams) -> np.ndarray:
    """Gravity gradient on ``(r, theta1, theta2)`` plus the azimuth reaction torque."""
    params = params.with_payload(m_obj)
    q, _ = _split(state)
    tau = gravity_gradient(q, params)
    tau[3] = u_phi0(q, params)
    return tau


def initial_velocity(direction, tau0, params: RobotParams, m_obj: float) -> VelocityInit:
    """No-load speed scaled by each joint's torque headroom.

    Headroom is ``1 - |tau0_j| / stall_j`` with ``stall_j`` that joint's
    effective stall; the radial speed also carries the mass ratio.
    """
    params = params.with_payload(m_obj)
    direction = np.sign(np.asarray(direction, dtype=float))
    tau0 = np.abs(np.asarray(tau0, dtype=float))
    stall = params.effective_stalls
    headroom = 1.0 - tau0 / stall
    stalled = headroom < 0
    if stalled.any():
        warnings.warn(
            f"initial torque exceeds stall on joints {np.flatnonzero(stalled).tolist()}",
            StallWarning,
            stacklevel=2,
        )
    v0 = params.speed_limits * direction * np.clip(headroom, 0.0, None)
    return VelocityInit(v0, stalled)


def clamp_controls(qdot, params: RobotParams, m_obj: float | None = None) -> np.ndarray:
    """Clip each rate to its no-load bound, keeping its sign."""
    if m_obj is not None:
        params = params.with_payload(m_obj)
    limit = params.speed_limits
    return np.clip(np.asarray(qdot, dtype=float), -limit, limit)


# ---------------------------------------------------------------------------
# joint-space target


def _seed_azimuth(q: np.ndarray, target: GdthTarget) -> np.ndarray:
    """Turn the azimuth to face the target, by the shorter way round."""
    s = q.copy()
    x, y = target.ee_target[:2]
    if math.hypot(x, y) > 0:
        want = math.atan2(y, x)
        s[3] = q[3] + math.remainder(want - q[3], 2.0 * math.pi)
    return s


def joint_target(
    q_start,
    target: GdthTarget,
    weights: SpatialWeights,
    params: RobotParams,
    free=None,
    iterations: int = 100,
    damping: float = 1e-10,
    tol: float = 1e-12,
    max_step: float = 0.25,
    metric: str = "speed",
) -> np.ndarray:
    """Stationary point of the weighted error terms, from ``q_start``.

    Damped Gauss-Newton in a joint metric.  ``metric="speed"`` is
    proportional to the squared no-load speed, so a step costs roughly the
    time it takes; ``metric="stroke"`` uses the squared joint strokes, which
    lets the slow rod take its share near the edge of the workspace.  Each
    step moves an angle by at most ``max_step`` rad and the rod by at most
    ``max_step`` of its stroke.  Joints with ``free[j] == False`` are held.
    """
    q = np.array(q_start, dtype=float)
    free = np.ones(4, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    if metric == "speed":
        scale = params.speed_limits / params.actuators.omega_nl
    elif metric == "stroke":
        scale = np.asarray(params.geometry.strokes, dtype=float)
    else:
        raise ParameterError(f"unknown metric {metric!r}")
    metric = scale**2 * free
    geom = params.geometry
    cap = max_step * np.array([geom.r_ext, 1.0, 1.0, 1.0])
    use_z1 = target.z1_target is not None
    sq_ee = np.sqrt(weights.ee)
    sq_1 = math.sqrt(weights.link1[2])
    for _ in range(iterations):
        e_ee, e_1 = task_errors(q, target, params)
        jac = velocity_jacobians(q, geom)
        A = sq_ee[:, None] * jac.s_obj
        res = sq_ee * e_ee
        if use_z1:
            A = np.vstack([A, sq_1 * jac.s1[2]])
            res = np.append(res, sq_1 * e_1[2])
        AW = A * metric
        step = -metric * (A.T @ np.linalg.solve(AW @ A.T + damping * np.eye(A.shape[0]), res))
        size = float(np.max(np.abs(step) / cap))
        if size > 1.0:
            step /= size
        q = q + step
        q[0] = min(max(q[0], 0.0), geom.r_ext)
        if size * max_step < tol:
            break
    return q


# ---------------------------------------------------------------------------
# the estimator


def momentum_step(n, grad, beta) -> np.ndarray:
    """``n <- beta*n + (1 - beta)*grad``; with a fixed gradient ``n - grad`` shrinks by ``beta`` each step."""
    beta = np.asarray(beta, dtype=float)
    return beta * np.asarray(n, dtype=float) + (1.0 - beta) * np.asarray(grad, dtype=float)


def learning_rate(alpha0, eta: float, t: float):
    """Decayed step size ``alpha0 / (1 + eta*t)``, positive and strictly decreasing in ``t``."""
    return np.asarray(alpha0, dtype=float) / (1.0 + eta * t)


def run(target: GdthTarget, initial, config: GdthConfig | None = None, params: RobotParams | None = None, keep_trace: bool = True) -> GdthResult:
    if params is None:
        raise ParameterError("run needs robot parameters")
    config = params.gdth if config is None else config
    config.validate()
    params = params.with_payload(target.m_obj)
    if config is not params.gdth:
        params = replace(params, gdth=config)
    geom = params.geometry
    if not is_reachable(target.ee_target, geom):
        raise UnreachableTarget(f"target {target.ee_target.tolist()} lies outside the reachable annulus")

    state = initial if isinstance(initial, JointState) else JointState.at_rest(initial)
    q = state.q.copy()
    q[0] = min(max(q[0], 0.0), geom.r_ext)
    dt = config.dt
    tol = config.tolerances
    alpha = np.asarray(config.alpha0, dtype=float).copy()
    beta_m = np.asarray(config.momentum_beta, dtype=float)
    limits = params.speed_limits

    M = mass_matrix(q, params)
    weights = weight_calculation(q, target.m_obj, params, M)
    q_des = joint_target(_seed_azimuth(q, target), target, weights, params)
    if np.linalg.norm(task_errors(q_des, target, params)[0]) > config.ee_tol:
        # near the reach limit the speed metric starves the rod; let it extend
        q_des = joint_target(q_des, target, weights, params, metric="stroke")
    e_gen = q_des - q
    init = initial_velocity(e_gen, initial_torque(q, target.m_obj, params), params, target.m_obj)
    qd = init.v0.copy()

    n = np.zeros(4)
    frozen = np.zeros(4, dtype=bool)
    freeze_iter = np.full(4, -1)
    trace = GdthTrace()
    e_ee, _ = task_errors(q, target, params)
    err = float(np.linalg.norm(e_ee))
    if keep_trace:
        trace.append(q, qd, cost((q, qd), target, weights, params, q_des), err)

    i = 0
    while err > config.ee_tol and i < config.max_iter and not frozen.all():
        i += 1
        t_i = i * dt
        M = mass_matrix(q, params)
        weights = weight_calculation(q, target.m_obj, params, M)
        # Euler prediction, then a momentum step on the cost gradient
        x_pred = q + qd * dt
        grad = cost_gradient((q, qd), target, weights, params, rest=q_des)
        n = momentum_step(n, grad, beta_m)
        x_new = x_pred - alpha * n
        qd_new = np.clip((x_new - q) / dt, -limits, limits)
        qd_new[frozen] = 0.0
        q_new = q + qd_new * dt
        if not 0.0 <= q_new[0] <= geom.r_ext:
            q_new[0] = min(max(q_new[0], 0.0), geom.r_ext)
            qd_new[0] = (q_new[0] - q[0]) / dt
        # joint-space error against the refined target
        held = q_des.copy()
        held[frozen] = q[frozen]
        q_des = joint_target(held, target, weights, params, free=~frozen, iterations=1)
        e_gen_new = q_des - q_new
        # overshoot rollback
        over = (np.abs(e_gen_new) > np.abs(e_gen)) & ~frozen
        if over.any():
            q_new[over] = q[over]
            # the rate that overshot is dropped; keeping it repeats the overshoot
            qd_new[over] = 0.0
            # decay from the current rate, so repeated rollbacks compound
            alpha[over] = learning_rate(alpha[over], config.eta, t_i)
            e_gen_new = q_des - q_new
        # freeze once settled inside tolerance
        settle = np.abs(q_new - q) <= config.stall_fraction * tol
        fr = (np.abs(e_gen_new) <= tol) & settle & ~frozen
        if fr.any():
            q_new[fr] = q[fr]
            qd_new[fr] = 0.0
            frozen |= fr
            freeze_iter[fr] = i
            e_gen_new = q_des - q_new
        q, qd, e_gen = q_new, qd_new, e_gen_new
        e_ee, _ = task_errors(q, target, params)
        err = float(np.linalg.norm(e_ee))
        if keep_trace:
            trace.append(q, qd, cost((q, qd), target, weights, params, q_des), err)

    horizons = np.where(frozen, freeze_iter, i) * dt
    return GdthResult(
        q_star=q,
        horizons=horizons.astype(float),
        iterations=i,
        trace=trace,
        converged=bool(err <= target.tolerance),
        ee_error=err,
        frozen=frozen,
        freeze_iter=freeze_iter,
        q_des=q_des,
        stalled=init.stalled,
    )
