"""Closed-form minimum-acceleration trajectories, one double integrator per joint.

Minimizing ``int u^2/2`` subject to ``qdd = u`` gives a constant position
costate ``lambda_q = c1`` and a velocity costate ``lambda_v = -(c1 t + c2)``,
so ``u* = -lambda_v`` is affine in time and the position is the cubic

    q(t) = c1 t^3/6 + c2 t^2/2 + c3 t + c4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParameterError


@dataclass(frozen=True)
class BoundaryConditions:
    q0: float
    qf: float
    v0: float
    vf: float
    tf: float

    def __post_init__(self) -> None:
        vals = (self.q0, self.qf, self.v0, self.vf, self.tf)
        if not np.all(np.isfinite(vals)):
            raise ParameterError("boundary conditions must be finite")
        if not self.tf > 0:
            raise ParameterError(f"horizon tf must be positive, got {self.tf!r}")


def boundary_matrix(tf: float) -> np.ndarray:
    """Left-hand side mapping ``(c1..c4)`` to ``(vf, qf, v0, q0)``."""
    return np.array(
        [
            [tf**2 / 2.0, tf, 1.0, 0.0],
            [tf**3 / 6.0, tf**2 / 2.0, tf, 1.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def solve_boundary(bc: BoundaryConditions) -> np.ndarray:
    """Cubic coefficients ``(c1, c2, c3, c4)`` meeting both endpoint states."""
    tf = bc.tf
    dv = bc.vf - bc.v0
    dq = bc.qf - bc.q0 - bc.v0 * tf
    c1 = (6.0 * dv * tf - 12.0 * dq) / tf**3
    c2 = (6.0 * dq - 2.0 * dv * tf) / tf**2
    return np.array([c1, c2, bc.v0, bc.q0])


def _poly(c: np.ndarray, t):
    c1, c2, c3, c4 = c
    q = c1 * t**3 / 6.0 + c2 * t**2 / 2.0 + c3 * t + c4
    v = c1 * t**2 / 2.0 + c2 * t + c3
    a = c1 * t + c2
    return q, v, a


@dataclass(frozen=True)
class PmpTrajectory:
    """Per-joint cubic coefficients (rows) and horizons.

    A joint with a zero horizon holds its initial value.
    """

    coeffs: np.ndarray
    tf: np.ndarray
    t0: float = 0.0
    qf: np.ndarray = field(init=False, repr=False)
    vf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        tf = np.atleast_1d(np.asarray(self.tf, dtype=float))
        if coeffs.shape != (tf.size, 4):
            raise ParameterError("need one coefficient row per horizon")
        if np.any(tf < 0):
            raise ParameterError("horizons must be non-negative")
        q_end, v_end, _ = _poly(coeffs.T, tf)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "tf", tf)
        object.__setattr__(self, "qf", np.asarray(q_end, dtype=float))
        object.__setattr__(self, "vf", np.asarray(v_end, dtype=float))

    @classmethod
    def from_boundaries(cls, q0, qf, tf, v0=None, vf=None, t0: float = 0.0) -> "PmpTrajectory":
        q0 = np.atleast_1d(np.asarray(q0, dtype=float))
        qf = np.atleast_1d(np.asarray(qf, dtype=float))
        tf = np.broadcast_to(np.asarray(tf, dtype=float), q0.shape)
        v0 = np.zeros_like(q0) if v0 is None else np.atleast_1d(np.asarray(v0, dtype=float))
        vf = np.zeros_like(q0) if vf is None else np.atleast_1d(np.asarray(vf, dtype=float))
        rows = []
        for j in range(q0.size):
            if tf[j] == 0.0:
                if qf[j] != q0[j] or v0[j] != 0.0 or vf[j] != 0.0:
                    raise ParameterError(f"joint {j}: zero horizon requires a stationary joint")
                rows.append(np.array([0.0, 0.0, 0.0, q0[j]]))
            else:
                rows.append(solve_boundary(BoundaryConditions(q0[j], qf[j], v0[j], vf[j], tf[j])))
        return cls(np.array(rows), np.array(tf, dtype=float), t0)

    @property
    def n_joints(self) -> int:
        return self.tf.size

    @property
    def duration(self) -> float:
        return float(self.tf.max()) if self.tf.size else 0.0

    def eval(self, joint: int, t: float) -> tuple[float, float, float]:
        """``(q, qd, qdd)`` of one joint at local time ``t``; held after ``tf``."""
        if t < 0:
            raise ParameterError("evaluation time must be non-negative")
        if t >= self.tf[joint]:
            return float(self.qf[joint]), float(self.vf[joint]), 0.0
        q, v, a = _poly(self.coeffs[joint], t)
        return float(q), float(v), float(a)

    def sample(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized evaluation: arrays shaped ``(len(t), n_joints)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0):
            raise ParameterError("evaluation time must be non-negative")
        tt = t[:, None]
        q, v, a = _poly(self.coeffs.T[:, None, :], tt)
        after = tt >= self.tf[None, :]
        q = np.where(after, self.qf[None, :], q)
        v = np.where(after, self.vf[None, :], v)
        a = np.where(after, 0.0, a)
        return q, v, a


def eval(traj: PmpTrajectory, joint: int, t: float) -> tuple[float, float, float]:
    return traj.eval(joint, t)


# ---------------------------------------------------------------------------
# optimality check


@dataclass(frozen=True)
class OptimalityReport:
    cost: float
    perturbation_scales: np.ndarray
    cost_increase: np.ndarray
    costate_constant: bool
    control_affine: bool

    @property
    def optimal(self) -> bool:
        nonzero = self.perturbation_scales != 0
        return bool(
            np.all(self.cost_increase[nonzero] > 0) and self.costate_constant and self.control_affine
        )


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def acceleration_cost(accel_poly: np.polynomial.Polynomial, tf: float) -> float:
    """``int_0^tf qdd^2/2 dt`` by Gauss-Legendre, exact for these degrees."""
    t = 0.5 * tf * (_GL_NODES + 1.0)
    return float(0.5 * tf * np.sum(_GL_WEIGHTS * 0.5 * accel_poly(t) ** 2))


def bump(tf: float, order: int = 0) -> np.polynomial.Polynomial:
    """Admissible variation ``t^2 (t - tf)^2 t^order``; value and slope vanish at both ends."""
    P = np.polynomial.Polynomial
    return P([0, 0, 1]) * P([-tf, 1]) ** 2 * P([0, 1]) ** order


def verify_optimality(traj: PmpTrajectory, joint: int, n_perturbations: int = 8, seed: int = 0) -> OptimalityReport:
    tf = float(traj.tf[joint])
    if tf <= 0:
        raise ParameterError("joint has no motion to verify")
    c1, c2, _, _ = traj.coeffs[joint]
    P = np.polynomial.Polynomial
    accel = P([c2, c1])
    base = acceleration_cost(accel, tf)
    rng = np.random.default_rng(seed)
    scales = np.concatenate([[0.0], rng.uniform(-1.0, 1.0, n_perturbations) * max(1.0, abs(c1))])
    increases = []
    for k, eps in enumerate(scales):
        delta = bump(tf, order=k % 3).deriv(2)
        increases.append(acceleration_cost(accel + eps * delta, tf) - base)
    # u* = -lambda_v, and lambda_q = -d(lambda_v)/dt = du*/dt must be constant
    ts = np.linspace(0.0, tf, 7)[:-1]
    u = np.array([traj.eval(joint, t)[2] for t in ts])
    lam_q = np.diff(u) / np.diff(ts)
    scale = max(1.0, float(np.max(np.abs(u))))
    return OptimalityReport(
        cost=base,
        perturbation_scales=scales,
        cost_increase=np.array(increases),
        costate_constant=bool(np.ptp(lam_q) <= 1e-8 * max(1.0, abs(c1))),
        control_affine=bool(np.all(np.abs(np.diff(u, 2)) <= 1e-8 * scale)),
    )
