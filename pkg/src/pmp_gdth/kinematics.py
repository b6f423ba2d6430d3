"""Spherical-basis kinematics of the manipulator.

Every body sits on a chain built from the base mount ``s0 = l0*e_r0``, the
shoulder link along ``e_r1`` and the elbow link plus prismatic rod along
``e_r2``.  ``theta12 = theta1 + theta2`` is the accumulated elbow angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import GeometryParams, ParameterError

BODIES = ("s0", "s1", "s2", "s_act", "s_obj")


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=float).reshape(4)
        qd = np.zeros(4) if self.qdot is None else np.asarray(self.qdot, dtype=float).reshape(4)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ParameterError("joint state must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qd)

    @classmethod
    def at_rest(cls, q) -> "JointState":
        return cls(np.asarray(q, dtype=float), np.zeros(4))

    @property
    def r(self) -> float:
        return float(self.q[0])

    @property
    def theta1(self) -> float:
        return float(self.q[1])

    @property
    def theta2(self) -> float:
        return float(self.q[2])

    @property
    def phi(self) -> float:
        return float(self.q[3])


@dataclass(frozen=True)
class Basis:
    e_r0: np.ndarray
    e_r1: np.ndarray
    e_r2: np.ndarray
    e_theta1: np.ndarray
    e_theta12: np.ndarray
    e_phi: np.ndarray


@dataclass(frozen=True)
class BodyPositions:
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s_act: np.ndarray
    s_obj: np.ndarray


@dataclass(frozen=True)
class VelocityJacobians:
    """3x4 maps from joint rates to Cartesian velocity, one per body."""

    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s_act: np.ndarray
    s_obj: np.ndarray


def _q(state) -> np.ndarray:
    return state.q if isinstance(state, JointState) else np.asarray(state, dtype=float)


def _radial(angle: float, phi: float) -> np.ndarray:
    s = math.sin(angle)
    return np.array([math.cos(phi) * s, math.sin(phi) * s, math.cos(angle)])


def _polar(angle: float, phi: float) -> np.ndarray:
    c = math.cos(angle)
    return np.array([c * math.cos(phi), c * math.sin(phi), -math.sin(angle)])


def unit_vectors(state, geom: GeometryParams) -> Basis:
    _, t1, t2, phi = (float(v) for v in _q(state))
    t12 = t1 + t2
    return Basis(
        e_r0=_radial(geom.vartheta, phi),
        e_r1=_radial(t1, phi),
        e_r2=_radial(t12, phi),
        e_theta1=_polar(t1, phi),
        e_theta12=_polar(t12, phi),
        e_phi=np.array([-math.sin(phi), math.cos(phi), 0.0]),
    )


def grasp_length(r: float, geom: GeometryParams) -> float:
    """Distance along ``e_r2`` from the elbow to the grasp point."""
    return geom.l2 + r + geom.r_prime + geom.delta_r


def body_positions(state, geom: GeometryParams) -> BodyPositions:
    r = _q(state)[0]
    b = unit_vectors(state, geom)
    s0 = geom.l0 * b.e_r0
    elbow = s0 + geom.l1 * b.e_r1
    return BodyPositions(
        s0=s0,
        s1=s0 + geom.lbar1 * b.e_r1,
        s2=elbow + geom.lbar2 * b.e_r2,
        s_act=elbow + (geom.l2 + r) * b.e_r2,
        s_obj=elbow + grasp_length(r, geom) * b.e_r2,
    )


def velocity_jacobians(state, geom: GeometryParams) -> VelocityJacobians:
    r, t1, t2, _ = (float(v) for v in _q(state))
    b = unit_vectors(state, geom)
    s_vt = math.sin(geom.vartheta)
    s1 = math.sin(t1)
    s12 = math.sin(t1 + t2)

    def jac(radial_len: float, link1_len: float, link2_len: float, moves_r: bool) -> np.ndarray:
        # link1_len along e_r1, link2_len along e_r2 measured from the elbow
        out = np.empty((3, 4))
        out[:, 0] = b.e_r2 if moves_r else 0.0
        out[:, 2] = link2_len * b.e_theta12
        out[:, 1] = link1_len * b.e_theta1 + out[:, 2]
        out[:, 3] = (radial_len * s_vt + link1_len * s1 + link2_len * s12) * b.e_phi
        return out

    return VelocityJacobians(
        s0=jac(geom.l0, 0.0, 0.0, False),
        s1=jac(geom.l0, geom.lbar1, 0.0, False),
        s2=jac(geom.l0, geom.l1, geom.lbar2, False),
        s_act=jac(geom.l0, geom.l1, geom.l2 + r, True),
        s_obj=jac(geom.l0, geom.l1, grasp_length(r, geom), True),
    )


def forward_kinematics(state, geom: GeometryParams) -> np.ndarray:
    """Grasp-point position, the end-effector used by the planner."""
    return body_positions(state, geom).s_obj


def ee_error(state, target, geom: GeometryParams) -> np.ndarray:
    return forward_kinematics(state, geom) - np.asarray(target, dtype=float)


def link1_scale(geom: GeometryParams) -> float:
    """Ratio mapping a link-1 tip height target onto its centre of mass."""
    base = geom.l0 * np.cos(geom.vartheta)
    den = base + geom.l1
    if not den > 0:
        raise ParameterError("l0*cos(vartheta) + l1 must be positive")
    return (base + geom.lbar1) / den


def link1_z_error(state, z_des: float, geom: GeometryParams, mode: str = "scaled") -> float:
    """Height error of the link-1 centre of mass.

    ``mode="scaled"`` treats ``z_des`` as a link-tip height and rescales it to
    the centre of mass; ``mode="raw"`` compares against ``z_des`` directly.
    """
    z1 = body_positions(state, geom).s1[2]
    scale = link1_scale(geom) if mode == "scaled" else 1.0
    return float(z1 - scale * z_des)


def mount_point(target, geom: GeometryParams) -> np.ndarray:
    """Shoulder mount on the azimuth that faces ``target``."""
    phi = np.arctan2(target[1], target[0])
    return geom.l0 * _radial(geom.vartheta, phi)


def reach_bounds(geom: GeometryParams) -> tuple[float, float]:
    """Conservative annulus (about the shoulder mount) the grasp point can reach."""
    short = geom.l2 + geom.r_prime + geom.delta_r
    long = short + geom.r_ext
    upper = geom.l1 + long
    if geom.l1 > long:
        lower = geom.l1 - long
    elif geom.l1 < short:
        lower = short - geom.l1
    else:
        lower = 0.0
    # keep clear of the fully folded and fully stretched singular shells
    margin = 0.02 * upper
    return lower + margin + 0.1 * upper, upper - margin


def is_reachable(target, geom: GeometryParams) -> bool:
    target = np.asarray(target, dtype=float)
    if target.shape != (3,) or not np.all(np.isfinite(target)):
        return False
    if np.hypot(target[0], target[1]) < 1e-9:
        return False
    lo, hi = reach_bounds(geom)
    d = float(np.linalg.norm(target - mount_point(target, geom)))
    return lo <= d <= hi
