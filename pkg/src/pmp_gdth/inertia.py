"""Rotational inertia: state-coupled projections, the actuator rod, CAD frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import unit_vectors
from .params import InertiaSet, ParameterError


@dataclass(frozen=True)
class DiagonalTensor:
    ixx: float
    iyy: float
    izz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.ixx, self.iyy, self.izz])

    @classmethod
    def from_seq(cls, values) -> "DiagonalTensor":
        ixx, iyy, izz = (float(v) for v in values)
        return cls(ixx, iyy, izz)


@dataclass(frozen=True)
class CadOrientation:
    rx: float
    ry: float
    rz: float

    @classmethod
    def from_degrees(cls, rx: float, ry: float, rz: float) -> "CadOrientation":
        return cls(*np.radians([rx, ry, rz]))


def polar_inertia(tensor, axis_vector) -> float:
    """Inertia about ``axis_vector`` of a diagonal tensor, ``e^T I e``."""
    e = np.asarray(axis_vector, dtype=float)
    if abs(np.linalg.norm(e) - 1.0) > 1e-9:
        raise ParameterError("axis_vector must be a unit vector")
    diag = tensor.as_array() if isinstance(tensor, DiagonalTensor) else np.asarray(tensor, dtype=float)
    return float(np.dot(diag, e * e))


def actuator_tensor(r: float, rod_radius: float, rho: float) -> DiagonalTensor:
    """Solid rod of length ``r`` about its centre; zero-length gives zero."""
    if r < 0 or rod_radius <= 0:
        raise ParameterError("rod length must be >= 0 and radius > 0")
    R2 = rod_radius**2
    transverse = np.pi / 12.0 * R2 * r * rho * (3.0 * R2 + r * r)
    axial = np.pi / 2.0 * R2 * R2 * r * rho
    return DiagonalTensor(transverse, transverse, axial)


def actuator_polar_inertia(state, rod_radius: float, rho: float) -> float:
    """Rod inertia about the elbow axis, in the expanded trigonometric form."""
    q = state.q if hasattr(state, "q") else np.asarray(state, dtype=float)
    r, t1, t2 = q[0], q[1], q[2]
    if r < 0:
        raise ParameterError("rod length must be non-negative")
    R2 = rod_radius**2
    s2 = np.sin(t1 + t2) ** 2
    return float(np.pi / 12.0 * R2 * r * rho * (3.0 * R2 * s2 - r * r * s2 + 3.0 * R2 + r * r))


def rod_azimuthal_terms(r: float, rod_radius: float, rho: float) -> float:
    """Rod contribution to the azimuthal inertia, ``pi/12 R^2 r^3 rho + pi/4 R^4 r rho``."""
    R2 = rod_radius**2
    return float(np.pi / 12.0 * R2 * r**3 * rho + np.pi / 4.0 * R2 * R2 * r * rho)


def equivalent_azimuthal_inertia(state, tensors: InertiaSet, rod_radius: float, rho: float) -> float:
    q = state.q if hasattr(state, "q") else np.asarray(state, dtype=float)
    c2 = np.cos(q[3]) ** 2
    s2 = 1.0 - c2
    total = 0.0
    for ixx, iyy, _ in (tensors.base, tensors.link1, tensors.link2):
        total += ixx * c2 + iyy * s2
    return float(total + rod_azimuthal_terms(max(q[0], 0.0), rod_radius, rho))


def link_polar_inertias(state, tensors: InertiaSet, geom) -> tuple[float, float]:
    """Link-1 inertia about ``e_theta1`` and link-2 inertia about ``e_theta12``."""
    b = unit_vectors(state, geom)
    return polar_inertia(tensors.link1, b.e_theta1), polar_inertia(tensors.link2, b.e_theta12)


def rotation_matrix(orient: CadOrientation) -> np.ndarray:
    """Composite ``Rz @ Ry @ Rx`` from the CAD principal-axis angles."""
    cx, sx = np.cos(orient.rx), np.sin(orient.rx)
    cy, sy = np.cos(orient.ry), np.sin(orient.ry)
    cz, sz = np.cos(orient.rz), np.sin(orient.rz)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def symmetrize(tensor) -> np.ndarray:
    """Mirror a triangular tensor listing into a full symmetric matrix.

    CAD exports sometimes print only one triangle; entries are taken from
    whichever triangle is populated, the other is treated as absent.
    """
    t = np.asarray(tensor, dtype=float)
    lower = np.tril(t, -1)
    upper = np.triu(t, 1)
    off = np.where(np.abs(lower) >= np.abs(upper.T), lower, upper.T)
    return np.diag(np.diag(t)) + off + off.T


def cad_to_dynamic(tensor, orient: CadOrientation) -> np.ndarray:
    """Express a CAD-frame tensor in the dynamic frame, ``R0^T I R0``."""
    if isinstance(tensor, DiagonalTensor):
        full = np.diag(tensor.as_array())
    else:
        full = np.asarray(tensor, dtype=float)
        if full.shape == (3,):
            full = np.diag(full)
    if not np.all(np.isfinite([orient.rx, orient.ry, orient.rz])):
        raise ParameterError("orientation angles must be finite")
    R0 = rotation_matrix(orient)
    out = R0.T @ full @ R0
    return 0.5 * (out + out.T)


def parallel_axis(tensor, mass: float, offset, diagonal_only: bool = False) -> np.ndarray:
    """Shift a centroidal tensor by ``offset``: ``I + m(|d|^2 E - d d^T)``.

    ``diagonal_only`` drops the product-of-inertia shift terms.
    """
    if mass < 0:
        raise ParameterError("mass must be non-negative")
    I = np.asarray(tensor, dtype=float)
    d = np.asarray(offset, dtype=float)
    shift = mass * (np.dot(d, d) * np.eye(3) - np.outer(d, d))
    if diagonal_only:
        shift = np.diag(np.diag(shift))
    return I + shift
