"""Gearshaft reaction equilibrium for the azimuth drive.

Unknowns are ordered ``(A_x, A_y, u_phi0, B_x, B_y, B_z)``.  The six rows
are, in order: force balance in x, moment balance about x, force balance
in y, moment balance about y, force balance in z, moment balance about z.
Gravity loads come from every body of the arm, base frame included; the
claw rides with the payload at the grasp point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .kinematics import body_positions
from .params import GearTrainParams, GeometryParams, MassParams, ParameterError, RobotParams


class SingularGearGeometry(ParameterError):
    pass


@dataclass(frozen=True)
class ReactionSolution:
    a_x: float
    a_y: float
    u_phi0: float
    b_x: float
    b_y: float
    b_z: float
    residual: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.a_x, self.a_y, self.u_phi0, self.b_x, self.b_y, self.b_z])


@dataclass(frozen=True)
class TorqueSurface:
    theta1: np.ndarray
    theta2: np.ndarray
    u_phi0: np.ndarray  # |u_phi0|, indexed [i_theta1, i_theta2]
    stall: float
    m_obj: float

    @property
    def peak(self) -> float:
        return float(np.max(self.u_phi0))

    def exceeds(self) -> np.ndarray:
        return self.u_phi0 > self.stall


@dataclass(frozen=True)
class GridSpec:
    theta1: tuple[float, float] = (0.0, math.pi / 2)
    theta2: tuple[float, float] = (0.0, math.pi / 2)
    n1: int = 31
    n2: int = 31
    phi: float = 0.0
    r: float | None = None  # defaults to full extension

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n1 < 1 or self.n2 < 1:
            raise ParameterError("torque surface grid must be non-empty")
        return np.linspace(*self.theta1, self.n1), np.linspace(*self.theta2, self.n2)


@dataclass(frozen=True)
class CapacityResult:
    mass: float
    bounded: bool
    slope: float  # d max|u_phi0| / d m_obj at the critical node


def _moment_sums(state, masses: MassParams, geom: GeometryParams) -> tuple[float, float, float]:
    """``(sum m*x, sum m*y, sum m)`` over every loaded body."""
    pos = body_positions(state, geom)
    items = (
        (masses.m_bf, pos.s0),
        (masses.m1, pos.s1),
        (masses.m2, pos.s2),
        (masses.m_act, pos.s_act),
        (masses.claw_load, pos.s_obj),
    )
    sx = sum(m * p[0] for m, p in items)
    sy = sum(m * p[1] for m, p in items)
    sm = sum(m for m, _ in items)
    return float(sx), float(sy), float(sm)


def assemble_system(state, masses: MassParams, gear: GearTrainParams, geom: GeometryParams, g: float = 9.81):
    """Stiffness matrix ``K`` and load vector ``q`` with ``K @ R = q``."""
    Gp, Ra = gear.g_p, gear.r_avg
    tpsi, tvar = math.tan(gear.psi), math.tan(gear.varphi)
    K = np.array(
        [
            [1.0, 0.0, -Gp * tpsi / Ra, 1.0, 0.0, 0.0],
            [0.0, 0.0, Gp * gear.h_w / Ra, 0.0, gear.cap_h_w, gear.l_gy],
            [0.0, 1.0, Gp / Ra, 0.0, 1.0, 0.0],
            [0.0, 0.0, Gp * tvar + Gp * gear.h_w * tpsi / Ra, -gear.cap_h_w, 0.0, -gear.l_gx],
            [0.0, 0.0, -Gp * tvar / Ra, 0.0, 0.0, 1.0],
            [0.0, 0.0, Gp, -gear.l_gy, gear.l_gx, 0.0],
        ]
    )
    sx, sy, sm = _moment_sums(state, masses, geom)
    load = np.array([0.0, g * sy, 0.0, -g * sx, g * sm, 0.0])
    return K, load


def _check_geometry(gear: GearTrainParams) -> None:
    if abs(gear.denominator) < 1e-12:
        raise SingularGearGeometry(
            "reaction system is singular: G_p*(h_w*l_Gx - H_w*R_avg + R_avg*l_Gy*tan(varphi)"
            " + h_w*l_Gy*tan(psi)) vanishes"
        )
    if abs(gear.cap_h_w) < 1e-12:
        raise SingularGearGeometry("reaction system is singular: motor-shaft height H_w vanishes")


def solve_reactions(state, masses: MassParams, gear: GearTrainParams, geom: GeometryParams, g: float = 9.81) -> ReactionSolution:
    _check_geometry(gear)
    K, load = assemble_system(state, masses, gear, geom, g)
    R = np.linalg.solve(K, load)
    residual = float(np.max(np.abs(K @ R - load)))
    return ReactionSolution(*R, residual=residual)


def closed_form_u_phi0(state, masses: MassParams, gear: GearTrainParams, geom: GeometryParams, g: float = 9.81) -> float:
    den = gear.denominator
    if abs(den) < 1e-12:
        _check_geometry(gear)
    sx, sy, _ = _moment_sums(state, masses, geom)
    return gear.r_avg * g * (gear.l_gx * sy - gear.l_gy * sx) / den


def u_phi0(state, params: RobotParams) -> float:
    return closed_form_u_phi0(state, params.masses, params.gear, params.geometry, params.g)


def _grid_states(grid: GridSpec, geom: GeometryParams):
    t1, t2 = grid.axes()
    r = geom.r_ext if grid.r is None else grid.r
    return t1, t2, r


def torque_surface(params: RobotParams, grid: GridSpec = GridSpec(), m_obj: float | None = None) -> TorqueSurface:
    """``|u_phi0|`` over a ``(theta1, theta2)`` grid against the azimuth stall plane."""
    if m_obj is not None:
        params = params.with_payload(m_obj)
    t1, t2, r = _grid_states(grid, params.geometry)
    values = np.empty((t1.size, t2.size))
    for i, a in enumerate(t1):
        for j, b in enumerate(t2):
            values[i, j] = abs(u_phi0(np.array([r, a, b, grid.phi]), params))
    stall = float(params.effective_stalls[3])
    return TorqueSurface(t1, t2, values, stall, params.masses.m_obj)


def max_over_phi(params: RobotParams, grid: GridSpec = GridSpec(), n_phi: int = 36) -> TorqueSurface:
    """Conservative surface: worst case over the azimuth at each grid node."""
    surfaces = [
        torque_surface(params, GridSpec(grid.theta1, grid.theta2, grid.n1, grid.n2, phi, grid.r))
        for phi in np.linspace(0.0, 2 * math.pi, n_phi, endpoint=False)
    ]
    peak = np.max([s.u_phi0 for s in surfaces], axis=0)
    s0 = surfaces[0]
    return TorqueSurface(s0.theta1, s0.theta2, peak, s0.stall, s0.m_obj)


def _affine_terms(params: RobotParams, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-node ``u = a + b*m_obj`` coefficients from two evaluations."""
    u0 = torque_surface_signed(params.with_payload(0.0), grid)
    u1 = torque_surface_signed(params.with_payload(1.0), grid)
    return u0.ravel(), (u1 - u0).ravel()


def torque_surface_signed(params: RobotParams, grid: GridSpec) -> np.ndarray:
    t1, t2, r = _grid_states(grid, params.geometry)
    return np.array([[u_phi0(np.array([r, a, b, grid.phi]), params) for b in t2] for a in t1])


def payload_capacity(params: RobotParams, grid: GridSpec = GridSpec(), stall: float | None = None) -> CapacityResult:
    """Largest payload keeping ``max |u_phi0|`` over the grid at or below stall.

    ``u_phi0`` is affine in the payload at a fixed pose, so each node's
    crossing is solved directly.
    """
    stall = float(params.effective_stalls[3]) if stall is None else float(stall)
    a, b = _affine_terms(params, grid)
    if np.max(np.abs(a)) >= stall:
        k = int(np.argmax(np.abs(a)))
        return CapacityResult(0.0, True, float(abs(b[k])))
    best = math.inf
    slope = 0.0
    for ai, bi in zip(a, b):
        if bi == 0.0:
            continue
        # first m >= 0 with |a + b m| = stall
        roots = [(s * stall - ai) / bi for s in (1.0, -1.0)]
        roots = [m for m in roots if m >= 0.0]
        if roots and min(roots) < best:
            best = min(roots)
            slope = abs(bi)
    if math.isinf(best):
        return CapacityResult(math.inf, False, 0.0)
    return CapacityResult(float(best), True, slope)


def payload_capacity_bisect(params: RobotParams, grid: GridSpec = GridSpec(), stall: float | None = None, tol: float = 1e-4, m_max: float = 1e4) -> float:
    """Bisection on the peak surface value; the check for :func:`payload_capacity`."""
    stall = float(params.effective_stalls[3]) if stall is None else float(stall)

    def excess(m: float) -> float:
        return float(np.max(np.abs(torque_surface_signed(params.with_payload(m), grid)))) - stall

    if excess(0.0) >= 0:
        return 0.0
    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > m_max:
            return math.inf
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_gear(params: RobotParams, target_mass: float, grid: GridSpec = GridSpec(), field: str = "cap_h_w", bracket: tuple[float, float] | None = None) -> GearTrainParams:
    """Fit one gear dimension so the payload capacity equals ``target_mass``."""
    current = getattr(params.gear, field)
    lo, hi = bracket if bracket is not None else (0.5 * current, 1.5 * current)

    def f(x: float) -> float:
        p = params.with_gear(**{field: x})
        return payload_capacity(p, grid).mass - target_mass

    x = brentq(f, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=200)
    return params.with_gear(**{field: x, "calibrated": True}).gear
