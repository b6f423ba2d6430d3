"""Physical and algorithmic constants for the 4-DOF spherical manipulator.

Joint order everywhere is ``q = (r, theta1, theta2, phi)``: radial actuator
extension (m), shoulder and elbow polar angles (rad), base azimuth (rad).

Parameter sets are frozen dataclasses; build them from a YAML file with
:func:`load_config` or take the bundled defaults from :func:`default_params`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

G_ACCEL = 9.81

JOINTS = ("r", "theta1", "theta2", "phi")


class ParameterError(ValueError):
    """Raised when a parameter violates its physical invariant."""


class ConfigError(ParameterError):
    """Raised when a configuration file is missing a field or is invalid."""


# ---------------------------------------------------------------------------
# derived-quantity helpers


def virtual_stiffness(rated: float, stroke: float) -> float:
    """Actuator compliance: rated force (or torque) over its stroke."""
    if not stroke > 0:
        raise ParameterError(f"stroke must be positive, got {stroke!r}")
    return rated / stroke


def virtual_damping(mass_scale: float, rated: float, stroke: float) -> float:
    """Critical damping ``2*sqrt(M*kappa)`` for the virtual spring."""
    if mass_scale < 0 or rated < 0:
        raise ParameterError("mass scale and rated load must be non-negative")
    return 2.0 * math.sqrt(mass_scale * virtual_stiffness(rated, stroke))


def effective_stall(tau_stall: float, eta: float, ratio: float) -> float:
    """Stall torque seen at the joint after the gear train."""
    if tau_stall <= 0 or eta <= 0 or ratio <= 0:
        raise ParameterError("stall torque, efficiency and ratio must be positive")
    return tau_stall * eta * ratio


def mass_ratio(m_claw: float, m_obj: float) -> float:
    """Claw share of the grasped mass, ``m_claw / (m_claw + m_obj)``."""
    if m_claw < 0 or m_obj < 0:
        raise ParameterError("masses must be non-negative")
    total = m_claw + m_obj
    if total <= 0:
        raise ParameterError("claw and object mass are both zero")
    return m_claw / total


# ---------------------------------------------------------------------------
# parameter groups


@dataclass(frozen=True)
class GeometryParams:
    l0: float
    vartheta: float
    l1: float
    l2: float
    lbar1: float
    lbar2: float
    delta_r: float
    r_prime: float
    rod_radius: float
    rod_cm: float  # carried for completeness, no equation consumes it
    r_ext: float
    strokes: tuple[float, float, float, float]

    def validate(self) -> None:
        for name in ("l0", "l1", "l2", "lbar1", "lbar2", "r_prime", "rod_radius", "rod_cm", "r_ext"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"geometry.{name} must be positive")
        if not 0 <= self.vartheta < math.pi / 2:
            raise ParameterError("geometry.vartheta must lie in [0, pi/2)")
        if self.lbar1 > self.l1:
            raise ParameterError("geometry.lbar1 must not exceed l1")
        if self.lbar2 > self.l2:
            raise ParameterError("geometry.lbar2 must not exceed l2")
        if self.delta_r < 0:
            raise ParameterError("geometry.delta_r must be non-negative")
        if len(self.strokes) != 4:
            raise ParameterError("geometry.strokes needs one entry per joint")
        for name, s in zip(JOINTS, self.strokes):
            if not s > 0:
                raise ParameterError(f"geometry.strokes.{name} (stroke) must be positive")

    @property
    def reach_offset(self) -> float:
        """Distance from the rod tip to the grasp point, ``r' + delta_r``."""
        return self.r_prime + self.delta_r


@dataclass(frozen=True)
class MassParams:
    m_bf: float
    m0: float
    m1: float
    m2: float
    m_act: float
    rho_act: float
    m_obj: float = 0.0

    def validate(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ParameterError(f"masses.{f.name} must be non-negative")
        if not self.rho_act > 0:
            raise ParameterError("masses.rho_act must be positive")

    @property
    def claw_load(self) -> float:
        """Point mass carried at the grasp point (claw plus payload)."""
        return self.m0 + self.m_obj


@dataclass(frozen=True)
class ActuatorRatings:
    rated: tuple[float, float, float, float]
    tau_stall: float
    radial_stall: float
    v_nl: float
    omega_nl: float
    efficiencies: tuple[float, float, float, float]
    gear_ratios: tuple[float, float, float, float]

    def validate(self) -> None:
        if not self.tau_stall > 0 or not self.radial_stall > 0:
            raise ParameterError("actuators.tau_stall and radial_stall must be positive")
        for eta in self.efficiencies:
            if not 0 < eta <= 1:
                raise ParameterError("actuators.efficiencies must lie in (0, 1]")
        for g in self.gear_ratios:
            if g < 1:
                raise ParameterError("actuators.gear_ratios must be >= 1")
        if any(u < 0 for u in self.rated):
            raise ParameterError("actuators.rated must be non-negative")
        if not self.v_nl > 0 or not self.omega_nl > 0:
            raise ParameterError("actuators no-load speeds must be positive")

    @property
    def effective_stalls(self) -> np.ndarray:
        """Per-joint stall limit: radial force, then geared joint torques."""
        out = [self.radial_stall * self.efficiencies[0] * self.gear_ratios[0]]
        for j in (1, 2, 3):
            out.append(effective_stall(self.tau_stall, self.efficiencies[j], self.gear_ratios[j]))
        return np.array(out)


@dataclass(frozen=True)
class GdthConfig:
    alpha0: tuple[float, float, float, float]
    eta: float
    momentum_beta: tuple[float, float, float, float]
    epsilon_lambda: float
    dt: float
    tol_r: float
    tol_theta: float
    max_iter: int
    ee_tol: float
    error_gain: float
    z1_mode: str = "scaled"
    stall_fraction: float = 0.1  # a joint freezes once its step is below this share of its tolerance

    def validate(self) -> None:
        if any(a <= 0 for a in self.alpha0):
            raise ParameterError("gdth.alpha0 must be positive")
        if any(not 0 <= b < 1 for b in self.momentum_beta):
            raise ParameterError("gdth.momentum_beta must lie in [0, 1)")
        for name in ("epsilon_lambda", "dt", "tol_r", "tol_theta", "ee_tol", "error_gain", "stall_fraction"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"gdth.{name} must be positive")
        if self.eta < 0:
            raise ParameterError("gdth.eta must be non-negative")
        if self.max_iter < 1:
            raise ParameterError("gdth.max_iter must be >= 1")
        if self.z1_mode not in ("scaled", "raw"):
            raise ParameterError("gdth.z1_mode must be 'scaled' or 'raw'")

    @property
    def tolerances(self) -> np.ndarray:
        return np.array([self.tol_r, self.tol_theta, self.tol_theta, self.tol_theta])


@dataclass(frozen=True)
class GearTrainParams:
    r_avg: float
    g_p: float
    h_w: float
    cap_h_w: float
    l_gx: float
    l_gy: float
    psi: float
    varphi: float
    calibrated: bool = False

    @property
    def denominator(self) -> float:
        """Common denominator of the closed-form azimuthal holding torque."""
        return self.g_p * (
            self.h_w * self.l_gx
            - self.cap_h_w * self.r_avg
            + self.r_avg * self.l_gy * math.tan(self.varphi)
            + self.h_w * self.l_gy * math.tan(self.psi)
        )

    def validate(self) -> None:
        if not self.r_avg > 0:
            raise ParameterError("gear.r_avg must be positive")
        if self.g_p < 1:
            raise ParameterError("gear.g_p must be >= 1")
        if abs(self.denominator) < 1e-12:
            raise ParameterError(
                "gear geometry makes G_p*(h_w*l_Gx - H_w*R_avg + R_avg*l_Gy*tan(varphi)"
                " + h_w*l_Gy*tan(psi)) vanish"
            )


@dataclass(frozen=True)
class InertiaSet:
    """Diagonal tensors ``(Ixx, Iyy, Izz)`` in the dynamic frame, kg*m^2."""

    base: tuple[float, float, float]
    link1: tuple[float, float, float]
    link2: tuple[float, float, float]

    def validate(self) -> None:
        for name in ("base", "link1", "link2"):
            ixx, iyy, izz = getattr(self, name)
            if min(ixx, iyy, izz) <= 0:
                raise ParameterError(f"inertia.{name} entries must be positive")
            tol = 1e-12
            if ixx + iyy < izz - tol or iyy + izz < ixx - tol or ixx + izz < iyy - tol:
                raise ParameterError(f"inertia.{name} violates the triangle inequality")


@dataclass(frozen=True)
class RobotParams:
    geometry: GeometryParams
    masses: MassParams
    inertia: InertiaSet
    actuators: ActuatorRatings
    gear: GearTrainParams
    gdth: GdthConfig
    home: tuple[float, float, float, float]
    rest: tuple[float, float, float, float]
    g: float = G_ACCEL
    stiffness: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name, s in zip(JOINTS, self.geometry.strokes):
            if not s > 0:
                raise ParameterError(f"geometry.strokes.{name} (stroke) must be positive")
        k = np.array(
            [virtual_stiffness(u, s) for u, s in zip(self.actuators.rated, self.geometry.strokes)]
        )
        k.setflags(write=False)
        object.__setattr__(self, "stiffness", k)

    def validate(self) -> None:
        self.geometry.validate()
        self.masses.validate()
        self.inertia.validate()
        self.actuators.validate()
        self.gear.validate()
        self.gdth.validate()
        if not 0 <= self.home[0] <= self.geometry.r_ext:
            raise ParameterError("home.r must lie within the actuator stroke")

    @property
    def effective_stalls(self) -> np.ndarray:
        return self.actuators.effective_stalls

    @property
    def mu(self) -> float:
        return mass_ratio(self.masses.m0, self.masses.m_obj)

    @property
    def speed_limits(self) -> np.ndarray:
        """No-load rate bound per joint; the radial one shrinks with payload."""
        a = self.actuators
        return np.array([a.v_nl * self.mu, a.omega_nl, a.omega_nl, a.omega_nl])

    def with_payload(self, m_obj: float) -> "RobotParams":
        if m_obj < 0:
            raise ParameterError("payload mass must be non-negative")
        return replace(self, masses=replace(self.masses, m_obj=float(m_obj)))

    def with_gear(self, **changes: Any) -> "RobotParams":
        return replace(self, gear=replace(self.gear, **changes))


# ---------------------------------------------------------------------------
# loading

_PI_EXPR = re.compile(r"^\s*([-+]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_angle(value: Any, where: str = "angle") -> float:
    """Angles are radians; strings may use ``"12.5 deg"`` or ``"pi/6"`` forms."""
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        text = value.strip().lower()
        if text.endswith("deg"):
            try:
                return math.radians(float(text[:-3]))
            except ValueError:
                pass
        m = _PI_EXPR.match(text)
        if m:
            coef = m.group(1)
            if coef in ("", "+"):
                c = 1.0
            elif coef == "-":
                c = -1.0
            else:
                c = float(coef)
            den = float(m.group(2)) if m.group(2) else 1.0
            return c * math.pi / den
        try:
            return float(text)
        except ValueError:
            pass
    raise ConfigError(f"cannot parse {where}={value!r} as an angle")


def _require(section: dict, key: str, path: str) -> Any:
    if not isinstance(section, dict) or key not in section:
        raise ConfigError(f"missing field {path}.{key}")
    return section[key]


def _num(section: dict, key: str, path: str) -> float:
    value = _require(section, key, path)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key} must be a number, got {value!r}") from None


def _ang(section: dict, key: str, path: str) -> float:
    return parse_angle(_require(section, key, path), f"{path}.{key}")


def _joint_vector(section: dict, key: str, path: str, angular: bool = True) -> tuple:
    value = _require(section, key, path)
    if isinstance(value, dict):
        try:
            value = [value[j] for j in JOINTS]
        except KeyError as exc:
            raise ConfigError(f"missing field {path}.{key}.{exc.args[0]}") from None
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ConfigError(f"{path}.{key} needs 4 entries ordered (r, theta1, theta2, phi)")
    out = []
    for i, v in enumerate(value):
        if angular and i > 0:
            out.append(parse_angle(v, f"{path}.{key}.{JOINTS[i]}"))
        else:
            try:
                out.append(float(v))
            except (TypeError, ValueError):
                raise ConfigError(f"{path}.{key}.{JOINTS[i]} must be a number") from None
    return tuple(out)


def _triple(section: dict, key: str, path: str) -> tuple[float, float, float]:
    value = _require(section, key, path)
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{path}.{key} needs three entries (Ixx, Iyy, Izz)")
    return tuple(float(v) for v in value)


def params_from_dict(raw: dict) -> RobotParams:
    """Build and validate a :class:`RobotParams` from a parsed config mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    geo = _require(raw, "geometry", "")
    geometry = GeometryParams(
        l0=_num(geo, "l0", "geometry"),
        vartheta=_ang(geo, "vartheta", "geometry"),
        l1=_num(geo, "l1", "geometry"),
        l2=_num(geo, "l2", "geometry"),
        lbar1=_num(geo, "lbar1", "geometry"),
        lbar2=_num(geo, "lbar2", "geometry"),
        delta_r=_num(geo, "delta_r", "geometry"),
        r_prime=_num(geo, "r_prime", "geometry"),
        rod_radius=_num(geo, "rod_radius", "geometry"),
        rod_cm=_num(geo, "rod_cm", "geometry"),
        r_ext=_num(geo, "r_ext", "geometry"),
        strokes=_joint_vector(geo, "strokes", "geometry"),
    )
    ms = _require(raw, "masses", "")
    masses = MassParams(
        m_bf=_num(ms, "m_bf", "masses"),
        m0=_num(ms, "m0", "masses"),
        m1=_num(ms, "m1", "masses"),
        m2=_num(ms, "m2", "masses"),
        m_act=_num(ms, "m_act", "masses"),
        rho_act=_num(ms, "rho_act", "masses"),
        m_obj=float(ms.get("m_obj", 0.0)),
    )
    ins = _require(raw, "inertia", "")
    inertia = InertiaSet(
        base=_triple(ins, "base", "inertia"),
        link1=_triple(ins, "link1", "inertia"),
        link2=_triple(ins, "link2", "inertia"),
    )
    act = _require(raw, "actuators", "")
    actuators = ActuatorRatings(
        rated=_joint_vector(act, "rated", "actuators", angular=False),
        tau_stall=_num(act, "tau_stall", "actuators"),
        radial_stall=_num(act, "radial_stall", "actuators"),
        v_nl=_num(act, "v_nl", "actuators"),
        omega_nl=_num(act, "omega_nl", "actuators"),
        efficiencies=_joint_vector(act, "efficiencies", "actuators", angular=False),
        gear_ratios=_joint_vector(act, "gear_ratios", "actuators", angular=False),
    )
    gr = _require(raw, "gear", "")
    gear = GearTrainParams(
        r_avg=_num(gr, "r_avg", "gear"),
        g_p=_num(gr, "g_p", "gear"),
        h_w=_num(gr, "h_w", "gear"),
        cap_h_w=_num(gr, "cap_h_w", "gear"),
        l_gx=_num(gr, "l_gx", "gear"),
        l_gy=_num(gr, "l_gy", "gear"),
        psi=_ang(gr, "psi", "gear"),
        varphi=_ang(gr, "varphi", "gear"),
        calibrated=bool(gr.get("calibrated", False)),
    )
    gd = _require(raw, "gdth", "")
    gdth = GdthConfig(
        alpha0=_joint_vector(gd, "alpha0", "gdth", angular=False),
        eta=_num(gd, "eta", "gdth"),
        momentum_beta=_joint_vector(gd, "momentum_beta", "gdth", angular=False),
        epsilon_lambda=_num(gd, "epsilon_lambda", "gdth"),
        dt=_num(gd, "dt", "gdth"),
        tol_r=_num(gd, "tol_r", "gdth"),
        tol_theta=_ang(gd, "tol_theta", "gdth"),
        max_iter=int(_num(gd, "max_iter", "gdth")),
        ee_tol=_num(gd, "ee_tol", "gdth"),
        error_gain=_num(gd, "error_gain", "gdth"),
        z1_mode=str(gd.get("z1_mode", "scaled")),
        stall_fraction=float(gd.get("stall_fraction", 0.1)),
    )
    home = _joint_vector(raw, "home", "")
    rest = _joint_vector(raw, "rest", "") if "rest" in raw else home
    try:
        params = RobotParams(
            geometry=geometry,
            masses=masses,
            inertia=inertia,
            actuators=actuators,
            gear=gear,
            gdth=gdth,
            home=home,
            rest=rest,
            g=float(raw.get("g", G_ACCEL)),
        )
        params.validate()
    except ConfigError:
        raise
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    return params


def load_config(path: str | Path) -> RobotParams:
    """Read a YAML parameter file and return validated parameters."""
    import yaml

    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return params_from_dict(raw)


def default_config_path() -> Path:
    return Path(str(resources.files("pmp_gdth") / "data" / "robot.yaml"))


def default_params() -> RobotParams:
    """Parameters for the bundled three-waypoint pick-and-place scenario."""
    return load_config(default_config_path())
