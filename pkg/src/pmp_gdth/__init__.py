"""Minimum-acceleration trajectory planning for a 4-DOF spherical manipulator."""

from .kinematics import JointState
from .params import RobotParams, default_params, load_config

__all__ = ["JointState", "RobotParams", "default_params", "load_config"]
__version__ = "0.1.0"
