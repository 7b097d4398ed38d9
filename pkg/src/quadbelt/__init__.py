"""Hierarchical quadruped control on a simulated split-belt treadmill.

Low level: PD pose control + QP ground-reaction-force allocation at 500 Hz.
High level: contact primitives selected at 2.5 Hz by fixed gaits, a
cost-based heuristic, or a learned double-Q network.
"""

__version__ = "0.1.0"

from quadbelt.dynamics import BodyPose, FootForces, PhysicalParams, RobotState
from quadbelt.primitives import Primitive, primitive_table

__all__ = [
    "BodyPose",
    "FootForces",
    "PhysicalParams",
    "Primitive",
    "RobotState",
    "primitive_table",
    "__version__",
]
