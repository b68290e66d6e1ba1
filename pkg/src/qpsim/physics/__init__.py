"""Maximal-coordinate rigid body physics: state, transformations, step loop."""

from qpsim.physics.types import (
    QP,
    DP,
    Actuator,
    Body,
    Capsule,
    Collider,
    Joint,
    NumericalBlowup,
    Plane,
    Sphere,
    SystemConfig,
)
from qpsim.physics.system import System, check_blowup
from qpsim.physics.joints import joint_apply, joint_potential, joint_state
from qpsim.physics.actuators import actuator_apply
from qpsim.physics.colliders import collide, collide_pair, contact_geometry
from qpsim.physics.integrators import (
    collision_integrate,
    gyroscopic_apply,
    kinematic_apply,
    measure_momentum_energy,
    potential_integrate,
    system_step,
)
from qpsim.physics.trajectory import read_trajectory, trajectory_record, write_trajectory

__all__ = [
    "QP", "DP", "Actuator", "Body", "Capsule", "Collider", "Joint", "NumericalBlowup", "Plane", "Sphere",
    "SystemConfig", "System", "check_blowup", "joint_apply", "joint_potential", "joint_state",
    "actuator_apply", "collide", "collide_pair", "contact_geometry", "collision_integrate", "gyroscopic_apply",
    "kinematic_apply", "measure_momentum_energy", "potential_integrate", "system_step",
    "read_trajectory", "trajectory_record", "write_trajectory",
]
