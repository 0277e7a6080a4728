"""Dynamic high-order control barrier function safety filtering for planar vehicles."""

from dhocbf.dynamics import (
    ControlInput,
    EgoState,
    ObstacleProfile,
    ObstacleState,
    obstacle_state_at,
    obstacles_in_range,
    step_ego,
)
from dhocbf.geometry import ClosestPair, OrientedBox, PlacedShape, ShapeSpec
from dhocbf.barrier import BarrierEval, BarrierParams
from dhocbf.safety_filter import FilterConfig, LinearConstraintRow, QPResult, filter_control, solve_qp2

__version__ = "0.1.0"

__all__ = [
    "BarrierEval",
    "BarrierParams",
    "ClosestPair",
    "ControlInput",
    "EgoState",
    "FilterConfig",
    "LinearConstraintRow",
    "ObstacleProfile",
    "ObstacleState",
    "OrientedBox",
    "PlacedShape",
    "QPResult",
    "ShapeSpec",
    "filter_control",
    "obstacle_state_at",
    "obstacles_in_range",
    "solve_qp2",
    "step_ego",
]
