"""Pfadplanung: Geometrie, RRT*, Sichtlinien-Optimierung, Gierwinkel und Spline-QP."""

from .geometry import Cuboid, FlightSpace, inflate, inflate_all
from .los import los_prune
from .rrt_star import Tree, build_tree
from .traj_qp import FlatTrajectory, PiecewiseTrajectory, optimize_spline, solve_flat_outputs
from .yaw_planner import FlatPath, wrap_angle, yaw_waypoints

__all__ = [
    "Cuboid",
    "FlatPath",
    "FlatTrajectory",
    "FlightSpace",
    "PiecewiseTrajectory",
    "Tree",
    "build_tree",
    "inflate",
    "inflate_all",
    "los_prune",
    "optimize_spline",
    "solve_flat_outputs",
    "wrap_angle",
    "yaw_waypoints",
]
