"""Swarical: sensor-aware deployment planning and decentralized
localization simulation for drone light-show swarms."""

__version__ = "0.1.0"

from .core import (
    DeploymentPlan,
    FlsRecord,
    FlsTree,
    MountType,
    PointCloud,
    RelativePose,
    SensorSpec,
    SwarmTree,
    Vec3,
    compose_path,
    plan_from_json,
    plan_to_json,
    pose_negate,
)
from .engine import Engine, SimConfig, run_simulation
from .mesh import DensityBounds, TriangleMesh, density_bounds, parse_obj, sample_surface
from .metrics import align_centroids, chamfer, estimate_hd, hausdorff
from .planner import plan

__all__ = [
    "DeploymentPlan",
    "DensityBounds",
    "Engine",
    "FlsRecord",
    "FlsTree",
    "MountType",
    "PointCloud",
    "RelativePose",
    "SensorSpec",
    "SimConfig",
    "SwarmTree",
    "TriangleMesh",
    "Vec3",
    "align_centroids",
    "chamfer",
    "compose_path",
    "density_bounds",
    "estimate_hd",
    "hausdorff",
    "parse_obj",
    "plan",
    "plan_from_json",
    "plan_to_json",
    "pose_negate",
    "run_simulation",
    "sample_surface",
]
