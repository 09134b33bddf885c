"""Shared domain types: vectors, sensor specs, FLS records, trees, plans.

Units are millimeters and degrees everywhere.  All value types are
immutable and safe to share between concurrent readers.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class PlanError(ValueError):
    """Raised when an input violates a planner or plan-file contract."""


@dataclass(frozen=True)
class Vec3:
    """A 3-vector in millimeters.  Components must be finite."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for c in (self.x, self.y, self.z):
            if not math.isfinite(c):
                raise PlanError(f"non-finite Vec3 component: {c!r}")

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a) -> "Vec3":
        return Vec3(float(a[0]), float(a[1]), float(a[2]))

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


ZERO = Vec3(0.0, 0.0, 0.0)


class MountType(enum.Enum):
    """Orientation of the tracking camera on an FLS body."""

    TOP = "top"
    SIDE = "side"
    BOTTOM = "bottom"


@dataclass(frozen=True)
class SensorSpec:
    """Usable tracking range and geometry of the on-board tracking device.

    t_min/t_max bound the distance window within which measurements meet
    the application's error tolerance; radius_r is the FLS body radius.
    """

    t_min: float
    t_max: float
    radius_r: float
    fov_half_angle: float = 60.0

    def __post_init__(self):
        if not (0 < self.t_min < self.t_max):
            raise PlanError(f"need 0 < t_min < t_max, got [{self.t_min}, {self.t_max}]")
        if self.radius_r <= 0:
            raise PlanError(f"radius_r must be positive, got {self.radius_r}")
        if not (0 < self.fov_half_angle <= 90):
            raise PlanError(f"fov_half_angle must be in (0, 90], got {self.fov_half_angle}")


@dataclass(frozen=True)
class RelativePose:
    """Pose of one FLS relative to another: a translation vector plus
    measurement metadata.  The vector points from the reference FLS to
    the posed FLS (pose of i relative to j is ``position_i - position_j``).

    Orientation noise is recorded but never feeds correction vectors;
    corrections are purely translational.
    """

    vec: Vec3
    orientation_deg: Optional[tuple] = None  # (roll, pitch, yaw) noise, degrees
    error_pct: Optional[float] = None


def pose_negate(p: RelativePose) -> RelativePose:
    """Pose of j relative to i, given pose of i relative to j."""
    return RelativePose(-p.vec, p.orientation_deg, p.error_pct)


def compose_path(poses: Sequence[RelativePose]) -> RelativePose:
    """Sum relative poses along a path.  The empty path composes to zero."""
    v = ZERO
    for p in poses:
        v = v + p.vec
    return RelativePose(v)


@dataclass(frozen=True)
class FlsRecord:
    """One FLS in a deployment plan."""

    id: int
    coordinate: Vec3
    mount: MountType
    swarm_id: int
    parent_id: Optional[int] = None  # anchor within the FLS-tree; None at the root
    children_ids: tuple = ()
    is_primary: bool = False
    is_dark: bool = False
    inter_swarm_anchor_for: tuple = ()  # swarm ids this FLS anchors
    heading: Optional[Vec3] = None  # horizontal camera heading for SIDE mounts


@dataclass(frozen=True)
class SwarmTree:
    """Hierarchy over swarms.  Each edge carries the inter-swarm
    (anchor, primary) pair: anchor in the parent swarm, primary in the child.
    """

    nodes: tuple
    root: int
    edges: tuple  # (parent_swarm, child_swarm, anchor_fls_id, primary_fls_id)

    def validate(self) -> None:
        if len(self.edges) != len(self.nodes) - 1:
            raise PlanError("swarm-tree is not spanning")
        children = {}
        for parent, child, _, _ in self.edges:
            children.setdefault(parent, []).append(child)
        seen = set()
        stack = [self.root]
        while stack:
            s = stack.pop()
            if s in seen:
                raise PlanError("swarm-tree has a cycle")
            seen.add(s)
            stack.extend(children.get(s, []))
        if seen != set(self.nodes):
            raise PlanError("swarm-tree is not connected")


@dataclass(frozen=True)
class FlsTree:
    """Spanning tree over one swarm's FLSs, rooted at its primary (or a
    chosen root for the root swarm)."""

    swarm_id: int
    root_id: int
    parent: dict  # fls id -> parent fls id, root absent
    children: dict  # fls id -> tuple of child ids

    def members(self) -> list:
        return sorted(set(self.parent) | {self.root_id})

    def validate(self) -> None:
        if self.root_id in self.parent:
            raise PlanError("FLS-tree root has a parent")
        # spanning + acyclic: every member reachable from the root exactly once
        seen = set()
        stack = [self.root_id]
        while stack:
            n = stack.pop()
            if n in seen:
                raise PlanError(f"FLS-tree cycle at {n}")
            seen.add(n)
            stack.extend(self.children.get(n, ()))
        if seen != set(self.members()):
            raise PlanError("FLS-tree is not spanning")


@dataclass(frozen=True)
class DeploymentPlan:
    """Full planner output: records, swarm-tree, FLS-trees, sensor spec."""

    fls_records: tuple
    swarm_tree: SwarmTree
    fls_trees: tuple
    sensor_spec: SensorSpec
    group_size_g: int

    def record(self, fls_id: int) -> FlsRecord:
        return self.fls_records[fls_id]

    def fls_tree_of(self, swarm_id: int) -> FlsTree:
        for t in self.fls_trees:
            if t.swarm_id == swarm_id:
                return t
        raise KeyError(swarm_id)

    def coordinates(self) -> np.ndarray:
        return np.array([r.coordinate.to_array() for r in self.fls_records])

    def validate(self) -> None:
        self.swarm_tree.validate()
        seen = set()
        for t in self.fls_trees:
            t.validate()
            members = set(t.members())
            if members & seen:
                raise PlanError("FLS appears in more than one FLS-tree")
            seen |= members
        if seen != {r.id for r in self.fls_records}:
            raise PlanError("FLS-tree membership does not cover all records")


# ---------------------------------------------------------------------------
# JSON serialization.  Floats go through repr (shortest round-trip form),
# which reconstructs bit-identical doubles on load.


def _vec_to_list(v: Vec3) -> list:
    return [v.x, v.y, v.z]


def _record_to_dict(r: FlsRecord) -> dict:
    return {
        "id": r.id,
        "coordinate": _vec_to_list(r.coordinate),
        "mount": r.mount.value,
        "swarm_id": r.swarm_id,
        "parent_id": r.parent_id,
        "children_ids": list(r.children_ids),
        "is_primary": r.is_primary,
        "is_dark": r.is_dark,
        "inter_swarm_anchor_for": list(r.inter_swarm_anchor_for),
        "heading": _vec_to_list(r.heading) if r.heading is not None else None,
    }


def _record_from_dict(d: dict) -> FlsRecord:
    return FlsRecord(
        id=d["id"],
        coordinate=Vec3(*d["coordinate"]),
        mount=MountType(d["mount"]),
        swarm_id=d["swarm_id"],
        parent_id=d["parent_id"],
        children_ids=tuple(d["children_ids"]),
        is_primary=d["is_primary"],
        is_dark=d["is_dark"],
        inter_swarm_anchor_for=tuple(d["inter_swarm_anchor_for"]),
        heading=Vec3(*d["heading"]) if d.get("heading") is not None else None,
    )


def plan_to_json(plan: DeploymentPlan) -> str:
    doc = {
        "fls": [_record_to_dict(r) for r in plan.fls_records],
        "swarm_tree": {
            "nodes": list(plan.swarm_tree.nodes),
            "root": plan.swarm_tree.root,
            "edges": [list(e) for e in plan.swarm_tree.edges],
        },
        "fls_trees": [
            {
                "swarm_id": t.swarm_id,
                "root_id": t.root_id,
                "parent": {str(k): v for k, v in sorted(t.parent.items())},
            }
            for t in plan.fls_trees
        ],
        "sensor": {
            "t_min": plan.sensor_spec.t_min,
            "t_max": plan.sensor_spec.t_max,
            "radius_r": plan.sensor_spec.radius_r,
            "fov_half_angle": plan.sensor_spec.fov_half_angle,
        },
        "g": plan.group_size_g,
    }
    return json.dumps(doc, indent=1)


def plan_from_json(text: str) -> DeploymentPlan:
    doc = json.loads(text)
    trees = []
    for td in doc["fls_trees"]:
        parent = {int(k): v for k, v in td["parent"].items()}
        children: dict = {}
        for c, p in parent.items():
            children.setdefault(p, []).append(c)
        trees.append(
            FlsTree(
                swarm_id=td["swarm_id"],
                root_id=td["root_id"],
                parent=parent,
                children={k: tuple(sorted(v)) for k, v in children.items()},
            )
        )
    st = doc["swarm_tree"]
    s = doc["sensor"]
    return DeploymentPlan(
        fls_records=tuple(_record_from_dict(d) for d in doc["fls"]),
        swarm_tree=SwarmTree(
            nodes=tuple(st["nodes"]), root=st["root"], edges=tuple(tuple(e) for e in st["edges"])
        ),
        fls_trees=tuple(trees),
        sensor_spec=SensorSpec(
            t_min=s["t_min"],
            t_max=s["t_max"],
            radius_r=s["radius_r"],
            fov_half_angle=s["fov_half_angle"],
        ),
        group_size_g=doc["g"],
    )


# ---------------------------------------------------------------------------
# Point clouds


class PointCloud:
    """Positions (+ outward surface normals), millimeters, as float arrays.

    Both the planner's ground truth and a simulation's estimated truth use
    this representation.
    """

    def __init__(self, positions: np.ndarray, normals: Optional[np.ndarray] = None):
        positions = np.asarray(positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise PlanError(f"positions must be (n, 3), got {positions.shape}")
        if not np.isfinite(positions).all():
            raise PlanError("non-finite position in point cloud")
        if normals is None:
            normals = np.zeros_like(positions)
        self.positions = positions
        self.normals = np.asarray(normals, dtype=float)

    def __len__(self) -> int:
        return len(self.positions)

    def to_csv(self) -> str:
        lines = ["id,x,y,z,nx,ny,nz"]
        for i, (p, n) in enumerate(zip(self.positions, self.normals)):
            vals = ",".join(repr(float(v)) for v in (*p, *n))
            lines.append(f"{i},{vals}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text: str) -> "PointCloud":
        rows = text.strip().splitlines()
        if not rows or rows[0].split(",")[:4] != ["id", "x", "y", "z"]:
            raise PlanError("point-cloud CSV must start with header id,x,y,z,nx,ny,nz")
        pos, nrm = [], []
        for line in rows[1:]:
            parts = line.split(",")
            pos.append([float(v) for v in parts[1:4]])
            nrm.append([float(v) for v in parts[4:7]] if len(parts) >= 7 else [0, 0, 0])
        return PointCloud(np.array(pos), np.array(nrm))
