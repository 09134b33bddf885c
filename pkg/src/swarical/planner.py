"""Offline deployment planning.

Clusters a ground-truth point cloud into swarms, builds the swarm-tree
and the per-swarm FLS-trees, chooses primaries/anchors, assigns sensor
mount types for line of sight, and splices in dark FLSs wherever a
localizing/anchor pair would exceed the sensor's maximum range.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DeploymentPlan,
    FlsRecord,
    FlsTree,
    MountType,
    PlanError,
    PointCloud,
    SensorSpec,
    SwarmTree,
    Vec3,
)


@dataclass
class ClusterAssignment:
    k: int
    labels: np.ndarray  # per-point swarm id
    centroids: np.ndarray  # (k, 3)
    sse_history: list = field(default_factory=list)


def cluster_kmeans(cloud: PointCloud, g: int, seed: int) -> ClusterAssignment:
    """Partition the cloud into ceil(F/g) swarms with Lloyd's algorithm.

    k-means++ seeding, at most 300 iterations, empty clusters reseeded to
    the point farthest from its current centroid.  Deterministic for a
    fixed seed.
    """
    if g < 1:
        raise PlanError(f"group size must be >= 1, got {g}")
    pts = cloud.positions
    f = len(pts)
    if f < 1:
        raise PlanError("empty point cloud")
    k = math.ceil(f / g)
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centroids = np.empty((k, 3))
    centroids[0] = pts[rng.integers(f)]
    d2 = np.sum((pts - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = pts[rng.integers(f)]
        else:
            centroids[i] = pts[rng.choice(f, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((pts - centroids[i]) ** 2, axis=1))

    labels = np.full(f, -1, dtype=int)
    history = []
    for _ in range(300):
        dists = np.sum((pts[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dists, axis=1)
        history.append(float(dists[np.arange(f), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            mask = labels == c
            if mask.any():
                centroids[c] = pts[mask].mean(axis=0)
            else:
                # reseed to the point farthest from its assigned centroid
                far = int(np.argmax(np.sum((pts - centroids[labels]) ** 2, axis=1)))
                centroids[c] = pts[far]
                labels[far] = c
    # the loop can stabilize immediately after a reseed; make sure no
    # cluster is left empty
    for c in range(k):
        if not (labels == c).any():
            far = int(np.argmax(np.sum((pts - centroids[labels]) ** 2, axis=1)))
            labels[far] = c
            centroids[c] = pts[far]
    for c in range(k):
        centroids[c] = pts[labels == c].mean(axis=0)
    return ClusterAssignment(k=k, labels=labels, centroids=centroids, sse_history=history)


def build_mst(points: np.ndarray) -> list:
    """Euclidean minimum spanning tree via Prim's algorithm.

    Returns edges as (u, v) index pairs with u < v, sorted.  Ties between
    equal-weight candidate edges are broken by (min endpoint, max
    endpoint) so the result is deterministic.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n == 0:
        raise PlanError("cannot build an MST over zero points")
    if n == 1:
        return []
    in_tree = np.zeros(n, dtype=bool)
    best_d = np.full(n, np.inf)
    best_from = np.full(n, -1, dtype=int)
    in_tree[0] = True
    best_d[1:] = np.linalg.norm(pts[1:] - pts[0], axis=1)
    best_from[1:] = 0
    edges = []
    for _ in range(n - 1):
        d = np.where(in_tree, np.inf, best_d)
        m = d.min()
        # resolve weight ties by (min endpoint, max endpoint)
        cand = np.flatnonzero(d == m)
        pick = min(cand, key=lambda v: (min(best_from[v], v), max(best_from[v], v)))
        u = int(best_from[pick])
        v = int(pick)
        edges.append((min(u, v), max(u, v)))
        in_tree[v] = True
        nd = np.linalg.norm(pts - pts[v], axis=1)
        closer = (~in_tree) & ((nd < best_d) | ((nd == best_d) & (v < best_from)))
        best_d[closer] = nd[closer]
        best_from[closer] = v
    return sorted(edges)


def orient_tree(edges: list, n: int, root: int | None = None):
    """Orient an undirected spanning tree by BFS.

    If no root is given, the max-degree vertex wins (lowest id on ties).
    Returns (root, parent map, children map) with children in sorted order.
    """
    adj: dict = {i: [] for i in range(n)}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    if root is None:
        root = max(range(n), key=lambda i: (len(adj[i]), -i))
    parent: dict = {}
    children: dict = {i: [] for i in range(n)}
    seen = {root}
    q = deque([root])
    while q:
        u = q.popleft()
        for v in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                parent[v] = u
                children[u].append(v)
                q.append(v)
    return root, parent, children


def select_primary_anchor(parent_ids, parent_pts, child_ids, child_pts):
    """Closest cross-swarm pair: the parent-side FLS becomes the anchor,
    the child-side FLS the primary.  Ties break to the lowest ids."""
    if len(parent_ids) == 0 or len(child_ids) == 0:
        raise PlanError("cannot pick an anchor/primary from an empty swarm")
    d = np.linalg.norm(
        np.asarray(parent_pts)[:, None, :] - np.asarray(child_pts)[None, :, :], axis=2
    )
    best = np.inf
    pick = None
    for i, ai in enumerate(parent_ids):
        for j, pj in enumerate(child_ids):
            key = (d[i, j], ai, pj)
            if pick is None or key < (best, *pick):
                best = d[i, j]
                pick = (ai, pj)
    return pick


def assign_mount_type(child_pos: np.ndarray, parent_pos: np.ndarray) -> MountType:
    """Mount that gives the child line of sight toward its parent:
    elevation above +45° wants a top camera, below −45° a bottom one,
    anything in between a side camera."""
    u = np.asarray(parent_pos, dtype=float) - np.asarray(child_pos, dtype=float)
    norm = np.linalg.norm(u)
    if norm == 0:
        raise PlanError("coincident child and parent positions")
    elevation = math.degrees(math.asin(np.clip(u[2] / norm, -1.0, 1.0)))
    if elevation > 45.0:
        return MountType.TOP
    if elevation < -45.0:
        return MountType.BOTTOM
    return MountType.SIDE


def heading_of(child_pos: np.ndarray, parent_pos: np.ndarray) -> Vec3:
    """Horizontal unit heading from child toward parent (side mounts)."""
    u = np.asarray(parent_pos, dtype=float) - np.asarray(child_pos, dtype=float)
    h = np.array([u[0], u[1], 0.0])
    n = np.linalg.norm(h)
    if n == 0:
        return Vec3(1.0, 0.0, 0.0)
    return Vec3.from_array(h / n)


def insert_dark_fls(a: np.ndarray, b: np.ndarray, t_max: float) -> list:
    """Equally spaced interior points so every sub-segment of a->b is
    within the sensor's maximum range.  Empty if already in range."""
    if t_max <= 0:
        raise PlanError(f"t_max must be positive, got {t_max}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dist = float(np.linalg.norm(b - a))
    m = math.ceil(dist / t_max) - 1
    if m <= 0:
        return []
    return [a + (b - a) * ((i + 1) / (m + 1)) for i in range(m)]


class _Builder:
    """Mutable per-FLS state accumulated while the plan comes together."""

    def __init__(self, pos: np.ndarray, swarm_id: int, is_dark: bool = False):
        self.pos = pos
        self.swarm_id = swarm_id
        self.is_dark = is_dark
        self.parent_id: int | None = None
        self.children: list = []
        self.is_primary = False
        self.anchor_for: list = []
        self.mount: MountType | None = None
        self.heading: Vec3 | None = None


def plan(cloud: PointCloud, g: int, spec: SensorSpec, seed: int):
    """Run the full offline pipeline.

    Returns (DeploymentPlan, summary dict).  The summary reports the FLS
    count, swarm count, dark-FLS count, mount mix, and swarm sizes.
    """
    assignment = cluster_kmeans(cloud, g, seed)
    if any(b > a * (1 + 1e-12) + 1e-9 for a, b in zip(assignment.sse_history, assignment.sse_history[1:])):
        raise AssertionError("k-means SSE increased between iterations")
    k = assignment.k
    pts = cloud.positions
    f = len(pts)

    nodes: list = [_Builder(pts[i], int(assignment.labels[i])) for i in range(f)]
    swarm_members: dict = {s: [] for s in range(k)}
    for i in range(f):
        swarm_members[nodes[i].swarm_id].append(i)

    mst = build_mst(assignment.centroids)
    root_swarm, swarm_parent, swarm_children = orient_tree(mst, k)

    # inter-swarm anchor/primary pairs, walking the swarm-tree top down
    swarm_edges = []
    order = deque([root_swarm])
    bfs_swarms = []
    while order:
        s = order.popleft()
        bfs_swarms.append(s)
        order.extend(swarm_children[s])
    for s in bfs_swarms:
        for c in swarm_children[s]:
            anchor, primary = select_primary_anchor(
                swarm_members[s],
                pts[swarm_members[s]],
                swarm_members[c],
                pts[swarm_members[c]],
            )
            swarm_edges.append([s, c, anchor, primary])
            nodes[primary].is_primary = True
            nodes[anchor].anchor_for.append(c)

    primary_of = {c: p for _, c, _, p in swarm_edges}

    # FLS-trees: MST over each swarm's members, rooted at the primary
    # (root swarm: the member closest to the swarm centroid)
    fls_parent: dict = {}
    fls_root: dict = {}
    for s in range(k):
        members = swarm_members[s]
        if s == root_swarm:
            centroid = assignment.centroids[s]
            root_id = min(members, key=lambda i: (np.linalg.norm(pts[i] - centroid), i))
        else:
            root_id = primary_of[s]
        fls_root[s] = root_id
        local = {m: j for j, m in enumerate(members)}
        edges = build_mst(pts[members])
        _, lparent, _ = orient_tree(edges, len(members), root=local[root_id])
        for child_local, parent_local in lparent.items():
            c_id = members[child_local]
            p_id = members[parent_local]
            fls_parent[c_id] = p_id
            nodes[c_id].parent_id = p_id
            nodes[p_id].children.append(c_id)

    # dark insertion on intra-swarm edges: splice a chain between child
    # and parent, re-parenting the child onto the last dark
    def add_dark(pos: np.ndarray, swarm_id: int) -> int:
        nodes.append(_Builder(pos, swarm_id, is_dark=True))
        swarm_members[swarm_id].append(len(nodes) - 1)
        return len(nodes) - 1

    for c_id in sorted(fls_parent):
        p_id = fls_parent[c_id]
        interior = insert_dark_fls(nodes[c_id].pos, nodes[p_id].pos, spec.t_max)
        if not interior:
            continue
        # chain runs child -> dark_m -> ... -> dark_1 -> parent
        nodes[p_id].children.remove(c_id)
        prev = p_id
        for q in reversed(interior):
            d_id = add_dark(q, nodes[c_id].swarm_id)
            nodes[d_id].parent_id = prev
            nodes[prev].children.append(d_id)
            prev = d_id
        nodes[c_id].parent_id = prev
        nodes[prev].children.append(c_id)

    # dark insertion on swarm-tree edges: the chain hangs off the anchor
    # inside the parent swarm and the last dark becomes the effective anchor
    for e in swarm_edges:
        parent_swarm, child_swarm, anchor, primary = e
        interior = insert_dark_fls(nodes[primary].pos, nodes[anchor].pos, spec.t_max)
        if not interior:
            continue
        nodes[anchor].anchor_for.remove(child_swarm)
        prev = anchor
        for q in reversed(interior):
            d_id = add_dark(q, parent_swarm)
            nodes[d_id].parent_id = prev
            nodes[prev].children.append(d_id)
            prev = d_id
        nodes[prev].anchor_for.append(child_swarm)
        e[2] = prev

    # mount types: child faces its FLS-tree parent; a primary faces its
    # inter-swarm anchor; the root swarm's root faces its first child
    anchor_of = {e[3]: e[2] for e in swarm_edges}
    for i, nd in enumerate(nodes):
        if nd.parent_id is not None:
            target = nodes[nd.parent_id].pos
        elif i in anchor_of:
            target = nodes[anchor_of[i]].pos
        elif nd.children:
            target = nodes[nd.children[0]].pos
        else:
            target = nd.pos + np.array([1.0, 0.0, 0.0])  # isolated singleton
        if np.allclose(target, nd.pos):
            nd.mount = MountType.SIDE
            nd.heading = Vec3(1.0, 0.0, 0.0)
        else:
            nd.mount = assign_mount_type(nd.pos, target)
            if nd.mount is MountType.SIDE:
                nd.heading = heading_of(nd.pos, target)

    records = tuple(
        FlsRecord(
            id=i,
            coordinate=Vec3.from_array(nd.pos),
            mount=nd.mount,
            swarm_id=nd.swarm_id,
            parent_id=nd.parent_id,
            children_ids=tuple(sorted(nd.children)),
            is_primary=nd.is_primary,
            is_dark=nd.is_dark,
            inter_swarm_anchor_for=tuple(sorted(nd.anchor_for)),
            heading=nd.heading,
        )
        for i, nd in enumerate(nodes)
    )
    trees = tuple(
        FlsTree(
            swarm_id=s,
            root_id=fls_root[s],
            parent={i: nodes[i].parent_id for i in swarm_members[s] if nodes[i].parent_id is not None},
            children={
                i: tuple(sorted(nodes[i].children))
                for i in swarm_members[s]
                if nodes[i].children
            },
        )
        for s in range(k)
    )
    deployment = DeploymentPlan(
        fls_records=records,
        swarm_tree=SwarmTree(
            nodes=tuple(range(k)), root=root_swarm, edges=tuple(tuple(e) for e in swarm_edges)
        ),
        fls_trees=trees,
        sensor_spec=spec,
        group_size_g=g,
    )
    deployment.validate()

    summary = summarize(deployment, f)
    if summary["max_pair_distance"] > spec.t_max * (1 + 1e-9):
        raise AssertionError("dark insertion left a pair beyond t_max")
    return deployment, summary


def pair_distances(deployment: DeploymentPlan) -> np.ndarray:
    """Ground-truth distances of every localizing/anchor pair, both
    intra-swarm (FLS-tree edges) and inter-swarm (anchor, primary)."""
    coords = deployment.coordinates()
    d = []
    for t in deployment.fls_trees:
        for c, p in t.parent.items():
            d.append(np.linalg.norm(coords[c] - coords[p]))
    for _, _, anchor, primary in deployment.swarm_tree.edges:
        d.append(np.linalg.norm(coords[anchor] - coords[primary]))
    return np.array(d) if d else np.zeros(0)


def branching_factors(deployment: DeploymentPlan) -> np.ndarray:
    """Number of localizing FLSs (or swarms) hanging off each anchor."""
    counts = [
        len(r.children_ids) + len(r.inter_swarm_anchor_for) for r in deployment.fls_records
    ]
    return np.array(counts)


def summarize(deployment: DeploymentPlan, f_illuminating: int | None = None) -> dict:
    records = deployment.fls_records
    dark = sum(1 for r in records if r.is_dark)
    if f_illuminating is None:
        f_illuminating = len(records) - dark
    mounts = {"top": 0, "side": 0, "bottom": 0}
    for r in records:
        mounts[r.mount.value] += 1
    sizes = {}
    for r in records:
        sizes[r.swarm_id] = sizes.get(r.swarm_id, 0) + 1
    dists = pair_distances(deployment)
    spec = deployment.sensor_spec
    return {
        "f": f_illuminating,
        "g": deployment.group_size_g,
        "n_swarms": len(deployment.swarm_tree.nodes),
        "dark_count": dark,
        "mount_counts": mounts,
        "swarm_sizes": [sizes[s] for s in sorted(sizes)],
        "max_pair_distance": float(dists.max()) if len(dists) else 0.0,
        "pairs_below_t_min": int((dists < spec.t_min).sum()) if len(dists) else 0,
    }
