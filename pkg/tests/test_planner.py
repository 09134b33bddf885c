"""Offline planning: clustering, spanning trees, mount assignment,
dark-FLS insertion, and whole-plan invariants."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarical import MountType, PointCloud, SensorSpec, Vec3, plan
from swarical.core import PlanError
from swarical.mesh import parse_obj, sample_surface, skateboard_obj
from swarical.planner import (
    assign_mount_type,
    branching_factors,
    build_mst,
    cluster_kmeans,
    heading_of,
    insert_dark_fls,
    orient_tree,
    pair_distances,
    select_primary_anchor,
)


def spanning_tree_weight(pts: np.ndarray, edges) -> float:
    return sum(float(np.linalg.norm(pts[u] - pts[v])) for u, v in edges)


def min_spanning_weight_exhaustive(pts: np.ndarray) -> float:
    """Minimum weight over all spanning trees, enumerated via Prüfer
    sequences (n^(n-2) labeled trees)."""
    n = len(pts)
    if n <= 1:
        return 0.0
    if n == 2:
        return float(np.linalg.norm(pts[0] - pts[1]))
    best = math.inf
    for seq in itertools.product(range(n), repeat=n - 2):
        edges = edges_from_pruefer(list(seq), n)
        best = min(best, spanning_tree_weight(pts, edges))
    return best


def edges_from_pruefer(seq: list, n: int) -> list:
    degree = [1] * n
    for s in seq:
        degree[s] += 1
    edges = []
    for s in seq:
        for leaf in range(n):
            if degree[leaf] == 1:
                edges.append((leaf, s))
                degree[leaf] -= 1
                degree[s] -= 1
                break
    last = [i for i in range(n) if degree[i] == 1]
    edges.append((last[0], last[1]))
    return edges


class TestClusterKmeans:
    def test_every_cluster_nonempty_and_count(self):
        rng = np.random.default_rng(0)
        cloud = PointCloud(rng.uniform(0, 1000, (73, 3)))
        a = cluster_kmeans(cloud, 10, seed=1)
        assert a.k == math.ceil(73 / 10)
        for c in range(a.k):
            assert (a.labels == c).any()

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        cloud = PointCloud(rng.uniform(0, 1000, (50, 3)))
        a = cluster_kmeans(cloud, 8, seed=2)
        b = cluster_kmeans(cloud, 8, seed=2)
        assert (a.labels == b.labels).all()

    def test_sse_never_increases(self):
        rng = np.random.default_rng(2)
        cloud = PointCloud(rng.uniform(0, 1000, (120, 3)))
        a = cluster_kmeans(cloud, 15, seed=3)
        assert all(y <= x * (1 + 1e-12) + 1e-9 for x, y in zip(a.sse_history, a.sse_history[1:]))

    def test_centroids_are_cluster_means(self):
        rng = np.random.default_rng(3)
        cloud = PointCloud(rng.uniform(0, 1000, (40, 3)))
        a = cluster_kmeans(cloud, 6, seed=4)
        for c in range(a.k):
            assert np.allclose(a.centroids[c], cloud.positions[a.labels == c].mean(axis=0))

    def test_rejects_bad_group_size(self):
        with pytest.raises(PlanError):
            cluster_kmeans(PointCloud(np.zeros((3, 3))), 0, seed=0)


class TestBuildMst:
    def test_single_point_has_no_edges(self):
        assert build_mst(np.zeros((1, 3))) == []

    def test_collinear_hand_case(self):
        pts = np.array([[0, 0, 0], [10, 0, 0], [3, 0, 0]], dtype=float)
        assert build_mst(pts) == [(0, 2), (1, 2)]

    @settings(deadline=None, max_examples=40)
    @given(
        st.integers(2, 7),
        st.integers(0, 10_000),
    )
    def test_matches_exhaustive_enumeration(self, n, seed):
        pts = np.random.default_rng(seed).uniform(0, 1000, (n, 3))
        edges = build_mst(pts)
        assert len(edges) == n - 1
        assert spanning_tree_weight(pts, edges) == pytest.approx(
            min_spanning_weight_exhaustive(pts), abs=1e-9
        )

    def test_rejects_empty(self):
        with pytest.raises(PlanError):
            build_mst(np.zeros((0, 3)))


class TestOrientTree:
    def test_path_graph_from_chosen_root(self):
        root, parent, children = orient_tree([(0, 1), (1, 2)], 3, root=2)
        assert root == 2
        assert parent == {1: 2, 0: 1}
        assert children[2] == [1] and children[1] == [0]

    def test_default_root_is_max_degree(self):
        # star centered at 1
        root, parent, _ = orient_tree([(0, 1), (1, 2), (1, 3)], 4)
        assert root == 1
        assert all(parent[v] == 1 for v in (0, 2, 3))


class TestSelectPrimaryAnchor:
    def test_closest_pair_wins(self):
        parent_pts = np.array([[0, 0, 0], [100, 0, 0]], dtype=float)
        child_pts = np.array([[105, 0, 0], [200, 0, 0]], dtype=float)
        anchor, primary = select_primary_anchor([7, 8], parent_pts, [20, 21], child_pts)
        assert (anchor, primary) == (8, 20)

    def test_distance_ties_break_to_low_ids(self):
        pts = np.array([[0, 0, 0], [10, 0, 0]], dtype=float)
        anchor, primary = select_primary_anchor([5, 3], pts, [9, 2], pts + np.array([0, 10, 0]))
        assert (anchor, primary) == (3, 2)


class TestAssignMountType:
    @pytest.mark.parametrize(
        "offset,expected",
        [
            ((0, 0, 10), MountType.TOP),
            ((0, 0, -10), MountType.BOTTOM),
            ((10, 0, 0), MountType.SIDE),
            ((10, 0, 9.9), MountType.SIDE),  # just below 45 degrees
            ((1, 0, 2), MountType.TOP),  # above 45 degrees
        ],
    )
    def test_elevation_bands(self, offset, expected):
        child = np.zeros(3)
        parent = np.array(offset, dtype=float)
        assert assign_mount_type(child, parent) is expected

    def test_rejects_coincident(self):
        with pytest.raises(PlanError):
            assign_mount_type(np.zeros(3), np.zeros(3))

    def test_heading_is_horizontal_unit(self):
        h = heading_of(np.zeros(3), np.array([3.0, 4.0, 100.0]))
        assert h.z == 0.0
        assert h.norm() == pytest.approx(1.0)
        assert np.allclose(h.to_array()[:2], [0.6, 0.8])


class TestInsertDarkFls:
    def test_in_range_pair_needs_none(self):
        assert insert_dark_fls(np.zeros(3), np.array([70.0, 0, 0]), 80.0) == []

    def test_split_count_and_spacing(self):
        a, b = np.zeros(3), np.array([250.0, 0, 0])
        interior = insert_dark_fls(a, b, 80.0)
        assert len(interior) == 3  # 4 sub-segments of 62.5 mm
        chain = [a, *interior, b]
        gaps = [np.linalg.norm(q - p) for p, q in zip(chain, chain[1:])]
        assert all(g <= 80.0 + 1e-9 for g in gaps)
        assert np.allclose(gaps, gaps[0])

    @settings(deadline=None, max_examples=50)
    @given(st.floats(1.0, 2000.0), st.floats(10.0, 300.0))
    def test_every_gap_within_range(self, dist, t_max):
        a, b = np.zeros(3), np.array([dist, 0.0, 0.0])
        chain = [a, *insert_dark_fls(a, b, t_max), b]
        gaps = [np.linalg.norm(q - p) for p, q in zip(chain, chain[1:])]
        assert all(g <= t_max * (1 + 1e-9) for g in gaps)


@pytest.fixture(scope="module")
def reference_cloud():
    mesh = parse_obj(skateboard_obj(1000, 250, 60))
    return sample_surface(mesh, 150, seed=11)


@pytest.fixture(scope="module")
def built(reference_cloud):
    spec = SensorSpec(t_min=60, t_max=80, radius_r=25, fov_half_angle=90)
    return plan(reference_cloud, 25, spec, seed=12)


class TestPlan:

    def test_validates_and_covers_cloud(self, built, reference_cloud):
        deployment, summary = built
        deployment.validate()
        assert summary["f"] == len(reference_cloud)
        # illuminating FLS coordinates are exactly the input points
        lit = [r for r in deployment.fls_records if not r.is_dark]
        assert len(lit) == len(reference_cloud)

    def test_all_pairs_within_sensor_range(self, built):
        deployment, _ = built
        dists = pair_distances(deployment)
        assert dists.max() <= deployment.sensor_spec.t_max * (1 + 1e-9)

    def test_one_primary_per_non_root_swarm(self, built):
        deployment, _ = built
        primaries = {r.id for r in deployment.fls_records if r.is_primary}
        edge_primaries = {p for _, _, _, p in deployment.swarm_tree.edges}
        assert primaries == edge_primaries
        assert len(deployment.swarm_tree.edges) == len(deployment.swarm_tree.nodes) - 1

    def test_anchor_lives_in_parent_swarm(self, built):
        deployment, _ = built
        for parent_s, child_s, anchor, primary in deployment.swarm_tree.edges:
            assert deployment.record(anchor).swarm_id == parent_s
            assert deployment.record(primary).swarm_id == child_s

    def test_records_consistent_with_trees(self, built):
        deployment, _ = built
        for t in deployment.fls_trees:
            for child, parent in t.parent.items():
                assert deployment.record(child).parent_id == parent
                assert child in deployment.record(parent).children_ids

    def test_side_mounts_have_headings(self, built):
        deployment, _ = built
        for r in deployment.fls_records:
            if r.mount is MountType.SIDE:
                assert isinstance(r.heading, Vec3)
                assert r.heading.z == 0.0
                assert r.heading.norm() == pytest.approx(1.0)
            else:
                assert r.heading is None

    def test_branching_factors_bounded(self, built):
        deployment, _ = built
        assert branching_factors(deployment).max() <= len(deployment.fls_records)

    def test_deterministic(self, reference_cloud):
        spec = SensorSpec(t_min=60, t_max=80, radius_r=25, fov_half_angle=90)
        a, _ = plan(reference_cloud, 25, spec, seed=12)
        b, _ = plan(reference_cloud, 25, spec, seed=12)
        assert a == b

    def test_dark_count_non_increasing_in_t_max(self, reference_cloud):
        counts = []
        for t_max in (70.0, 90.0, 120.0, 200.0):
            spec = SensorSpec(t_min=40, t_max=t_max, radius_r=20, fov_half_angle=90)
            _, summary = plan(reference_cloud, 25, spec, seed=12)
            counts.append(summary["dark_count"])
        assert counts == sorted(counts, reverse=True)
