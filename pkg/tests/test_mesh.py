"""OBJ parsing, density bounds, and blue-noise surface sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarical import SensorSpec, density_bounds, parse_obj, sample_surface
from swarical.core import PlanError
from swarical.mesh import MeshError, box_mesh, skateboard_obj


class TestParseObj:
    def test_triangle(self):
        mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        assert len(mesh.vertices) == 3
        assert len(mesh.faces) == 1
        assert mesh.total_area == pytest.approx(0.5)
        assert np.allclose(mesh.face_normals[0], [0, 0, 1])

    def test_quad_fan_triangulation(self):
        mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        assert len(mesh.faces) == 2
        assert mesh.total_area == pytest.approx(1.0)

    def test_slash_references_and_comments(self):
        text = "# header\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2/1/1 3\n"
        mesh = parse_obj(text)
        assert len(mesh.faces) == 1

    def test_negative_indices(self):
        mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
        assert mesh.faces.tolist() == [[0, 1, 2]]

    def test_degenerate_faces_dropped_and_counted(self):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 2\n"
        mesh = parse_obj(text)
        assert len(mesh.faces) == 1
        assert mesh.dropped_degenerate == 1

    def test_bytes_input(self):
        mesh = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        assert len(mesh.faces) == 1

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "v 0 0 0\n",
            "v 0 0\nf 1 1 1\n",
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n",
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n",
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n",
            "v a b c\nf 1 1 1\n",
        ],
    )
    def test_rejects_malformed(self, text):
        with pytest.raises(MeshError):
            parse_obj(text)

    def test_box_area_closed_form(self):
        lx, ly, lz = 100.0, 40.0, 30.0
        mesh = box_mesh(lx, ly, lz)
        assert mesh.total_area == pytest.approx(2 * (lx * ly + ly * lz + lx * lz))

    def test_box_normals_point_outward(self):
        mesh = box_mesh(10, 10, 10)
        centers = mesh.vertices[mesh.faces].mean(axis=1)
        outward = centers - np.array([5.0, 5.0, 5.0])
        dots = (mesh.face_normals * outward).sum(axis=1)
        assert (dots > 0).all()


class TestDensityBounds:
    def test_hand_computed_window(self):
        # d_min packs at t_max/2 = 40 mm, d_max at t_min/2 = 30 mm
        spec = SensorSpec(t_min=60, t_max=80, radius_r=25)
        area = 1e6
        b = density_bounds(spec, area)
        assert b.d_min == pytest.approx(1.0 / (math.pi * 40.0**2))
        assert b.d_max == pytest.approx(1.0 / (math.pi * 30.0**2))
        assert b.n_min == math.ceil(b.d_min * area)
        assert b.n_max == math.floor(b.d_max * area)

    def test_body_radius_caps_density(self):
        spec = SensorSpec(t_min=10, t_max=80, radius_r=25)
        b = density_bounds(spec, 1e6)
        # t_min/2 = 5 mm is tighter than the 25 mm body radius allows
        assert b.d_max == pytest.approx(1.0 / (math.pi * 25.0**2))

    def test_window_ordering(self):
        spec = SensorSpec(t_min=60, t_max=80, radius_r=25)
        b = density_bounds(spec, 5e5)
        assert b.d_min <= b.d_max
        assert b.n_min <= b.n_max

    def test_rejects_non_positive_area(self):
        spec = SensorSpec(t_min=60, t_max=80, radius_r=25)
        with pytest.raises(PlanError):
            density_bounds(spec, 0.0)

    def test_rejects_radius_beyond_range(self):
        spec = SensorSpec(t_min=60, t_max=80, radius_r=90)
        with pytest.raises(PlanError):
            density_bounds(spec, 1e6)

    @settings(deadline=None)
    @given(st.floats(min_value=1e3, max_value=1e8))
    def test_counts_scale_with_area(self, area):
        spec = SensorSpec(t_min=60, t_max=80, radius_r=25)
        b = density_bounds(spec, area)
        assert 0 <= b.n_min <= b.n_max


@pytest.fixture(scope="module")
def mesh():
    return parse_obj(skateboard_obj(1000, 250, 60))


class TestSampleSurface:

    def test_exact_count(self, mesh):
        assert len(sample_surface(mesh, 120, seed=0)) == 120

    def test_deterministic_per_seed(self, mesh):
        a = sample_surface(mesh, 60, seed=5)
        b = sample_surface(mesh, 60, seed=5)
        c = sample_surface(mesh, 60, seed=6)
        assert (a.positions == b.positions).all()
        assert not (a.positions == c.positions).all()

    def test_points_lie_on_surface(self, mesh):
        cloud = sample_surface(mesh, 100, seed=1)
        lo = mesh.vertices.min(axis=0) - 1e-9
        hi = mesh.vertices.max(axis=0) + 1e-9
        assert (cloud.positions >= lo).all() and (cloud.positions <= hi).all()
        # every point sits on at least one box face plane
        on_face = np.zeros(len(cloud), dtype=bool)
        for axis in range(3):
            for plane in (lo[axis] + 1e-9, hi[axis] - 1e-9):
                on_face |= np.abs(cloud.positions[:, axis] - plane) < 1e-6
        assert on_face.all()

    def test_minimum_separation(self, mesh):
        cloud = sample_surface(mesh, 100, seed=2)
        d = np.linalg.norm(
            cloud.positions[:, None, :] - cloud.positions[None, :, :], axis=2
        )
        np.fill_diagonal(d, np.inf)
        assert d.min() >= cloud.min_radius - 1e-9

    def test_normals_are_unit(self, mesh):
        cloud = sample_surface(mesh, 50, seed=3)
        assert np.allclose(np.linalg.norm(cloud.normals, axis=1), 1.0)

    def test_rejects_non_positive_count(self, mesh):
        with pytest.raises(PlanError):
            sample_surface(mesh, 0, seed=0)
