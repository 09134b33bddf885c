"""Quality metrics between an estimated and a ground-truth cloud.

Hausdorff distance (maximum error), Chamfer distance (summed averaged
squared error), centroid alignment, time-series recording, and the
analytical shrink-based error estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import PlanError, PointCloud


@dataclass(frozen=True)
class MetricSample:
    t_ms: float
    hd_mm: float
    cd_mm2: float
    total_distance_mm: float
    moves_count: int


def align_centroids(e: PointCloud, p: PointCloud) -> PointCloud:
    """Translate e so its centroid coincides with p's."""
    if len(e) != len(p):
        raise PlanError(f"cloud sizes differ: {len(e)} vs {len(p)}")
    if len(e) == 0:
        raise PlanError("empty cloud")
    shift = p.positions.mean(axis=0) - e.positions.mean(axis=0)
    return PointCloud(e.positions + shift, e.normals)


def _nn_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point of a to its nearest neighbor in b."""
    if len(a) * len(b) <= 40_000:
        d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        return d.min(axis=1)
    return cKDTree(b).query(a, k=1)[0]


def hausdorff(a: PointCloud, b: PointCloud) -> float:
    """Symmetric Hausdorff distance in mm."""
    if len(a) == 0 or len(b) == 0:
        raise PlanError("hausdorff over an empty cloud")
    return float(max(_nn_dists(a.positions, b.positions).max(),
                     _nn_dists(b.positions, a.positions).max()))


def chamfer(a: PointCloud, b: PointCloud) -> float:
    """Chamfer distance in mm^2: mean squared nearest-neighbor distance
    in each direction, summed."""
    if len(a) == 0 or len(b) == 0:
        raise PlanError("chamfer over an empty cloud")
    ab = _nn_dists(a.positions, b.positions)
    ba = _nn_dists(b.positions, a.positions)
    return float(np.mean(ab**2) + np.mean(ba**2))


def estimate_hd(p: PointCloud, cam_epsilon_pct: float) -> float:
    """Analytical Hausdorff estimate for a sensor with a positive
    percentage bias: shrink the cloud about its centroid by epsilon
    percent and compare against the original."""
    if cam_epsilon_pct < 0:
        raise PlanError(f"epsilon must be non-negative, got {cam_epsilon_pct}")
    if len(p) == 0:
        raise PlanError("empty cloud")
    centroid = p.positions.mean(axis=0)
    scaled = centroid + (p.positions - centroid) * (1.0 - cam_epsilon_pct / 100.0)
    shrunk = align_centroids(PointCloud(scaled, p.normals), p)  # no-op by construction
    return hausdorff(shrunk, p)


class MetricRecorder:
    """Collects one MetricSample per engine sampling event and renders
    the series as CSV."""

    def __init__(self, ground_truth: PointCloud, include_dark: bool = True,
                 dark_mask: np.ndarray | None = None):
        self.include_dark = include_dark
        if not include_dark and dark_mask is not None:
            self.keep = ~dark_mask
        else:
            self.keep = np.ones(len(ground_truth), dtype=bool)
        self.gt = PointCloud(ground_truth.positions[self.keep])
        self.samples: list[MetricSample] = []

    def record(self, t_ms: float, positions: np.ndarray, total_distance_mm: float,
               moves_count: int) -> MetricSample:
        est = align_centroids(PointCloud(positions[self.keep]), self.gt)
        sample = MetricSample(
            t_ms=t_ms,
            hd_mm=hausdorff(est, self.gt),
            cd_mm2=chamfer(est, self.gt),
            total_distance_mm=total_distance_mm,
            moves_count=moves_count,
        )
        self.samples.append(sample)
        return sample

    def to_csv(self) -> str:
        lines = ["t_ms,hd_mm,cd_mm2,total_distance_mm,moves"]
        for s in self.samples:
            vals = ",".join(repr(float(v)) for v in (s.t_ms, s.hd_mm, s.cd_mm2, s.total_distance_mm))
            lines.append(f"{vals},{s.moves_count}")
        return "\n".join(lines) + "\n"


def series_from_csv(text: str) -> list[MetricSample]:
    rows = text.strip().splitlines()
    if not rows or rows[0] != "t_ms,hd_mm,cd_mm2,total_distance_mm,moves":
        raise PlanError("metric series CSV has an unexpected header")
    out = []
    for line in rows[1:]:
        t, hd, cd, dist, moves = line.split(",")
        out.append(MetricSample(float(t), float(hd), float(cd), float(dist), int(moves)))
    return out
