"""Measurement and deployment error models.

Turns ground-truth geometry into what an FLS actually observes: a
distance-dependent positive percentage error on measured vectors (the
camera/marker calibration curve), orientation noise metadata, and a
dead-reckoning deflection applied when an FLS travels to its assigned
coordinate.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .core import MountType, PlanError, RelativePose, Vec3


@dataclass(frozen=True)
class CalibrationCurve:
    """Piecewise-linear percentage error as a function of distance, with
    hard detection limits outside which the target is simply not seen."""

    breakpoints: tuple  # ((distance_mm, error_pct), ...) strictly increasing
    d_lo: float
    d_hi: float

    def __post_init__(self):
        ds = [d for d, _ in self.breakpoints]
        if not ds:
            raise PlanError("calibration curve needs at least one breakpoint")
        if any(b <= a for a, b in zip(ds, ds[1:])):
            raise PlanError("calibration breakpoints must be strictly increasing")
        if any(e < 0 for _, e in self.breakpoints):
            raise PlanError("error_pct must be non-negative")
        if not self.d_lo < self.d_hi:
            raise PlanError(f"need d_lo < d_hi, got [{self.d_lo}, {self.d_hi}]")

    def to_csv(self) -> str:
        lines = [f"# d_lo={self.d_lo!r} d_hi={self.d_hi!r}", "distance_mm,error_pct"]
        lines += [f"{d!r},{e!r}" for d, e in self.breakpoints]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text: str) -> "CalibrationCurve":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("#"):
            raise PlanError("calibration CSV must start with '# d_lo=<mm> d_hi=<mm>'")
        limits = {}
        for tok in lines[0].lstrip("#").split():
            key, _, val = tok.partition("=")
            limits[key] = float(val)
        if lines[1] != "distance_mm,error_pct":
            raise PlanError("calibration CSV header must be 'distance_mm,error_pct'")
        bps = []
        for ln in lines[2:]:
            d, e = ln.split(",")
            bps.append((float(d), float(e)))
        return CalibrationCurve(tuple(bps), d_lo=limits["d_lo"], d_hi=limits["d_hi"])


def default_curve() -> CalibrationCurve:
    """Default camera/marker calibration: ~1.5% in the 60-80 mm sweet
    spot (0.9-1.2 mm absolute), growing toward the detection limits.
    Hardware re-characterization goes through the CSV format, not code.
    """
    return CalibrationCurve(
        breakpoints=(
            (1.0, 3.0),
            (10.0, 2.5),
            (50.0, 1.4),
            (60.0, 1.5),
            (80.0, 1.5),
            (120.0, 2.2),
            (200.0, 4.5),
            (300.0, 8.0),
        ),
        d_lo=1.0,
        d_hi=300.0,
    )


def flat_curve(error_pct: float, d_lo: float = 50.0, d_hi: float = 300.0) -> CalibrationCurve:
    """Constant-percentage curve, handy for controlled experiments."""
    return CalibrationCurve(((d_lo, error_pct), (d_hi, error_pct)), d_lo=d_lo, d_hi=d_hi)


def error_pct_at(curve: CalibrationCurve, d: float) -> float:
    """Interpolate the calibration curve, clamping outside its span."""
    if d <= 0:
        raise PlanError(f"distance must be positive, got {d}")
    bps = curve.breakpoints
    if d <= bps[0][0]:
        return bps[0][1]
    if d >= bps[-1][0]:
        return bps[-1][1]
    idx = 1
    while bps[idx][0] < d:
        idx += 1
    (d0, e0), (d1, e1) = bps[idx - 1], bps[idx]
    return e0 + (e1 - e0) * (d - d0) / (d1 - d0)


@dataclass(frozen=True)
class NoiseModel:
    curve: CalibrationCurve
    orientation_sigma_deg: tuple = (0.5, 0.5, 0.2)  # roll, pitch, yaw
    # error_pct draw: Normal(mean=curve(d), sd=mean/relative_sd_div),
    # truncated at zero.  relative_sd_div=0 disables the spread entirely.
    relative_sd_div: float = 3.0

    def __post_init__(self):
        if any(s < 0 for s in self.orientation_sigma_deg):
            raise PlanError("orientation sigmas must be non-negative")


@dataclass(frozen=True)
class DetectionFailure:
    """The observer could not see the target: out of range or outside
    the mount's field-of-view cone."""

    reason: str  # "range" or "fov"
    distance: float


def _mount_axis(mount: MountType, heading: Vec3 | None) -> np.ndarray:
    if mount is MountType.TOP:
        return np.array([0.0, 0.0, 1.0])
    if mount is MountType.BOTTOM:
        return np.array([0.0, 0.0, -1.0])
    h = heading.to_array() if heading is not None else np.array([1.0, 0.0, 0.0])
    n = np.linalg.norm(h)
    return h / n if n > 0 else np.array([1.0, 0.0, 0.0])


def measure_relative_pose(
    true_vec: np.ndarray,
    observer_mount: MountType,
    model: NoiseModel,
    rng: np.random.Generator,
    heading: Vec3 | None = None,
    fov_half_angle: float = 60.0,
):
    """Observe a target whose true offset from the observer is true_vec.

    Fails when the target is outside the detection range or the mount's
    FoV cone.  Otherwise returns the vector scaled by (1 + p/100) where p
    is a truncated-normal percentage with mean from the calibration
    curve: the positive bias makes measured distances overestimates.
    """
    true_vec = np.asarray(true_vec, dtype=float)
    d = float(np.linalg.norm(true_vec))
    if d <= 0:
        raise PlanError("cannot measure a zero-length offset")
    if d < model.curve.d_lo or d > model.curve.d_hi:
        return DetectionFailure("range", d)
    axis = _mount_axis(observer_mount, heading)
    cos_angle = float(np.dot(true_vec, axis)) / d
    if math.degrees(math.acos(np.clip(cos_angle, -1.0, 1.0))) > fov_half_angle:
        return DetectionFailure("fov", d)

    mean = error_pct_at(model.curve, d)
    if model.relative_sd_div > 0 and mean > 0:
        sd = mean / model.relative_sd_div
        p = float(rng.normal(mean, sd))
        while p < 0:
            p = float(rng.normal(mean, sd))
    else:
        p = mean
    orientation = tuple(float(rng.normal(0.0, s)) if s > 0 else 0.0 for s in model.orientation_sigma_deg)
    return RelativePose(
        vec=Vec3.from_array(true_vec * (1.0 + p / 100.0)),
        orientation_deg=orientation,
        error_pct=p,
    )


def deploy_with_dead_reckoning(
    target: np.ndarray,
    origin: np.ndarray,
    dr_epsilon_deg: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Arrival position after IMU-only travel from origin toward target.

    The travel vector is deflected about a uniformly random perpendicular
    axis by an angle uniform in [0, dr_epsilon_deg], so the arrival error
    grows with the traveled distance.
    """
    target = np.asarray(target, dtype=float)
    origin = np.asarray(origin, dtype=float)
    travel = target - origin
    d = np.linalg.norm(travel)
    if d == 0:
        raise PlanError("deployment target equals origin")
    if dr_epsilon_deg == 0:
        return target.copy()
    u = travel / d
    # orthonormal basis perpendicular to the travel direction
    ref = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = np.cross(u, ref)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(u, b1)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    axis = math.cos(phi) * b1 + math.sin(phi) * b2
    theta = math.radians(rng.uniform(0.0, dr_epsilon_deg))
    # Rodrigues rotation of the travel vector about the perpendicular axis
    rotated = (
        travel * math.cos(theta)
        + np.cross(axis, travel) * math.sin(theta)
        + axis * np.dot(axis, travel) * (1.0 - math.cos(theta))
    )
    return origin + rotated
