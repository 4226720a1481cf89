"""Calibrated pinhole cameras on a timestamped trajectory.

Poses are world-to-camera (x_cam = R @ x_world + tvec) with the camera
looking along +z. Arbitrary query times interpolate linearly in translation
and spherically in rotation between the bracketing keyframes; queries
outside the track clamp to the end poses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int


@dataclass(frozen=True)
class CameraPose:
    t: float
    rotation: np.ndarray  # (3,3) world-to-camera
    tvec: np.ndarray      # (3,)

    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.tvec


class CameraTrack:
    """Ordered calibrated poses, interpolable to arbitrary time."""

    def __init__(self, intrinsics: Intrinsics, times, rotations, tvecs):
        self.intrinsics = intrinsics
        self.times = np.asarray(times, dtype=np.float64)
        self.rotations = np.asarray(rotations, dtype=np.float64)
        self.tvecs = np.asarray(tvecs, dtype=np.float64)
        if self.times.ndim != 1 or len(self.times) == 0:
            raise ValueError("track needs at least one pose")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("pose timestamps must be strictly increasing")
        if self.rotations.shape != (len(self.times), 3, 3):
            raise ValueError("rotations must be (V,3,3)")
        if self.tvecs.shape != (len(self.times), 3):
            raise ValueError("tvecs must be (V,3)")
        eye = np.eye(3)
        for i, r in enumerate(self.rotations):
            if not np.allclose(r @ r.T, eye, atol=1e-6):
                raise ValueError(f"pose {i}: rotation not orthonormal")
        # unit quaternions (x,y,z,w) for slerp, sign-aligned along the track
        quats = Rotation.from_matrix(self.rotations).as_quat().reshape(-1, 4)
        for i in range(1, len(quats)):
            if np.dot(quats[i], quats[i - 1]) < 0:
                quats[i] = -quats[i]
        self._quats = quats

    def __len__(self) -> int:
        return len(self.times)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def pose(self, index: int) -> CameraPose:
        return CameraPose(float(self.times[index]), self.rotations[index], self.tvecs[index])

    def pose_at(self, t: float) -> CameraPose:
        """Interpolated pose at time t (lerp translation, slerp rotation)."""
        if t <= self.times[0]:
            return self.pose(0)
        if t >= self.times[-1]:
            return self.pose(len(self) - 1)
        hi = int(np.searchsorted(self.times, t, side="right"))
        lo = hi - 1
        u = (t - self.times[lo]) / (self.times[hi] - self.times[lo])
        tvec = (1.0 - u) * self.tvecs[lo] + u * self.tvecs[hi]
        q = _slerp(self._quats[lo], self._quats[hi], u)
        rot = Rotation.from_quat(q).as_matrix()
        return CameraPose(float(t), rot, tvec)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        k = self.intrinsics
        return {
            "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
                           "w": k.width, "h": k.height},
            "poses": [
                {"t": float(t), "R": r.reshape(9).tolist(), "tvec": v.tolist()}
                for t, r, v in zip(self.times, self.rotations, self.tvecs)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CameraTrack":
        k = doc["intrinsics"]
        intr = Intrinsics(float(k["fx"]), float(k["fy"]), float(k["cx"]),
                          float(k["cy"]), int(k["w"]), int(k["h"]))
        poses = doc["poses"]
        times = [p["t"] for p in poses]
        rots = [np.asarray(p["R"], dtype=np.float64).reshape(3, 3) for p in poses]
        tvecs = [np.asarray(p["tvec"], dtype=np.float64) for p in poses]
        return cls(intr, times, rots, tvecs)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "CameraTrack":
        return cls.from_json(json.loads(Path(path).read_text()))


def _slerp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    """Spherical interpolation of unit quaternions (shortest arc)."""
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1, dot = -q1, -dot
    if dot > 0.9995:  # nearly parallel: lerp + renormalize
        q = (1.0 - u) * q0 + u * q1
        return q / np.linalg.norm(q)
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    s = np.sin(theta)
    return (np.sin((1.0 - u) * theta) / s) * q0 + (np.sin(u * theta) / s) * q1


def project(points: np.ndarray, pose: CameraPose, intr: Intrinsics):
    """Pinhole projection of (N,3) world points.

    Returns (pixels (N,2), depths (N,), valid (N,) bool). Points at or
    behind the camera plane (depth < MIN_DEPTH) are flagged invalid and get
    unreliable pixel values; callers must exclude them.
    """
    pts = np.asarray(points, dtype=np.float64)
    cam = pts @ pose.rotation.T + pose.tvec
    z = cam[:, 2]
    valid = z >= MIN_DEPTH
    z_safe = np.where(valid, z, 1.0)
    px = np.empty((len(pts), 2))
    px[:, 0] = intr.fx * cam[:, 0] / z_safe + intr.cx
    px[:, 1] = intr.fy * cam[:, 1] / z_safe + intr.cy
    return px, z, valid


def project_backward(points: np.ndarray, pose: CameraPose, intr: Intrinsics,
                     d_pixels: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Gradient of project() w.r.t. the world points.

    ``d_pixels`` is (N,2) upstream gradient; invalid points get zero.
    """
    pts = np.asarray(points, dtype=np.float64)
    cam = pts @ pose.rotation.T + pose.tvec
    z = np.where(valid, cam[:, 2], 1.0)
    gx, gy = d_pixels[:, 0], d_pixels[:, 1]
    d_cam = np.zeros_like(cam)
    d_cam[:, 0] = intr.fx * gx / z
    d_cam[:, 1] = intr.fy * gy / z
    d_cam[:, 2] = -(intr.fx * cam[:, 0] * gx + intr.fy * cam[:, 1] * gy) / (z * z)
    d_cam[~valid] = 0.0
    return d_cam @ pose.rotation


def look_at_pose(position, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera (R, tvec) for a camera at ``position`` facing ``target``."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - position
    fwd = fwd / np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    nr = np.linalg.norm(right)
    if nr < 1e-9:  # forward parallel to up: pick another up
        up = np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, up)
        nr = np.linalg.norm(right)
    right = right / nr
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    return rot, -rot @ position
