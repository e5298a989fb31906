"""Pinhole camera: x right, y down, z forward, pixel centers at half-integers.

u = fx * x/z + cx, v = fy * y/z + cy with (x, y, z) in camera coordinates.
Pixel (row i, col j) has its center at (u, v) = (j + 0.5, i + 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from headsplat.errors import DataError

DTYPE = torch.float64

Z_NEAR = 0.01


@dataclass
class CameraModel:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: torch.Tensor  # (3, 3) world -> camera
    translation: torch.Tensor  # (3,)

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise DataError(f"camera: non-positive image size {self.width}x{self.height}")
        if self.fx <= 0 or self.fy <= 0:
            raise DataError("camera: focal lengths must be positive")
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise DataError("camera: rotation must be (3,3) and translation (3,)")
        rt = self.rotation @ self.rotation.T
        if (rt - torch.eye(3, dtype=self.rotation.dtype)).abs().max() > 1e-6:
            raise DataError("camera: rotation is not orthonormal")

    @property
    def position(self) -> torch.Tensor:
        """Camera center in world coordinates."""
        return -(self.rotation.T @ self.translation)

    def world_to_camera(self, points: torch.Tensor) -> torch.Tensor:
        return points @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "rotation": self.rotation.reshape(-1).tolist(),
            "translation": self.translation.tolist(),
        }

    @staticmethod
    def from_dict(doc: dict) -> "CameraModel":
        try:
            cam = CameraModel(
                width=int(doc["width"]),
                height=int(doc["height"]),
                fx=float(doc["fx"]),
                fy=float(doc["fy"]),
                cx=float(doc["cx"]),
                cy=float(doc["cy"]),
                rotation=torch.tensor(doc["rotation"], dtype=DTYPE).reshape(3, 3),
                translation=torch.tensor(doc["translation"], dtype=DTYPE),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"camera: bad document: {exc}") from None
        cam.validate()
        return cam


def look_at(eye: torch.Tensor, target: torch.Tensor, up: torch.Tensor | None = None) -> tuple[torch.Tensor, torch.Tensor]:
    """World-to-camera rotation and translation for a camera at `eye` looking at `target`."""
    if up is None:
        up = torch.tensor([0.0, 1.0, 0.0], dtype=DTYPE)
    forward = target - eye
    norm = torch.linalg.norm(forward)
    if float(norm) < 1e-12:
        raise DataError("camera: eye and target coincide")
    forward = forward / norm
    right = torch.linalg.cross(forward, up)
    if float(torch.linalg.norm(right)) < 1e-9:
        raise DataError("camera: view direction is parallel to the up vector")
    right = right / torch.linalg.norm(right)
    down = torch.linalg.cross(forward, right)
    rot = torch.stack([right, down, forward])
    return rot, -(rot @ eye)


def orbit_camera(
    target,
    radius: float,
    azimuth_deg: float,
    elevation_deg: float,
    width: int,
    height: int,
    fov_deg: float = 40.0,
) -> CameraModel:
    """Camera on a sphere around `target`, looking at it.

    Azimuth 0, elevation 0 puts the camera on the +z side (frontal); azimuth
    turns around the world y axis, positive elevation raises the camera.
    """
    target = torch.as_tensor(target, dtype=DTYPE)
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    if abs(elevation_deg) >= 89.0:
        raise DataError("orbit elevation too close to the pole")
    eye = target + radius * torch.tensor(
        [math.sin(az) * math.cos(el), math.sin(el), math.cos(az) * math.cos(el)], dtype=DTYPE
    )
    rot, trans = look_at(eye, target)
    f = 0.5 * width / math.tan(math.radians(fov_deg) / 2)
    cam = CameraModel(
        width=width,
        height=height,
        fx=f,
        fy=f,
        cx=width / 2.0,
        cy=height / 2.0,
        rotation=rot,
        translation=trans,
    )
    cam.validate()
    return cam
