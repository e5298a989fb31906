"""World-space covariance construction and perspective projection to screen.

Covariances are built as R S S^T R^T from a unit quaternion and per-axis log
scales, pushed through the camera with the first-order Jacobian of the
perspective map, and floored at 0.3 px^2 on screen so every splat covers at
least a pixel's footprint.
"""

from __future__ import annotations

import math

import torch

from headsplat.rotations import quaternion_to_matrix
from headsplat.splat.camera import Z_NEAR, CameraModel

COV2D_FLOOR = 0.3  # px^2, added to both screen-space variances
# binning radius covers every pixel whose Gaussian factor can reach 1/255
GAUSS_CUTOFF = math.sqrt(2.0 * math.log(255.0))


def covariance_from(q: torch.Tensor, log_scale: torch.Tensor) -> torch.Tensor:
    """Sigma = R diag(exp(2 s)) R^T for quaternions (N,4), log scales (N,3)."""
    rot = quaternion_to_matrix(q)
    var = torch.exp(2.0 * log_scale)  # (N, 3)
    return torch.einsum("nab,nb,ncb->nac", rot, var, rot)


def project_points(positions: torch.Tensor, camera: CameraModel) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """World points (N,3) -> pixel coords (N,2), depth (N,), visibility mask (N,).

    Points behind or closer than Z_NEAR are masked out; their uv rows are
    computed against a clamped depth so no division blows up.
    """
    cam_pts = camera.world_to_camera(positions)
    depth = cam_pts[:, 2]
    visible = depth > Z_NEAR
    safe_z = depth.clamp_min(Z_NEAR)
    u = camera.fx * cam_pts[:, 0] / safe_z + camera.cx
    v = camera.fy * cam_pts[:, 1] / safe_z + camera.cy
    return torch.stack([u, v], dim=1), depth, visible


def project_covariance(
    cov_world: torch.Tensor, cam_pts: torch.Tensor, camera: CameraModel
) -> tuple[torch.Tensor, torch.Tensor]:
    """Screen-space covariance: J W Sigma W^T J^T + floor.

    cov_world (N,3,3), cam_pts (N,3) in camera coordinates. Returns the 2x2
    covariance packed as (a, b, c) rows [[a, b], [b, c]] and its conic
    (inverse) in the same packing.
    """
    x, y = cam_pts[:, 0], cam_pts[:, 1]
    z = cam_pts[:, 2].clamp_min(Z_NEAR)
    zero = torch.zeros_like(z)
    jac = torch.stack(
        [
            torch.stack([camera.fx / z, zero, -camera.fx * x / (z * z)], dim=1),
            torch.stack([zero, camera.fy / z, -camera.fy * y / (z * z)], dim=1),
        ],
        dim=1,
    )  # (N, 2, 3)
    w = camera.rotation.to(cov_world.dtype)
    cov_cam = torch.einsum("ab,nbc,dc->nad", w, cov_world, w)
    cov2d = torch.einsum("nab,nbc,ndc->nad", jac, cov_cam, jac)
    a = cov2d[:, 0, 0] + COV2D_FLOOR
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1] + COV2D_FLOOR
    det = a * c - b * b
    conic = torch.stack([c / det, -b / det, a / det], dim=1)
    return torch.stack([a, b, c], dim=1), conic


def gaussian_screen_radius(cov2d: torch.Tensor) -> torch.Tensor:
    """Pixel radius enclosing the alpha >= 1/255 support, from packed (a,b,c)."""
    a, b, c = cov2d[:, 0], cov2d[:, 1], cov2d[:, 2]
    mid = 0.5 * (a + c)
    det = a * c - b * b
    lam_max = mid + torch.sqrt((mid * mid - det).clamp_min(0.0))
    return GAUSS_CUTOFF * torch.sqrt(lam_max)


def point_screen_radius(radius_world: torch.Tensor, depth: torch.Tensor, camera: CameraModel) -> torch.Tensor:
    """Projected kernel radius in pixels: fx * r / z."""
    return camera.fx * radius_world / depth.clamp_min(Z_NEAR)
