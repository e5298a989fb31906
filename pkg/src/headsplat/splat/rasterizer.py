"""Differentiable rasterization: torch autograd bridged to the tile kernels.

The torch side owns everything per-primitive (projection, covariance, SH);
the numba side owns everything per-pixel. The bridge passes screen-space
primitives down and pulls per-primitive gradients back up, reduced from the
tile-pair buffers in a fixed order so results do not depend on threading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from headsplat.errors import DataError
from headsplat.rotations import normalize_quaternion, quaternion_to_matrix
from headsplat.splat import kernels
from headsplat.splat.binning import TileBins, tile_bins
from headsplat.splat.camera import CameraModel
from headsplat.splat.projection import (
    covariance_from,
    gaussian_screen_radius,
    point_screen_radius,
    project_covariance,
    project_points,
)
from headsplat.splat.sh import rotate_sh, sh_to_color

DEFAULT_TILE = 16
KINDS = ("point", "gauss")


@dataclass
class RenderOutput:
    image: torch.Tensor  # (H, W, 3) linear RGB in [0, 1]
    alpha: torch.Tensor  # (H, W) accumulated opacity
    per_primitive_max_weight: torch.Tensor  # (N,) best compositing weight anywhere


def _np(t: torch.Tensor) -> np.ndarray:
    return np.ascontiguousarray(t.detach().to(torch.float64).contiguous().numpy())


class _Rasterize(torch.autograd.Function):
    @staticmethod
    def forward(ctx, uv, aux, sigma, rgb, kind, bins: TileBins, height, width, bg):
        uv_np, aux_np, sigma_np, rgb_np = _np(uv), _np(aux), _np(sigma), _np(rgb)
        image = np.zeros((height, width, 3), dtype=np.float64)
        alpha = np.zeros((height, width), dtype=np.float64)
        final_t = np.ones((height, width), dtype=np.float64)
        last_pair = np.full((height, width), -1, dtype=np.int64)
        pair_max = np.zeros(bins.num_pairs, dtype=np.float64)

        if bins.num_pairs:
            fn = kernels.forward_point if kind == "point" else kernels.forward_gauss
            fn(
                uv_np, aux_np, sigma_np, rgb_np, bg, bins.tile_size, bins.tiles_x,
                bins.tiles_y, bins.starts, bins.ends, bins.prim,
                image, alpha, final_t, last_pair, pair_max,
            )
        else:
            image[:] = bg

        max_weight = np.zeros(uv_np.shape[0], dtype=np.float64)
        np.maximum.at(max_weight, bins.prim, pair_max)

        ctx.kind = kind
        ctx.bins = bins
        ctx.shape = (height, width)
        ctx.bg = bg
        ctx.arrays = (uv_np, aux_np, sigma_np, rgb_np, final_t, last_pair)
        out_max = torch.from_numpy(max_weight)
        ctx.mark_non_differentiable(out_max)
        return torch.from_numpy(image), torch.from_numpy(alpha), out_max

    @staticmethod
    def backward(ctx, grad_image, grad_alpha, _grad_max):
        uv_np, aux_np, sigma_np, rgb_np, final_t, last_pair = ctx.arrays
        bins: TileBins = ctx.bins
        height, width = ctx.shape
        n = uv_np.shape[0]

        gi = (
            np.zeros((height, width, 3), dtype=np.float64)
            if grad_image is None
            else np.ascontiguousarray(grad_image.to(torch.float64).contiguous().numpy())
        )
        ga = (
            np.zeros((height, width), dtype=np.float64)
            if grad_alpha is None
            else np.ascontiguousarray(grad_alpha.to(torch.float64).contiguous().numpy())
        )

        pair_guv = np.zeros((bins.num_pairs, 2), dtype=np.float64)
        pair_gaux = np.zeros((bins.num_pairs, aux_np.shape[1] if aux_np.ndim > 1 else 1), dtype=np.float64)
        pair_gsigma = np.zeros(bins.num_pairs, dtype=np.float64)
        pair_grgb = np.zeros((bins.num_pairs, 3), dtype=np.float64)

        if bins.num_pairs:
            if ctx.kind == "point":
                kernels.backward_point(
                    uv_np, aux_np, sigma_np, rgb_np, ctx.bg, bins.tile_size, bins.tiles_x,
                    bins.tiles_y, bins.starts, bins.ends, bins.prim, final_t, last_pair,
                    gi, ga, pair_guv, pair_gaux[:, 0], pair_gsigma, pair_grgb,
                )
            else:
                kernels.backward_gauss(
                    uv_np, aux_np, sigma_np, rgb_np, ctx.bg, bins.tile_size, bins.tiles_x,
                    bins.tiles_y, bins.starts, bins.ends, bins.prim, final_t, last_pair,
                    gi, ga, pair_guv, pair_gaux, pair_gsigma, pair_grgb,
                )

        guv = np.zeros((n, 2), dtype=np.float64)
        gaux = np.zeros((n, pair_gaux.shape[1]), dtype=np.float64)
        gsigma = np.zeros(n, dtype=np.float64)
        grgb = np.zeros((n, 3), dtype=np.float64)
        np.add.at(guv, bins.prim, pair_guv)
        np.add.at(gaux, bins.prim, pair_gaux)
        np.add.at(gsigma, bins.prim, pair_gsigma)
        np.add.at(grgb, bins.prim, pair_grgb)

        gaux_t = torch.from_numpy(gaux if ctx.kind == "gauss" else gaux[:, 0])
        return (
            torch.from_numpy(guv),
            gaux_t,
            torch.from_numpy(gsigma),
            torch.from_numpy(grgb),
            None, None, None, None, None,
        )


def rasterize_screen(
    kind: str,
    uv: torch.Tensor,
    aux: torch.Tensor,
    sigma: torch.Tensor,
    rgb: torch.Tensor,
    depth: torch.Tensor,
    width: int,
    height: int,
    background: torch.Tensor | None = None,
    tile_size: int = DEFAULT_TILE,
    active: torch.Tensor | None = None,
    bin_radius: torch.Tensor | None = None,
) -> RenderOutput:
    """Composite screen-space primitives.

    kind "point": aux is the projected pixel radius (N,). kind "gauss": aux is
    the conic (N, 3). `bin_radius` is the tile-coverage radius in pixels; for
    points it defaults to aux. `active` masks primitives out of binning
    without renumbering them.
    """
    if kind not in KINDS:
        raise DataError(f"unknown rasterizer kind '{kind}'")
    if background is None:
        background = torch.ones(3, dtype=torch.float64)
    if kind == "point" and bin_radius is None:
        bin_radius = aux
    if bin_radius is None:
        raise DataError("gauss rasterization needs an explicit bin_radius")

    bins = tile_bins(
        _np(uv),
        _np(depth),
        _np(bin_radius),
        width,
        height,
        tile_size,
        active=None if active is None else active.detach().numpy().astype(bool),
    )
    bg = _np(background)
    image, alpha, max_weight = _Rasterize.apply(uv, aux, sigma, rgb, kind, bins, height, width, bg)
    return RenderOutput(image=image, alpha=alpha, per_primitive_max_weight=max_weight)


def render_points(
    positions: torch.Tensor,
    radius_world: torch.Tensor,
    opacity: torch.Tensor,
    colors: torch.Tensor,
    camera: CameraModel,
    background: torch.Tensor | None = None,
    tile_size: int = DEFAULT_TILE,
) -> RenderOutput:
    """Render the point-kernel stage: world positions with a fixed world radius."""
    uv, depth, visible = project_points(positions, camera)
    r_screen = point_screen_radius(radius_world, depth, camera)
    return rasterize_screen(
        "point",
        uv,
        r_screen,
        opacity,
        colors,
        depth,
        camera.width,
        camera.height,
        background,
        tile_size,
        active=visible,
    )


def render_gaussians(
    positions: torch.Tensor,
    world_q: torch.Tensor,
    log_scale: torch.Tensor,
    opacity: torch.Tensor,
    sh_coeffs: torch.Tensor,
    camera: CameraModel,
    sh_degree: int,
    background: torch.Tensor | None = None,
    tile_size: int = DEFAULT_TILE,
) -> RenderOutput:
    """Render anisotropic Gaussians with SH color, orientation given in world frame.

    SH coefficients are stored in each primitive's local frame and rotated to
    world by the same quaternion that orients the covariance, so appearance
    rides along when the carrying point turns.
    """
    world_q = normalize_quaternion(world_q)
    cov_world = covariance_from(world_q, log_scale)
    uv, depth, visible = project_points(positions, camera)
    cam_pts = camera.world_to_camera(positions)
    cov2d, conic = project_covariance(cov_world, cam_pts, camera)
    radius = gaussian_screen_radius(cov2d.detach())

    dirs = positions - camera.position
    dirs = dirs / dirs.norm(dim=1, keepdim=True).clamp_min(1e-12)
    if sh_degree > 0:
        sh_coeffs = rotate_sh(sh_coeffs, quaternion_to_matrix(world_q), sh_degree)
    rgb = sh_to_color(sh_coeffs, dirs, sh_degree)

    return rasterize_screen(
        "gauss",
        uv,
        conic,
        opacity,
        rgb,
        depth,
        camera.width,
        camera.height,
        background,
        tile_size,
        active=visible,
        bin_radius=radius,
    )
