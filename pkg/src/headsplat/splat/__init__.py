from headsplat.splat.camera import CameraModel, orbit_camera
from headsplat.splat.rasterizer import RenderOutput, render_gaussians, render_points

__all__ = [
    "CameraModel",
    "orbit_camera",
    "RenderOutput",
    "render_points",
    "render_gaussians",
]
