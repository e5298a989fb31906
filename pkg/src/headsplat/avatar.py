"""Render a checkpointed avatar for given pose, expression, and camera.

World orientation of each Gaussian is its trained local rotation composed
with the carrying point's rotation, so splats ride the deforming surface.
"""

from __future__ import annotations

import torch

from .errors import DataError
from .io.checkpoint import CheckpointState
from .morphable import PoseExpr, TemplateModel, skin
from .psm import deform_samples
from .rotations import quaternion_multiply
from .splat.rasterizer import RenderOutput, render_gaussians, render_points


def check_compatible(state: CheckpointState, model: TemplateModel) -> None:
    """Fail early when a checkpoint was trained against a different template."""
    state.cloud.validate(model)
    if state.corrective_pose is not None and state.corrective_pose.shape[-1] != 9 * model.num_joints:
        raise DataError(
            f"checkpoint pose corrective width {state.corrective_pose.shape[-1]} "
            f"does not match {model.num_joints} joints"
        )
    if state.corrective_expr is not None and state.corrective_expr.shape[-1] != model.num_expressions:
        raise DataError(
            f"checkpoint expression corrective width {state.corrective_expr.shape[-1]} "
            f"does not match {model.num_expressions} expressions"
        )


def deformed_point_frame(state: CheckpointState, model: TemplateModel, pe: PoseExpr):
    mesh = skin(model, pe, state.corrective_pose, state.corrective_expr)
    return deform_samples(mesh, state.cloud)


def render_avatar(
    state: CheckpointState,
    model: TemplateModel,
    pe: PoseExpr,
    camera,
    background: torch.Tensor | None = None,
    tile_size: int = 16,
) -> RenderOutput:
    """Dispatch on checkpoint stage: point splats for shape, Gaussians after."""
    frame = deformed_point_frame(state, model, pe)
    opacity = torch.sigmoid(state.opacity_raw)
    if state.stage == "shape":
        return render_points(
            frame.positions, state.radius, opacity, state.color, camera, background, tile_size
        )
    world_q = quaternion_multiply(state.local_q, frame.rotations)
    return render_gaussians(
        frame.positions,
        world_q,
        state.log_scale,
        opacity,
        state.sh_coeffs,
        camera,
        state.sh_degree,
        background,
        tile_size,
    )
