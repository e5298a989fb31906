"""Two-stage avatar fitting.

Stage one aligns geometry with flat-colored point splats: cheap, wide
support, forgiving gradients. Stage two swaps in oriented Gaussians with SH
color on the surviving points and refines appearance. Both stages walk a
seeded permutation of frames, one batch per Adam step.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import torch

from ..errors import DataError, NumericalError
from ..io.checkpoint import CheckpointState
from ..io.dataset import FrameRecord
from ..morphable import DTYPE, TemplateModel, skin
from ..psm import PsmCloud, deform_samples, default_point_radius, prune
from ..rotations import quaternion_multiply
from ..splat.rasterizer import render_gaussians, render_points
from ..splat.sh import C0, num_coeffs
from .adam import Adam, ParamGroup
from .losses import loss_perceptual, loss_rgb, loss_scaling, total_loss
from .metrics import psnr, silhouette_iou

logger = logging.getLogger(__name__)

StatsSink = Callable[[dict], None]


@dataclass
class OptimConfig:
    lambda_perceptual: float = 0.1
    lambda_scaling: float = 0.1
    lr_color: float = 2.5e-3
    lr_sh: float = 2.5e-3
    lr_opacity: float = 5e-2
    lr_local_q: float = 1e-3
    lr_log_scale: float = 5e-3
    lr_corrective: float = 1e-4
    shape_epochs: int = 2
    appearance_epochs: int = 10
    prune_threshold: float = 0.01
    batch_size: int = 1
    seed: int = 0
    point_radius: float | None = None
    sh_degree: int = 3
    enable_perceptual: bool = True
    enable_corrective: bool = True
    freeze_corrective_in_stage2: bool = True

    def validate(self) -> None:
        if self.shape_epochs < 1 or self.appearance_epochs < 1:
            raise DataError("epoch counts must be at least 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be at least 1")
        if not 0.0 <= self.prune_threshold < 1.0:
            raise DataError(f"prune_threshold must be in [0, 1), got {self.prune_threshold}")
        if not 0 <= self.sh_degree <= 3:
            raise DataError(f"sh_degree must be in [0, 3], got {self.sh_degree}")
        if self.point_radius is not None and self.point_radius <= 0.0:
            raise DataError("point_radius must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "OptimConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise DataError(f"unknown config keys {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg


def write_stats(path: str | Path, stats: list[dict]) -> None:
    with open(path, "w") as fh:
        for row in stats:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _batches(perm: torch.Tensor, size: int) -> list[list[int]]:
    idx = [int(i) for i in perm]
    return [idx[k : k + size] for k in range(0, len(idx), size)]


def _check_finite(loss: torch.Tensor, stage: str, epoch: int, iteration: int, frames: list[int]) -> None:
    if not torch.isfinite(loss):
        raise NumericalError(
            f"non-finite loss {float(loss.detach())} in {stage} stage, epoch {epoch}, "
            f"iteration {iteration}, frames {frames}"
        )


def fit_shape(
    records: list[FrameRecord],
    model: TemplateModel,
    cloud: PsmCloud,
    cfg: OptimConfig,
    on_stats: StatsSink | None = None,
) -> tuple[CheckpointState, list[dict]]:
    """Stage one: optimize point color/opacity and corrective bases, then prune."""
    cfg.validate()
    if not records:
        raise DataError("shape stage needs a nonempty dataset")
    cloud.validate(model)
    n = len(cloud)

    color = torch.full((n, 3), 0.5, dtype=DTYPE, requires_grad=True)
    opacity_raw = torch.zeros(n, dtype=DTYPE, requires_grad=True)
    radius_value = cfg.point_radius if cfg.point_radius is not None else default_point_radius(model)
    radius = torch.full((n,), radius_value, dtype=DTYPE)

    groups = [
        ParamGroup("color", color, cfg.lr_color),
        ParamGroup("opacity", opacity_raw, cfg.lr_opacity),
    ]
    corr_pose = model.corrective_pose_basis.clone()
    corr_expr = model.corrective_expr_basis.clone()
    if cfg.enable_corrective:
        corr_pose.requires_grad_(True)
        corr_expr.requires_grad_(True)
        groups.append(ParamGroup("corrective_pose", corr_pose, cfg.lr_corrective))
        groups.append(ParamGroup("corrective_expr", corr_expr, cfg.lr_corrective))
    opt = Adam(groups)

    gen = torch.Generator().manual_seed(cfg.seed)
    stats: list[dict] = []
    iteration = 0
    max_weight = torch.zeros(n, dtype=DTYPE)
    for epoch in range(cfg.shape_epochs):
        max_weight.zero_()
        perm = torch.randperm(len(records), generator=gen)
        for batch in _batches(perm, cfg.batch_size):
            opt.zero_grad()
            batch_rows = []
            loss_acc = torch.zeros((), dtype=DTYPE)
            for fi in batch:
                rec = records[fi]
                mesh = skin(model, rec.pose_expr, corr_pose, corr_expr)
                frame = deform_samples(mesh, cloud)
                render = render_points(
                    frame.positions, radius, torch.sigmoid(opacity_raw), color, rec.camera
                )
                part_rgb = loss_rgb(render.image, rec.image)
                part_perc = (
                    loss_perceptual(render.image, rec.image) if cfg.enable_perceptual else None
                )
                loss = total_loss(part_rgb, part_perc, None, cfg.lambda_perceptual, cfg.lambda_scaling)
                loss_acc = loss_acc + loss
                with torch.no_grad():
                    max_weight = torch.maximum(max_weight, render.per_primitive_max_weight)
                    row = {
                        "stage": "shape",
                        "epoch": epoch,
                        "iteration": iteration,
                        "frame": rec.index,
                        "loss": float(loss),
                        "loss_rgb": float(part_rgb),
                        "loss_perceptual": float(part_perc) if part_perc is not None else 0.0,
                        "psnr": psnr(render.image.detach(), rec.image),
                    }
                    if rec.mask is not None:
                        row["iou"] = silhouette_iou(render.alpha.detach() > 0.5, rec.mask)
                batch_rows.append(row)
            loss_mean = loss_acc / len(batch)
            _check_finite(loss_mean, "shape", epoch, iteration, batch)
            loss_mean.backward()
            opt.step()
            with torch.no_grad():
                color.clamp_(0.0, 1.0)
            for row in batch_rows:
                stats.append(row)
                if on_stats:
                    on_stats(row)
            iteration += 1
        logger.info("shape epoch %d done, loss %.5f", epoch, stats[-1]["loss"])

    pruned, keep = prune(cloud, max_weight, cfg.prune_threshold)
    state = CheckpointState(
        stage="shape",
        seed=cfg.seed,
        cloud=pruned,
        opacity_raw=opacity_raw.detach()[keep].clone(),
        color=color.detach()[keep].clone(),
        radius=radius[keep].clone(),
        corrective_pose=corr_pose.detach().clone(),
        corrective_expr=corr_expr.detach().clone(),
        config=asdict(cfg),
    )
    state.validate()
    return state, stats


def init_gaussians(
    shape_state: CheckpointState, model: TemplateModel, sh_degree: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Identity orientations, isotropic scales from point spacing, DC-only SH."""
    from ..avatar import deformed_point_frame
    from ..morphable import PoseExpr

    n = len(shape_state.cloud)
    local_q = torch.zeros(n, 4, dtype=DTYPE)
    local_q[:, 0] = 1.0

    frame = deformed_point_frame(shape_state, model, PoseExpr.rest(model))
    pos = frame.positions.detach()
    if n > 1:
        dist = torch.cdist(pos, pos)
        dist.fill_diagonal_(float("inf"))
        spacing = dist.min(dim=1).values.mean()
    else:
        spacing = torch.tensor(shape_state.radius.mean(), dtype=DTYPE)
    log_scale = torch.full((n, 3), float(torch.log(0.5 * spacing)), dtype=DTYPE)

    sh_coeffs = torch.zeros(n, 3, num_coeffs(sh_degree), dtype=DTYPE)
    sh_coeffs[:, :, 0] = (shape_state.color - 0.5) / C0
    return local_q, log_scale, sh_coeffs


def fit_appearance(
    records: list[FrameRecord],
    model: TemplateModel,
    shape_state: CheckpointState,
    cfg: OptimConfig,
    on_stats: StatsSink | None = None,
) -> tuple[CheckpointState, list[dict]]:
    """Stage two: oriented Gaussians on the pruned cloud, full loss."""
    cfg.validate()
    if not records:
        raise DataError("appearance stage needs a nonempty dataset")
    if len(shape_state.cloud) == 0:
        raise DataError("appearance stage needs a nonempty point cloud")

    cloud = shape_state.cloud
    local_q, log_scale, sh_coeffs = init_gaussians(shape_state, model, cfg.sh_degree)
    local_q.requires_grad_(True)
    log_scale.requires_grad_(True)
    sh_coeffs.requires_grad_(True)
    opacity_raw = shape_state.opacity_raw.clone().requires_grad_(True)

    groups = [
        ParamGroup("local_q", local_q, cfg.lr_local_q),
        ParamGroup("log_scale", log_scale, cfg.lr_log_scale),
        ParamGroup("sh", sh_coeffs, cfg.lr_sh),
        ParamGroup("opacity", opacity_raw, cfg.lr_opacity),
    ]
    corr_pose = shape_state.corrective_pose
    corr_expr = shape_state.corrective_expr
    if corr_pose is None:
        corr_pose = model.corrective_pose_basis.clone()
    if corr_expr is None:
        corr_expr = model.corrective_expr_basis.clone()
    corr_pose = corr_pose.clone()
    corr_expr = corr_expr.clone()
    if not cfg.freeze_corrective_in_stage2:
        corr_pose.requires_grad_(True)
        corr_expr.requires_grad_(True)
        groups.append(ParamGroup("corrective_pose", corr_pose, cfg.lr_corrective))
        groups.append(ParamGroup("corrective_expr", corr_expr, cfg.lr_corrective))
    opt = Adam(groups)

    gen = torch.Generator().manual_seed(cfg.seed + 1)
    stats: list[dict] = []
    iteration = 0
    for epoch in range(cfg.appearance_epochs):
        perm = torch.randperm(len(records), generator=gen)
        for batch in _batches(perm, cfg.batch_size):
            opt.zero_grad()
            batch_rows = []
            loss_acc = torch.zeros((), dtype=DTYPE)
            for fi in batch:
                rec = records[fi]
                mesh = skin(model, rec.pose_expr, corr_pose, corr_expr)
                frame = deform_samples(mesh, cloud)
                world_q = quaternion_multiply(local_q, frame.rotations)
                render = render_gaussians(
                    frame.positions,
                    world_q,
                    log_scale,
                    torch.sigmoid(opacity_raw),
                    sh_coeffs,
                    rec.camera,
                    cfg.sh_degree,
                )
                part_rgb = loss_rgb(render.image, rec.image)
                part_perc = (
                    loss_perceptual(render.image, rec.image) if cfg.enable_perceptual else None
                )
                part_scaling = loss_scaling(log_scale)
                loss = total_loss(
                    part_rgb, part_perc, part_scaling, cfg.lambda_perceptual, cfg.lambda_scaling
                )
                loss_acc = loss_acc + loss
                with torch.no_grad():
                    row = {
                        "stage": "appearance",
                        "epoch": epoch,
                        "iteration": iteration,
                        "frame": rec.index,
                        "loss": float(loss),
                        "loss_rgb": float(part_rgb),
                        "loss_perceptual": float(part_perc) if part_perc is not None else 0.0,
                        "loss_scaling": float(part_scaling),
                        "psnr": psnr(render.image.detach(), rec.image),
                    }
                    if rec.mask is not None:
                        row["iou"] = silhouette_iou(render.alpha.detach() > 0.5, rec.mask)
                batch_rows.append(row)
            loss_mean = loss_acc / len(batch)
            _check_finite(loss_mean, "appearance", epoch, iteration, batch)
            loss_mean.backward()
            opt.step()
            for row in batch_rows:
                stats.append(row)
                if on_stats:
                    on_stats(row)
            iteration += 1
        logger.info("appearance epoch %d done, loss %.5f", epoch, stats[-1]["loss"])

    state = CheckpointState(
        stage="appearance",
        seed=cfg.seed,
        cloud=cloud,
        opacity_raw=opacity_raw.detach().clone(),
        color=shape_state.color.clone(),
        radius=shape_state.radius.clone(),
        corrective_pose=corr_pose.detach().clone(),
        corrective_expr=corr_expr.detach().clone(),
        local_q=local_q.detach().clone(),
        log_scale=log_scale.detach().clone(),
        sh_coeffs=sh_coeffs.detach().clone(),
        sh_degree=cfg.sh_degree,
        config=asdict(cfg),
    )
    state.validate()
    return state, stats
