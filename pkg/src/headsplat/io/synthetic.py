"""Self-contained synthetic dataset: a scripted ground-truth avatar on disk.

Builds a fixed Gaussian avatar on a template, drives it along sinusoidal
pose/expression trajectories under an orbiting camera, and writes frames,
masks, manifest, template, and the ground-truth checkpoint. Everything is
deterministic per seed, so fitting runs can be verified closed-loop.
"""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from ..errors import DataError
from ..morphable import DTYPE, PoseExpr, TemplateModel, save_template
from ..psm import build_cloud
from ..splat.camera import CameraModel, orbit_camera
from ..splat.sh import C0, num_coeffs
from .checkpoint import CheckpointState, save_checkpoint
from .dataset import save_manifest
from .images import write_image, write_mask

logger = logging.getLogger(__name__)

DEFAULT_FRAMES = 60
DEFAULT_SIZE = 128
DEFAULT_SAMPLES = 2000
ORBIT_RADIUS = 0.55
MASK_ALPHA_CUTOFF = 0.5

# ground truth hugs the surface; the wide sampling shell is for fitting runs
GT_MAX_OFFSET = 0.01

# raw opacity chosen so sigmoid lands near-opaque
OPACITY_RAW_GT = math.log(0.95 / 0.05)


def scripted_pose_expr(t: float, model: TemplateModel) -> PoseExpr:
    """Smooth head turn, jaw open, and expression sweep over t in [0, 1)."""
    theta = torch.zeros(model.num_joints, 3, dtype=DTYPE)
    if model.num_joints > 1:
        theta[1, 1] = 0.35 * math.sin(2.0 * math.pi * t)
        theta[1, 0] = 0.12 * math.sin(4.0 * math.pi * t + 0.7)
    if model.num_joints > 2:
        theta[2, 0] = 0.25 * (0.5 - 0.5 * math.cos(4.0 * math.pi * t))
    psi = torch.zeros(model.num_expressions, dtype=DTYPE)
    for k in range(model.num_expressions):
        psi[k] = 0.6 * math.sin(2.0 * math.pi * (k + 1) * t + 0.9 * k)
    return PoseExpr(theta=theta, psi=psi)


def scripted_camera(t: float, target: np.ndarray, width: int, height: int) -> CameraModel:
    azimuth = 60.0 * math.sin(2.0 * math.pi * t)
    elevation = 8.0 * math.sin(4.0 * math.pi * t + 1.3)
    return orbit_camera(target, ORBIT_RADIUS, azimuth, elevation, width, height)


def _pastel_colors(positions: torch.Tensor, seed: int) -> torch.Tensor:
    """Deterministic smooth coloring over the head surface."""
    g = torch.Generator().manual_seed(seed)
    freq = 18.0 + 6.0 * torch.rand(3, 3, dtype=DTYPE, generator=g)
    phase = 2.0 * math.pi * torch.rand(3, dtype=DTYPE, generator=g)
    waves = torch.sin(positions @ freq.T + phase)
    return 0.5 + 0.25 * waves


def ground_truth_avatar(
    model: TemplateModel, num_samples: int = DEFAULT_SAMPLES, seed: int = 0, sh_degree: int = 1
) -> CheckpointState:
    """A fixed, fully-specified Gaussian avatar used as rendering ground truth."""
    cloud = build_cloud(model, num_samples, seed=seed, max_offset=GT_MAX_OFFSET)
    rest = PoseExpr.rest(model)
    from ..avatar import deformed_point_frame  # local import, avatar renders checkpoints

    n = len(cloud)
    state = CheckpointState(
        stage="appearance",
        seed=seed,
        cloud=cloud,
        opacity_raw=torch.full((n,), OPACITY_RAW_GT, dtype=DTYPE),
        color=torch.full((n, 3), 0.5, dtype=DTYPE),
        radius=torch.full((n,), 0.004, dtype=DTYPE),
        corrective_pose=None,
        corrective_expr=None,
        local_q=torch.zeros(n, 4, dtype=DTYPE),
        log_scale=torch.zeros(n, 3, dtype=DTYPE),
        sh_coeffs=torch.zeros(n, 3, num_coeffs(sh_degree), dtype=DTYPE),
        sh_degree=sh_degree,
    )
    state.local_q[:, 0] = 1.0

    frame = deformed_point_frame(state, model, rest)
    pos = frame.positions
    # isotropic scale from mean nearest-neighbor spacing at rest
    dist = torch.cdist(pos, pos)
    dist.fill_diagonal_(float("inf"))
    nn = dist.min(dim=1).values
    state.log_scale[:] = torch.log(0.5 * nn.mean())

    colors = _pastel_colors(pos, seed)
    state.color[:] = colors
    state.sh_coeffs[:, :, 0] = (colors - 0.5) / C0
    if sh_degree >= 1:
        g = torch.Generator().manual_seed(seed + 1)
        state.sh_coeffs[:, :, 1:4] = 0.08 * torch.randn(n, 3, 3, dtype=DTYPE, generator=g)
    state.validate()
    return state


def make_synthetic(
    model: TemplateModel,
    out_dir: str | Path,
    count: int = DEFAULT_FRAMES,
    width: int = DEFAULT_SIZE,
    height: int = DEFAULT_SIZE,
    seed: int = 0,
    num_samples: int = DEFAULT_SAMPLES,
    sh_degree: int = 1,
    perturb_expr: float = 0.0,
    write_masks: bool = True,
) -> Path:
    """Render and write the scripted dataset; returns the manifest path.

    With perturb_expr > 0 the ground truth deforms with a perturbed expression
    basis while the saved template keeps the original, leaving a residual that
    only corrective bases can close during fitting.
    """
    from ..avatar import render_avatar

    if count <= 0:
        raise DataError(f"frame count must be positive, got {count}")
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    if write_masks:
        (out / "masks").mkdir(exist_ok=True)

    gt_model = model
    if perturb_expr > 0.0:
        g = torch.Generator().manual_seed(seed + 2)
        delta = perturb_expr * torch.randn(model.expr_basis.shape, dtype=DTYPE, generator=g)
        gt_model = replace(model, expr_basis=model.expr_basis + delta)
        gt_model.validate()

    state = ground_truth_avatar(gt_model, num_samples, seed, sh_degree)
    target = np.asarray(model.vertices.mean(dim=0))

    frames = []
    for k in range(count):
        t = k / count
        pe = scripted_pose_expr(t, model)
        camera = scripted_camera(t, target, width, height)
        with torch.no_grad():
            render = render_avatar(state, gt_model, pe, camera)
        name = f"frames/{k:06d}.png"
        write_image(out / name, render.image)
        entry = {
            "image": name,
            "pose": [[float(v) for v in row] for row in pe.theta],
            "expression": [float(v) for v in pe.psi],
            "camera": camera.to_dict(),
        }
        if write_masks:
            mask_name = f"masks/{k:06d}.png"
            write_mask(out / mask_name, render.alpha > MASK_ALPHA_CUTOFF)
            entry["mask"] = mask_name
        frames.append(entry)

    save_template(model, out / "template.json")
    save_checkpoint(state, out / "ground_truth.psav")
    manifest = out / "manifest.json"
    save_manifest(manifest, "template.json", frames)
    logger.info("wrote %d synthetic frames to %s", count, out)
    return manifest
