"""Dataset manifests and frame records.

A manifest is a JSON document pointing at a template, per-frame images,
optional masks, and per-frame pose/expression/camera parameters. Paths are
resolved relative to the manifest file.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import torch

from ..errors import DataError
from ..morphable import DTYPE, PoseExpr, TemplateModel, load_template
from ..splat.camera import CameraModel
from .images import read_image, read_mask

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
_FRAME_KEYS = {"image", "mask", "pose", "expression", "camera"}
_MANIFEST_KEYS = {"version", "template", "frames"}


@dataclass
class FrameRecord:
    index: int
    image: torch.Tensor  # (H, W, 3) linear float64
    pose_expr: PoseExpr
    camera: CameraModel
    mask: torch.Tensor | None = None


def _parse_frame_params(
    entry: dict, idx: int, model: TemplateModel, require_camera: bool = True
) -> tuple[PoseExpr, CameraModel | None]:
    unknown = set(entry) - _FRAME_KEYS
    if unknown:
        raise DataError(f"frame {idx} has unknown keys {sorted(unknown)}")
    required = ("pose", "expression", "camera") if require_camera else ("pose", "expression")
    for key in required:
        if key not in entry:
            raise DataError(f"frame {idx} missing {key!r}")
    theta = torch.tensor(entry["pose"], dtype=DTYPE)
    psi = torch.tensor(entry["expression"], dtype=DTYPE)
    if theta.shape != (model.num_joints, 3):
        raise DataError(
            f"frame {idx} pose shape {tuple(theta.shape)} does not match {model.num_joints} joints"
        )
    if psi.shape != (model.num_expressions,):
        raise DataError(
            f"frame {idx} expression length {psi.numel()} does not match {model.num_expressions}"
        )
    pe = PoseExpr(theta=theta, psi=psi)
    pe.validate(model)
    camera = CameraModel.from_dict(entry["camera"]) if "camera" in entry else None
    return pe, camera


def load_manifest(path: str | Path, require_template: bool = True) -> dict:
    p = Path(path)
    if not p.exists():
        raise DataError(f"manifest not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"manifest is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise DataError("manifest must be a JSON object")
    unknown = set(doc) - _MANIFEST_KEYS
    if unknown:
        raise DataError(f"manifest has unknown keys {sorted(unknown)}")
    if doc.get("version") != MANIFEST_VERSION:
        raise DataError(f"unsupported manifest version {doc.get('version')!r}")
    if "frames" not in doc or (require_template and "template" not in doc):
        raise DataError("manifest missing 'template' or 'frames'")
    return doc


def load_dataset(path: str | Path, with_images: bool = True) -> tuple[TemplateModel, list[FrameRecord]]:
    """Read a manifest and decode its frames to linear-RGB records."""
    p = Path(path)
    doc = load_manifest(p)
    root = p.parent
    model = load_template(root / doc["template"])
    records = []
    for idx, entry in enumerate(doc["frames"]):
        pe, camera = _parse_frame_params(entry, idx, model)
        if "image" not in entry:
            raise DataError(f"frame {idx} missing 'image'")
        image = torch.zeros(camera.height, camera.width, 3, dtype=DTYPE)
        mask = None
        if with_images:
            try:
                image = read_image(root / entry["image"])
            except DataError as e:
                raise DataError(f"frame {idx}: {e}") from e
            if image.shape[:2] != (camera.height, camera.width):
                raise DataError(
                    f"frame {idx} image is {image.shape[1]}x{image.shape[0]}, "
                    f"camera expects {camera.width}x{camera.height}"
                )
            if "mask" in entry:
                mask = read_mask(root / entry["mask"])
                if mask.shape != image.shape[:2]:
                    raise DataError(f"frame {idx} mask size does not match image")
        records.append(FrameRecord(index=idx, image=image, pose_expr=pe, camera=camera, mask=mask))
    if not records:
        raise DataError("manifest contains no frames")
    logger.info("loaded %d frames from %s", len(records), p)
    return model, records


def load_stream(path: str | Path, model: TemplateModel) -> list[tuple[PoseExpr, CameraModel | None]]:
    """Read pose/expression/camera parameters from a manifest-shaped file.

    Image entries are ignored, so a plain parameter stream and a full dataset
    manifest are both accepted. Frames may omit the camera; the caller then
    supplies one.
    """
    doc = load_manifest(path, require_template=False)
    out = []
    for idx, entry in enumerate(doc["frames"]):
        out.append(_parse_frame_params(entry, idx, model, require_camera=False))
    if not out:
        raise DataError("stream contains no frames")
    return out


def save_manifest(path: str | Path, template_rel: str, frames: list[dict]) -> None:
    doc = {"version": MANIFEST_VERSION, "template": template_rel, "frames": frames}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))
