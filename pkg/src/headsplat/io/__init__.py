from .checkpoint import CheckpointState, load_checkpoint, save_checkpoint
from .dataset import FrameRecord, load_dataset, load_manifest, load_stream, save_manifest
from .images import (
    linear_to_srgb,
    png_bytes,
    read_image,
    read_mask,
    srgb_to_linear,
    write_image,
    write_mask,
)
from .synthetic import ground_truth_avatar, make_synthetic, scripted_camera, scripted_pose_expr

__all__ = [
    "CheckpointState",
    "load_checkpoint",
    "save_checkpoint",
    "FrameRecord",
    "load_dataset",
    "load_manifest",
    "load_stream",
    "save_manifest",
    "linear_to_srgb",
    "png_bytes",
    "srgb_to_linear",
    "read_image",
    "read_mask",
    "write_image",
    "write_mask",
    "ground_truth_avatar",
    "make_synthetic",
    "scripted_camera",
    "scripted_pose_expr",
]
