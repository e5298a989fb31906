"""Animatable point-based head avatars with differentiable splatting."""

__version__ = "0.1.0"

from headsplat.morphable import PoseExpr, TemplateModel, load_template, skin
from headsplat.psm import (
    PsmCloud,
    build_cloud,
    deform_samples,
    prune,
    sample_offsurface,
    sample_surface,
)

__all__ = [
    "PoseExpr",
    "TemplateModel",
    "PsmCloud",
    "load_template",
    "skin",
    "sample_surface",
    "build_cloud",
    "sample_offsurface",
    "deform_samples",
    "prune",
    "__version__",
]
