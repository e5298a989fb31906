"""Point sampling on and off the template surface.

Points are bound to the template by (face index, barycentric coords, offset
along the interpolated normal), so a fixed cloud deforms with the mesh and
every point keeps its identity across frames and pruning rounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from headsplat.errors import DataError, NumericalError
from headsplat.morphable import DTYPE, DeformedMesh, TemplateModel
from headsplat.rotations import normalize_quaternion

logger = logging.getLogger(__name__)

DEFAULT_MAX_OFFSET = 0.30
DEGENERATE_AREA = 1e-14


@dataclass
class PsmCloud:
    """Struct-of-arrays point binding: N points on or above template faces."""

    face_idx: torch.Tensor  # (N,) int64
    bary: torch.Tensor  # (N, 3) float64, rows on the simplex
    offset: torch.Tensor  # (N,) float64, distance along the surface normal

    def __len__(self) -> int:
        return int(self.face_idx.shape[0])

    def validate(self, model: TemplateModel | None = None) -> None:
        n = len(self)
        if self.bary.shape != (n, 3) or self.offset.shape != (n,):
            raise DataError(
                f"inconsistent cloud arrays: face_idx {tuple(self.face_idx.shape)}, "
                f"bary {tuple(self.bary.shape)}, offset {tuple(self.offset.shape)}"
            )
        if bool((self.bary < -1e-9).any()):
            raise DataError("barycentric coordinates contain negative entries")
        sums = self.bary.sum(dim=1)
        if bool(((sums - 1.0).abs() > 1e-9).any()):
            raise DataError("barycentric rows do not sum to 1")
        if model is not None and n > 0:
            if int(self.face_idx.min()) < 0 or int(self.face_idx.max()) >= model.num_faces:
                raise DataError("face index out of range for template")

    def subset(self, keep: torch.Tensor) -> "PsmCloud":
        """Select rows; `keep` is a bool mask or an index tensor."""
        return PsmCloud(
            face_idx=self.face_idx[keep],
            bary=self.bary[keep],
            offset=self.offset[keep],
        )


def _masked_face_areas(model: TemplateModel) -> tuple[torch.Tensor, torch.Tensor]:
    tri = model.vertices[model.faces]
    cross = torch.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0], dim=1)
    areas = 0.5 * torch.linalg.norm(cross, dim=1)
    face_ids = torch.nonzero(model.region_mask, as_tuple=False).squeeze(1)
    if face_ids.numel() == 0:
        raise DataError("region mask excludes every face")
    return face_ids, areas[face_ids]


def default_point_radius(model: TemplateModel) -> float:
    """Global shape-stage splat radius: half the mean masked-face edge length."""
    face_ids, _ = _masked_face_areas(model)
    tri = model.vertices[model.faces[face_ids]]
    edges = torch.cat(
        [
            (tri[:, 0] - tri[:, 1]).norm(dim=1),
            (tri[:, 1] - tri[:, 2]).norm(dim=1),
            (tri[:, 2] - tri[:, 0]).norm(dim=1),
        ]
    )
    return 0.5 * float(edges.mean())


def sample_surface(model: TemplateModel, count: int, seed: int = 0) -> PsmCloud:
    """Draw `count` points on the masked surface, area-proportional across
    faces and uniform within each face. Offsets are zero."""
    if count <= 0:
        raise DataError(f"sample count must be positive, got {count}")
    face_ids, areas = _masked_face_areas(model)
    total = float(areas.sum())
    if total <= DEGENERATE_AREA:
        raise DataError("masked surface has zero total area")

    rng = np.random.default_rng(seed)
    probs = (areas / areas.sum()).numpy()
    picks = rng.choice(face_ids.numpy(), size=count, p=probs)

    # uniform on the simplex via the fold-back trick
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    bary = np.stack([1.0 - u - v, u, v], axis=1)

    return PsmCloud(
        face_idx=torch.from_numpy(picks.astype(np.int64)),
        bary=torch.from_numpy(bary).to(DTYPE),
        offset=torch.zeros(count, dtype=DTYPE),
    )


def sample_offsurface(
    cloud: PsmCloud,
    max_offset: float = DEFAULT_MAX_OFFSET,
    ratio: float = 1.0,
    seed: int = 0,
) -> PsmCloud:
    """Off-mesh companions for an on-mesh cloud.

    Each companion copies a parent's face binding and draws its own offset
    uniformly from [0, max_offset]. `ratio` is the companion count relative
    to the parent count; at the default 1.0 every parent is copied once.
    """
    if max_offset < 0.0:
        raise DataError(f"max offset must be non-negative, got {max_offset}")
    if not 0.0 <= ratio <= 1.0:
        raise DataError(f"off-surface ratio must be in [0, 1], got {ratio}")
    n_off = round(ratio * len(cloud))
    # separate stream so the parent layout is unchanged by the offset draw
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    parents = torch.from_numpy(
        np.sort(rng.choice(len(cloud), size=n_off, replace=False)).astype(np.int64)
    )
    offsets = torch.from_numpy(rng.uniform(0.0, max_offset, size=n_off)).to(DTYPE)
    return PsmCloud(
        face_idx=cloud.face_idx[parents].clone(),
        bary=cloud.bary[parents].clone(),
        offset=offsets,
    )


def build_cloud(
    model: TemplateModel,
    count: int,
    seed: int = 0,
    max_offset: float = DEFAULT_MAX_OFFSET,
    ratio: float = 1.0,
) -> PsmCloud:
    """`count` on-mesh samples plus `ratio * count` off-mesh companions."""
    on = sample_surface(model, count, seed=seed)
    off = sample_offsurface(on, max_offset=max_offset, ratio=ratio, seed=seed)
    return PsmCloud(
        face_idx=torch.cat([on.face_idx, off.face_idx]),
        bary=torch.cat([on.bary, off.bary]),
        offset=torch.cat([on.offset, off.offset]),
    )


@dataclass
class PointFrame:
    """Cloud evaluated against one deformed mesh."""

    positions: torch.Tensor  # (N, 3)
    normals: torch.Tensor  # (N, 3) unit
    rotations: torch.Tensor  # (N, 4) unit quaternions, w >= 0 not enforced


def deform_samples(mesh: DeformedMesh, cloud: PsmCloud) -> PointFrame:
    """Carry the cloud onto a posed mesh.

    Position is the barycentric point plus offset times the interpolated
    vertex normal; per-point rotation is the barycentric blend of the vertex
    rotation quaternions, sign-aligned before averaging.
    """
    if bool((mesh.face_areas[cloud.face_idx] <= DEGENERATE_AREA).any()):
        bad = int(cloud.face_idx[mesh.face_areas[cloud.face_idx] <= DEGENERATE_AREA][0])
        raise NumericalError(f"degenerate face {bad} under current pose, normal undefined")

    corners = mesh.faces[cloud.face_idx]  # (N, 3) vertex ids
    b = cloud.bary.unsqueeze(2)  # (N, 3, 1)

    verts = mesh.vertices[corners]  # (N, 3, 3)
    surface = (b * verts).sum(dim=1)

    vnorm = mesh.vertex_normals[corners]
    normal = (b * vnorm).sum(dim=1)
    norm_len = torch.linalg.norm(normal, dim=1, keepdim=True)
    if bool((norm_len < 1e-12).any()):
        raise NumericalError("interpolated normal vanished; opposing vertex normals on one face")
    normal = normal / norm_len

    positions = surface + cloud.offset.unsqueeze(1) * normal

    quats = mesh.vertex_rotations[corners]  # (N, 3, 4)
    anchor = quats[:, 0:1, :]
    sign = torch.where((quats * anchor).sum(dim=2, keepdim=True) < 0.0, -1.0, 1.0)
    blended = (b * sign * quats).sum(dim=1)
    rotations = normalize_quaternion(blended)

    return PointFrame(positions=positions, normals=normal, rotations=rotations)


def prune(cloud: PsmCloud, max_weight: torch.Tensor, threshold: float = 0.01) -> tuple[PsmCloud, torch.Tensor]:
    """Drop points whose best compositing weight over an epoch stayed under
    `threshold`. Returns the surviving cloud and the kept indices, so any
    per-point state arrays can be carried over by the same gather."""
    if max_weight.shape != (len(cloud),):
        raise DataError(
            f"max_weight shape {tuple(max_weight.shape)} does not match cloud of {len(cloud)}"
        )
    keep = torch.nonzero(max_weight >= threshold, as_tuple=False).squeeze(1)
    if keep.numel() == 0:
        raise NumericalError("pruning removed every point; model never became visible")
    logger.info("pruning kept %d of %d points", int(keep.numel()), len(cloud))
    return cloud.subset(keep), keep
