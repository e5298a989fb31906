"""Skinned morphable template: blendshapes, learned correctives, LBS.

The deformed mesh is M(theta, psi) = LBS(T + B_pose(theta) + B_expr(psi) +
correction(theta, psi)) where the correction reuses the blendshape machinery
over a learned pair of bases. All tensor math is torch float64 so gradients
flow from rendered pixels back into psi/theta and the corrective bases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from headsplat.errors import DataError
from headsplat.rotations import (
    align_signs,
    axis_angle_to_matrix,
    matrix_to_quaternion,
    normalize_quaternion,
)

DTYPE = torch.float64

TEMPLATE_FIELDS = {
    "version",
    "vertices",
    "faces",
    "joints",
    "skin_weights",
    "expr_basis",
    "pose_basis",
    "corrective_expr_basis",
    "corrective_pose_basis",
    "region_mask",
    "joint_regressor",
    "name",
}


@dataclass
class TemplateModel:
    """Rest-pose template with skinning and blendshape bases.

    Shapes: vertices (V,3), faces (F,3), joint_positions (J,3),
    joint_parents (J,), skin_weights (V,J), expr_basis (V,3,K),
    pose_basis (V,3,9J), corrective bases mirror their counterparts,
    region_mask (F,) bool.
    """

    vertices: torch.Tensor
    faces: torch.Tensor
    joint_positions: torch.Tensor
    joint_parents: torch.Tensor
    skin_weights: torch.Tensor
    expr_basis: torch.Tensor
    pose_basis: torch.Tensor
    corrective_expr_basis: torch.Tensor
    corrective_pose_basis: torch.Tensor
    region_mask: torch.Tensor
    name: str = "template"

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def num_joints(self) -> int:
        return self.joint_positions.shape[0]

    @property
    def num_expressions(self) -> int:
        return self.expr_basis.shape[2]

    def validate(self) -> None:
        v, f, j = self.num_vertices, self.num_faces, self.num_joints
        if self.faces.numel() and (self.faces.min() < 0 or self.faces.max() >= v):
            raise DataError("template: face indices out of range [0, V)")
        if self.skin_weights.shape != (v, j):
            raise DataError(f"template: skin_weights shape {tuple(self.skin_weights.shape)} != ({v}, {j})")
        if (self.skin_weights < 0).any():
            raise DataError("template: negative skin weights")
        row_sums = self.skin_weights.sum(dim=1)
        if (row_sums - 1.0).abs().max() > 1e-5:
            bad = int((row_sums - 1.0).abs().argmax())
            raise DataError(f"template: skin-weight row {bad} sums to {row_sums[bad]:.6f}, expected 1")
        parents = self.joint_parents
        if int(parents[0]) != -1:
            raise DataError("template: joint 0 must be the root (parent -1)")
        for idx in range(1, j):
            p = int(parents[idx])
            if not 0 <= p < idx:
                raise DataError(
                    f"template: joint {idx} has parent {p}; parents must form a tree "
                    "rooted at joint 0 with parent index < child index"
                )
        if self.expr_basis.shape[:2] != (v, 3):
            raise DataError("template: expr_basis must have shape (V, 3, K)")
        if self.pose_basis.shape != (v, 3, 9 * j):
            raise DataError(f"template: pose_basis must have shape (V, 3, {9 * j})")
        if self.corrective_expr_basis.shape != self.expr_basis.shape:
            raise DataError("template: corrective_expr_basis shape differs from expr_basis")
        if self.corrective_pose_basis.shape != self.pose_basis.shape:
            raise DataError("template: corrective_pose_basis shape differs from pose_basis")
        if self.region_mask.shape != (f,):
            raise DataError("template: region_mask must have one flag per face")


@dataclass
class PoseExpr:
    """Pose (per-joint axis-angle, joint 0 is the global rotation) and expression coefficients."""

    theta: torch.Tensor  # (J, 3) axis-angle, radians
    psi: torch.Tensor  # (K,)

    @staticmethod
    def rest(model: TemplateModel) -> "PoseExpr":
        return PoseExpr(
            theta=torch.zeros(model.num_joints, 3, dtype=DTYPE),
            psi=torch.zeros(model.num_expressions, dtype=DTYPE),
        )

    def validate(self, model: TemplateModel) -> None:
        if self.theta.shape != (model.num_joints, 3):
            raise DataError(f"pose: theta shape {tuple(self.theta.shape)} != ({model.num_joints}, 3)")
        if self.psi.shape != (model.num_expressions,):
            raise DataError(f"pose: psi has {self.psi.numel()} coefficients, template expects {model.num_expressions}")
        if not (torch.isfinite(self.theta).all() and torch.isfinite(self.psi).all()):
            raise DataError("pose: non-finite parameters")


@dataclass
class DeformedMesh:
    """Posed mesh with per-vertex rotations (rotation part of the skinning transform)."""

    vertices: torch.Tensor  # (V, 3)
    vertex_rotations: torch.Tensor  # (V, 4) unit quaternions
    vertex_normals: torch.Tensor  # (V, 3) unit
    face_normals: torch.Tensor  # (F, 3) unit
    face_areas: torch.Tensor  # (F,)
    faces: torch.Tensor = field(repr=False, default=None)


def _tensor_from(obj, name: str, shape: tuple, dtype=DTYPE) -> torch.Tensor:
    try:
        arr = np.asarray(obj, dtype=np.float64 if dtype is DTYPE else np.int64)
    except (TypeError, ValueError) as exc:
        raise DataError(f"template: field '{name}' is not numeric: {exc}") from None
    if arr.size != int(np.prod(shape)):
        raise DataError(f"template: field '{name}' has {arr.size} values, expected {int(np.prod(shape))}")
    return torch.from_numpy(arr.reshape(shape).copy()).to(dtype)


def load_template(path: str | Path) -> TemplateModel:
    """Load a template document (UTF-8 JSON, row-major flattened arrays, meters)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"template: file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"template: parse failure in {path}: {exc}") from None
    return template_from_dict(doc)


def template_from_dict(doc: dict) -> TemplateModel:
    if not isinstance(doc, dict):
        raise DataError("template: document root must be an object")
    unknown = set(doc) - TEMPLATE_FIELDS
    if unknown:
        raise DataError(f"template: unknown fields {sorted(unknown)}")
    for required in ("vertices", "faces", "joints", "skin_weights", "expr_basis", "pose_basis"):
        if required not in doc:
            raise DataError(f"template: missing field '{required}'")

    joints = doc["joints"]
    if not isinstance(joints, dict) or "positions" not in joints or "parents" not in joints:
        raise DataError("template: 'joints' must contain 'positions' and 'parents'")
    parents = np.asarray(joints["parents"], dtype=np.int64)
    j = parents.shape[0]
    v = len(doc["vertices"]) // 3
    f = len(doc["faces"]) // 3
    k_total = len(doc["expr_basis"])
    if v == 0 or k_total % (v * 3) != 0:
        raise DataError("template: expr_basis length is not a multiple of 3V")
    k = k_total // (v * 3)

    vertices = _tensor_from(doc["vertices"], "vertices", (v, 3))
    faces = _tensor_from(doc["faces"], "faces", (f, 3), dtype=torch.int64)
    joint_positions = _tensor_from(joints["positions"], "joints.positions", (j, 3))
    joint_parents = torch.from_numpy(parents)
    skin_weights = _tensor_from(doc["skin_weights"], "skin_weights", (v, j))
    expr_basis = _tensor_from(doc["expr_basis"], "expr_basis", (v, 3, k))
    pose_basis = _tensor_from(doc["pose_basis"], "pose_basis", (v, 3, 9 * j))

    if "corrective_expr_basis" in doc:
        corr_e = _tensor_from(doc["corrective_expr_basis"], "corrective_expr_basis", (v, 3, k))
    else:
        corr_e = torch.zeros_like(expr_basis)
    if "corrective_pose_basis" in doc:
        corr_p = _tensor_from(doc["corrective_pose_basis"], "corrective_pose_basis", (v, 3, 9 * j))
    else:
        corr_p = torch.zeros_like(pose_basis)
    if "region_mask" in doc:
        mask = torch.from_numpy(np.asarray(doc["region_mask"], dtype=bool))
        if mask.shape != (f,):
            raise DataError("template: region_mask length differs from face count")
    else:
        mask = torch.ones(f, dtype=torch.bool)

    model = TemplateModel(
        vertices=vertices,
        faces=faces,
        joint_positions=joint_positions,
        joint_parents=joint_parents,
        skin_weights=skin_weights,
        expr_basis=expr_basis,
        pose_basis=pose_basis,
        corrective_expr_basis=corr_e,
        corrective_pose_basis=corr_p,
        region_mask=mask,
        name=str(doc.get("name", "template")),
    )
    model.validate()
    return model


def save_template(model: TemplateModel, path: str | Path) -> None:
    """Write the template document; arrays row-major flattened, lengths explicit."""
    doc = {
        "version": 1,
        "name": model.name,
        "vertices": model.vertices.reshape(-1).tolist(),
        "faces": model.faces.reshape(-1).tolist(),
        "joints": {
            "positions": model.joint_positions.reshape(-1).tolist(),
            "parents": model.joint_parents.tolist(),
        },
        "skin_weights": model.skin_weights.reshape(-1).tolist(),
        "expr_basis": model.expr_basis.reshape(-1).tolist(),
        "pose_basis": model.pose_basis.reshape(-1).tolist(),
        "corrective_expr_basis": model.corrective_expr_basis.reshape(-1).tolist(),
        "corrective_pose_basis": model.corrective_pose_basis.reshape(-1).tolist(),
        "region_mask": [bool(x) for x in model.region_mask.tolist()],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def pose_feature(model: TemplateModel, theta: torch.Tensor) -> torch.Tensor:
    """Vectorized per-joint rotation residuals R(theta_j) - I, flattened to (9J,).

    The rest pose maps to the zero feature, so pose blendshapes vanish at rest.
    """
    rots = axis_angle_to_matrix(theta)  # (J, 3, 3)
    eye = torch.eye(3, dtype=theta.dtype, device=theta.device)
    return (rots - eye).reshape(-1)


def _contract(basis: torch.Tensor, coeffs: torch.Tensor) -> torch.Tensor:
    v = basis.shape[0]
    return (basis.reshape(v * 3, -1) @ coeffs).reshape(v, 3)


def blendshape_offsets(model: TemplateModel, pe: PoseExpr) -> torch.Tensor:
    """Pose + expression blendshape offsets over the template's fixed bases, (V, 3)."""
    pe.validate(model)
    feat = pose_feature(model, pe.theta)
    return _contract(model.pose_basis, feat) + _contract(model.expr_basis, pe.psi)


def corrective_offsets(
    model: TemplateModel,
    pe: PoseExpr,
    pose_basis: torch.Tensor | None = None,
    expr_basis: torch.Tensor | None = None,
) -> torch.Tensor:
    """Learned per-vertex geometry correction, same contraction over the corrective bases.

    Pass live (grad-enabled) bases during training; defaults to the ones stored
    on the model.
    """
    pe.validate(model)
    pb = model.corrective_pose_basis if pose_basis is None else pose_basis
    eb = model.corrective_expr_basis if expr_basis is None else expr_basis
    if pb.shape != model.pose_basis.shape or eb.shape != model.expr_basis.shape:
        raise DataError("corrective bases must mirror the template basis shapes")
    feat = pose_feature(model, pe.theta)
    return _contract(pb, feat) + _contract(eb, pe.psi)


def joint_transforms(model: TemplateModel, theta: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Forward kinematics. Returns (rot (J,3,3), trans (J,3)) of the skinning
    transforms A_j, i.e. posed = A_rot @ rest + A_trans."""
    local_rots = axis_angle_to_matrix(theta)
    j = model.num_joints
    world_rot = [None] * j
    world_pos = [None] * j
    world_rot[0] = local_rots[0]
    world_pos[0] = model.joint_positions[0]
    for idx in range(1, j):
        p = int(model.joint_parents[idx])
        bone = model.joint_positions[idx] - model.joint_positions[p]
        world_rot[idx] = world_rot[p] @ local_rots[idx]
        world_pos[idx] = world_pos[p] + world_rot[p] @ bone
    rot = torch.stack(world_rot)
    pos = torch.stack(world_pos)
    # A_j x = G_j (x - rest_j): rotate about each joint's rest position
    trans = pos - (rot @ model.joint_positions[..., None]).squeeze(-1)
    return rot, trans


def skin(
    model: TemplateModel,
    pe: PoseExpr,
    corrective_pose_basis: torch.Tensor | None = None,
    corrective_expr_basis: torch.Tensor | None = None,
) -> DeformedMesh:
    """Pose the template: blendshapes + correction, then linear blend skinning.

    Per-vertex rotations are the skin-weighted quaternion average of the joint
    rotations (sign-aligned to each vertex's dominant joint), normalized.
    """
    pe.validate(model)
    offsets = blendshape_offsets(model, pe) + corrective_offsets(
        model, pe, corrective_pose_basis, corrective_expr_basis
    )
    shaped = model.vertices + offsets

    rot, trans = joint_transforms(model, pe.theta)
    w = model.skin_weights  # (V, J)
    blended_rot = torch.einsum("vj,jab->vab", w, rot)
    blended_trans = w @ trans
    verts = torch.einsum("vab,vb->va", blended_rot, shaped) + blended_trans

    joint_quats = matrix_to_quaternion(rot)  # (J, 4)
    dominant = w.argmax(dim=1)
    ref = joint_quats[dominant]  # (V, 4)
    aligned = align_signs(joint_quats[None, :, :].expand(w.shape[0], -1, -1), ref[:, None, :])
    vertex_quats = normalize_quaternion(torch.einsum("vj,vjq->vq", w, aligned))

    face_normals, face_areas, vertex_normals = mesh_normals(verts, model.faces)
    return DeformedMesh(
        vertices=verts,
        vertex_rotations=vertex_quats,
        vertex_normals=vertex_normals,
        face_normals=face_normals,
        face_areas=face_areas,
        faces=model.faces,
    )


def mesh_normals(verts: torch.Tensor, faces: torch.Tensor):
    """Face normals/areas and area-weighted unit vertex normals."""
    tri = verts[faces]  # (F, 3, 3)
    cross = torch.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0], dim=-1)
    norm = cross.norm(dim=-1, keepdim=True)
    face_areas = 0.5 * norm.squeeze(-1)
    face_normals = cross / norm.clamp_min(1e-20)

    accum = torch.zeros_like(verts)
    for corner in range(3):
        accum = accum.index_add(0, faces[:, corner], cross)
    vertex_normals = accum / accum.norm(dim=-1, keepdim=True).clamp_min(1e-20)
    return face_normals, face_areas, vertex_normals
