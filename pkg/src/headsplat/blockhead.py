"""Procedural synthetic head template: a UV sphere with neck/jaw joints.

Stands in for licensed morphable-face assets so the whole pipeline can be
exercised closed-loop. Deterministic for a fixed seed. Units are meters;
world is y-up with the root joint at the origin (base of the neck).
"""

from __future__ import annotations

import numpy as np
import torch

from headsplat.morphable import DTYPE, TemplateModel

HEAD_CENTER = np.array([0.0, 0.15, 0.0])
HEAD_RADIUS = 0.1


def _uv_sphere(rings: int, segments: int) -> tuple[np.ndarray, np.ndarray]:
    verts = [np.array([0.0, 1.0, 0.0])]
    for i in range(1, rings):
        polar = np.pi * i / rings
        y = np.cos(polar)
        s = np.sin(polar)
        for k in range(segments):
            az = 2.0 * np.pi * k / segments
            verts.append(np.array([s * np.sin(az), y, s * np.cos(az)]))
    verts.append(np.array([0.0, -1.0, 0.0]))
    verts = np.stack(verts)

    faces = []
    for k in range(segments):
        faces.append([0, 1 + k, 1 + (k + 1) % segments])
    for i in range(rings - 2):
        row0 = 1 + i * segments
        row1 = row0 + segments
        for k in range(segments):
            a, b = row0 + k, row0 + (k + 1) % segments
            c, d = row1 + k, row1 + (k + 1) % segments
            faces.append([a, c, b])
            faces.append([b, c, d])
    last = verts.shape[0] - 1
    base = 1 + (rings - 2) * segments
    for k in range(segments):
        faces.append([last, base + (k + 1) % segments, base + k])
    return verts, np.asarray(faces, dtype=np.int64)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _bump(points: np.ndarray, anchor: np.ndarray, width: float) -> np.ndarray:
    d2 = ((points - anchor) ** 2).sum(axis=1)
    return np.exp(-d2 / (2.0 * width**2))


def generate_blockhead(seed: int = 0, rings: int = 22, segments: int = 28) -> TemplateModel:
    """Build the synthetic template: sphere head, 3 joints (root, neck, jaw),
    4 expression shapes, small smooth pose-corrective basis."""
    rng = np.random.default_rng(seed)

    unit_verts, faces = _uv_sphere(rings, segments)
    verts = HEAD_CENTER + HEAD_RADIUS * unit_verts
    v = verts.shape[0]
    y = verts[:, 1]
    z = verts[:, 2]

    joints = np.array(
        [
            [0.0, 0.0, 0.0],  # root: base of the neck
            [0.0, 0.06, 0.0],  # neck
            [0.0, 0.13, 0.03],  # jaw pivot
        ]
    )
    parents = np.array([-1, 0, 1], dtype=np.int64)

    chin = HEAD_CENTER + HEAD_RADIUS * np.array([0.0, -0.65, 0.70])
    s_root = _sigmoid((0.085 - y) / 0.015) + 0.02
    s_neck = 3.0 * _sigmoid((y - 0.085) / 0.015)
    s_jaw = 2.2 * _bump(verts, chin, 0.05) * _sigmoid((0.16 - y) / 0.02) * _sigmoid((z - 0.01) / 0.02)
    weights = np.stack([s_root, s_neck, s_jaw], axis=1)
    weights /= weights.sum(axis=1, keepdims=True)

    # expression shapes: localized smooth displacements, ~centimeter scale
    radial = (verts - HEAD_CENTER) / HEAD_RADIUS
    mouth = HEAD_CENTER + HEAD_RADIUS * np.array([0.0, -0.40, 0.90])
    corner_l = HEAD_CENTER + HEAD_RADIUS * np.array([0.55, -0.30, 0.72])
    corner_r = HEAD_CENTER + HEAD_RADIUS * np.array([-0.55, -0.30, 0.72])
    brow = HEAD_CENTER + HEAD_RADIUS * np.array([0.0, 0.55, 0.80])
    cheek_l = HEAD_CENTER + HEAD_RADIUS * np.array([0.70, -0.10, 0.60])
    cheek_r = HEAD_CENTER + HEAD_RADIUS * np.array([-0.70, -0.10, 0.60])

    down = np.array([0.0, -1.0, 0.0])
    up = np.array([0.0, 1.0, 0.0])
    expr = np.zeros((v, 3, 4))
    expr[:, :, 0] = 0.02 * _bump(verts, mouth, 0.045)[:, None] * (0.6 * down + 0.4 * radial)
    smile = _bump(verts, corner_l, 0.04)[:, None] * np.array([1.0, 0.3, 0.0]) + _bump(verts, corner_r, 0.04)[
        :, None
    ] * np.array([-1.0, 0.3, 0.0])
    expr[:, :, 1] = 0.015 * smile
    expr[:, :, 2] = 0.015 * _bump(verts, brow, 0.05)[:, None] * (0.5 * up + 0.5 * radial)
    puff = (_bump(verts, cheek_l, 0.05) + _bump(verts, cheek_r, 0.05))[:, None]
    expr[:, :, 3] = 0.018 * puff * radial

    # pose-corrective basis: small smooth fields so the rotation-residual
    # feature path carries signal; amplitude ~1 mm
    j = joints.shape[0]
    pose_basis = np.zeros((v, 3, 9 * j))
    for col in range(9 * j):
        anchor = HEAD_CENTER + HEAD_RADIUS * _random_unit(rng)
        direction = _random_unit(rng)
        pose_basis[:, :, col] = 0.001 * _bump(verts, anchor, 0.08)[:, None] * direction

    centroid_y = verts[faces].mean(axis=1)[:, 1]
    region_mask = centroid_y > 0.075  # exclude the neck collar

    model = TemplateModel(
        vertices=torch.from_numpy(verts).to(DTYPE),
        faces=torch.from_numpy(faces),
        joint_positions=torch.from_numpy(joints).to(DTYPE),
        joint_parents=torch.from_numpy(parents),
        skin_weights=torch.from_numpy(weights).to(DTYPE),
        expr_basis=torch.from_numpy(expr).to(DTYPE),
        pose_basis=torch.from_numpy(pose_basis).to(DTYPE),
        corrective_expr_basis=torch.zeros(v, 3, 4, dtype=DTYPE),
        corrective_pose_basis=torch.zeros(v, 3, 9 * j, dtype=DTYPE),
        region_mask=torch.from_numpy(region_mask),
        name=f"blockhead-seed{seed}",
    )
    model.validate()
    return model


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    vec = rng.normal(size=3)
    return vec / np.linalg.norm(vec)
