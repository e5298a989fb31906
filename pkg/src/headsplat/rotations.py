"""Quaternion and axis-angle helpers (torch, float64, differentiable).

Quaternions are (w, x, y, z), Hamilton convention: rotmat(qmul(a, b)) equals
rotmat(a) @ rotmat(b) for column vectors.
"""

from __future__ import annotations

import torch

_SMALL_ANGLE = 1e-8


def axis_angle_to_matrix(aa: torch.Tensor) -> torch.Tensor:
    """Rodrigues formula for (..., 3) axis-angle vectors -> (..., 3, 3).

    Uses series-safe sinc terms so gradients are exact at the zero rotation.
    """
    theta = aa.norm(dim=-1, keepdim=True)
    small = theta < _SMALL_ANGLE
    safe = torch.where(small, torch.ones_like(theta), theta)
    # sin(t)/t and (1-cos(t))/t^2, continued analytically through t=0
    s = torch.where(small, 1.0 - theta**2 / 6.0, torch.sin(safe) / safe)
    c = torch.where(small, 0.5 - theta**2 / 24.0, (1.0 - torch.cos(safe)) / safe**2)

    x, y, z = aa[..., 0], aa[..., 1], aa[..., 2]
    zero = torch.zeros_like(x)
    k = torch.stack(
        [
            torch.stack([zero, -z, y], dim=-1),
            torch.stack([z, zero, -x], dim=-1),
            torch.stack([-y, x, zero], dim=-1),
        ],
        dim=-2,
    )
    eye = torch.eye(3, dtype=aa.dtype, device=aa.device).expand(k.shape)
    return eye + s[..., None] * k + c[..., None] * (k @ k)


def matrix_to_quaternion(m: torch.Tensor) -> torch.Tensor:
    """Rotation matrices (..., 3, 3) -> unit quaternions (..., 4), w >= 0."""
    batch = m.shape[:-2]
    m = m.reshape(-1, 3, 3)
    t = m[:, 0, 0] + m[:, 1, 1] + m[:, 2, 2]

    # Shepperd's method: pick the numerically dominant component per element.
    q = torch.empty(m.shape[0], 4, dtype=m.dtype, device=m.device)
    cand = torch.stack([t, m[:, 0, 0], m[:, 1, 1], m[:, 2, 2]], dim=-1)
    choice = cand.argmax(dim=-1)

    for c in range(4):
        idx = (choice == c).nonzero(as_tuple=True)[0]
        if idx.numel() == 0:
            continue
        mm = m[idx]
        if c == 0:
            r = torch.sqrt(1.0 + mm[:, 0, 0] + mm[:, 1, 1] + mm[:, 2, 2]) * 0.5
            qi = torch.stack(
                [
                    r,
                    (mm[:, 2, 1] - mm[:, 1, 2]) / (4.0 * r),
                    (mm[:, 0, 2] - mm[:, 2, 0]) / (4.0 * r),
                    (mm[:, 1, 0] - mm[:, 0, 1]) / (4.0 * r),
                ],
                dim=-1,
            )
        elif c == 1:
            r = torch.sqrt(1.0 + mm[:, 0, 0] - mm[:, 1, 1] - mm[:, 2, 2]) * 0.5
            qi = torch.stack(
                [
                    (mm[:, 2, 1] - mm[:, 1, 2]) / (4.0 * r),
                    r,
                    (mm[:, 0, 1] + mm[:, 1, 0]) / (4.0 * r),
                    (mm[:, 0, 2] + mm[:, 2, 0]) / (4.0 * r),
                ],
                dim=-1,
            )
        elif c == 2:
            r = torch.sqrt(1.0 - mm[:, 0, 0] + mm[:, 1, 1] - mm[:, 2, 2]) * 0.5
            qi = torch.stack(
                [
                    (mm[:, 0, 2] - mm[:, 2, 0]) / (4.0 * r),
                    (mm[:, 0, 1] + mm[:, 1, 0]) / (4.0 * r),
                    r,
                    (mm[:, 1, 2] + mm[:, 2, 1]) / (4.0 * r),
                ],
                dim=-1,
            )
        else:
            r = torch.sqrt(1.0 - mm[:, 0, 0] - mm[:, 1, 1] + mm[:, 2, 2]) * 0.5
            qi = torch.stack(
                [
                    (mm[:, 1, 0] - mm[:, 0, 1]) / (4.0 * r),
                    (mm[:, 0, 2] + mm[:, 2, 0]) / (4.0 * r),
                    (mm[:, 1, 2] + mm[:, 2, 1]) / (4.0 * r),
                    r,
                ],
                dim=-1,
            )
        q[idx] = qi

    sign = torch.where(q[:, :1] < 0, -torch.ones_like(q[:, :1]), torch.ones_like(q[:, :1]))
    return (q * sign).reshape(*batch, 4)


def quaternion_to_matrix(q: torch.Tensor) -> torch.Tensor:
    """Unit quaternions (..., 4) -> rotation matrices (..., 3, 3)."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = torch.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], dim=-1)
    row1 = torch.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], dim=-1)
    row2 = torch.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], dim=-1)
    return torch.stack([row0, row1, row2], dim=-2)


def quaternion_multiply(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Hamilton product of (..., 4) quaternions."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return torch.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        dim=-1,
    )


def normalize_quaternion(q: torch.Tensor) -> torch.Tensor:
    return q / q.norm(dim=-1, keepdim=True).clamp_min(1e-12)


def align_signs(q: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    """Flip quaternions whose dot with `reference` is negative (same rotation)."""
    dot = (q * reference).sum(dim=-1, keepdim=True)
    return torch.where(dot < 0, -q, q)


def geodesic_angle(qa: torch.Tensor, qb: torch.Tensor) -> torch.Tensor:
    """Rotation angle in radians between two unit quaternions."""
    dot = (qa * qb).sum(dim=-1).abs().clamp(max=1.0)
    return 2.0 * torch.arccos(dot)
