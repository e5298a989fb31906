"""Binary avatar checkpoints.

Little-endian container: magic "PSAV", format version u32, section count u32,
then a table of (8-byte name, u64 offset, u64 length) entries. META holds a
JSON document; array sections carry a small shape header plus raw float64 or
int64 data, so round trips are bitwise.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import DataError
from ..psm import PsmCloud

logger = logging.getLogger(__name__)

MAGIC = b"PSAV"
VERSION = 1
STAGES = ("shape", "appearance")

_DTYPE_CODES = {"<f8": 0, "<i8": 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}

# section name -> (attribute, numpy dtype)
_ARRAY_SECTIONS = {
    b"FACEIDX\x00": ("face_idx", "<i8"),
    b"BARY\x00\x00\x00\x00": ("bary", "<f8"),
    b"OFFSET\x00\x00": ("offset", "<f8"),
    b"OPACITY\x00": ("opacity_raw", "<f8"),
    b"COLOR\x00\x00\x00": ("color", "<f8"),
    b"RADIUS\x00\x00": ("radius", "<f8"),
    b"CORRPOSE": ("corrective_pose", "<f8"),
    b"CORREXPR": ("corrective_expr", "<f8"),
    b"LOCALQ\x00\x00": ("local_q", "<f8"),
    b"LOGSCALE": ("log_scale", "<f8"),
    b"SHCOEFF\x00": ("sh_coeffs", "<f8"),
}
_GAUSSIAN_ATTRS = ("local_q", "log_scale", "sh_coeffs")


@dataclass
class CheckpointState:
    """Everything needed to re-render a trained avatar against its template."""

    stage: str
    seed: int
    cloud: PsmCloud
    opacity_raw: torch.Tensor
    color: torch.Tensor
    radius: torch.Tensor
    corrective_pose: torch.Tensor | None = None
    corrective_expr: torch.Tensor | None = None
    local_q: torch.Tensor | None = None
    log_scale: torch.Tensor | None = None
    sh_coeffs: torch.Tensor | None = None
    sh_degree: int = 0
    config: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.stage not in STAGES:
            raise DataError(f"unknown checkpoint stage {self.stage!r}")
        n = len(self.cloud)
        for name in ("opacity_raw", "radius"):
            t = getattr(self, name)
            if t.shape != (n,):
                raise DataError(f"{name} shape {tuple(t.shape)} does not match {n} samples")
        if self.color.shape != (n, 3):
            raise DataError(f"color shape {tuple(self.color.shape)} does not match {n} samples")
        if self.stage == "appearance":
            missing = [a for a in _GAUSSIAN_ATTRS if getattr(self, a) is None]
            if missing:
                raise DataError(f"appearance checkpoint missing {missing}")
            if self.local_q.shape != (n, 4):
                raise DataError("local_q must be (N, 4)")
            if self.log_scale.shape != (n, 3):
                raise DataError("log_scale must be (N, 3)")
            m = (self.sh_degree + 1) ** 2
            if self.sh_coeffs.shape != (n, 3, m):
                raise DataError(
                    f"sh_coeffs shape {tuple(self.sh_coeffs.shape)} does not match degree {self.sh_degree}"
                )


def _encode_array(arr: np.ndarray) -> bytes:
    dtype = "<i8" if arr.dtype.kind == "i" else "<f8"
    data = np.ascontiguousarray(arr.astype(dtype, copy=False))
    header = struct.pack("<BB", _DTYPE_CODES[dtype], data.ndim)
    header += struct.pack(f"<{data.ndim}Q", *data.shape)
    return header + data.tobytes()


def _decode_array(buf: bytes, name: str) -> np.ndarray:
    if len(buf) < 2:
        raise DataError(f"truncated section {name}")
    code, ndim = struct.unpack_from("<BB", buf)
    if code not in _CODE_DTYPES:
        raise DataError(f"section {name} has unknown dtype code {code}")
    head = 2 + 8 * ndim
    if len(buf) < head:
        raise DataError(f"truncated section {name}")
    shape = struct.unpack_from(f"<{ndim}Q", buf, 2)
    dtype = np.dtype(_CODE_DTYPES[code])
    expected = head + int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(buf) != expected:
        raise DataError(f"truncated section {name}: expected {expected} bytes, got {len(buf)}")
    return np.frombuffer(buf[head:], dtype=dtype).reshape(shape).copy()


def save_checkpoint(state: CheckpointState, path: str | Path) -> None:
    state.validate()
    meta = {
        "stage": state.stage,
        "seed": state.seed,
        "sh_degree": state.sh_degree,
        "config": state.config,
        "num_samples": len(state.cloud),
    }
    sections: list[tuple[bytes, bytes]] = [(b"META\x00\x00\x00\x00", json.dumps(meta, sort_keys=True).encode())]
    tensors = {
        "face_idx": state.cloud.face_idx,
        "bary": state.cloud.bary,
        "offset": state.cloud.offset,
        "opacity_raw": state.opacity_raw,
        "color": state.color,
        "radius": state.radius,
        "corrective_pose": state.corrective_pose,
        "corrective_expr": state.corrective_expr,
        "local_q": state.local_q,
        "log_scale": state.log_scale,
        "sh_coeffs": state.sh_coeffs,
    }
    for name, (attr, _) in _ARRAY_SECTIONS.items():
        t = tensors[attr]
        if t is None:
            continue
        sections.append((name, _encode_array(t.detach().numpy())))

    table_size = 4 + 4 + 4 + len(sections) * (8 + 8 + 8)
    offset = table_size
    table = [MAGIC, struct.pack("<II", VERSION, len(sections))]
    for name, payload in sections:
        table.append(name + struct.pack("<QQ", offset, len(payload)))
        offset += len(payload)
    blob = b"".join(table) + b"".join(p for _, p in sections)
    Path(path).write_bytes(blob)
    logger.info("wrote %s checkpoint: %d samples, %d bytes", state.stage, len(state.cloud), len(blob))


def load_checkpoint(path: str | Path) -> CheckpointState:
    p = Path(path)
    if not p.exists():
        raise DataError(f"checkpoint not found: {p}")
    blob = p.read_bytes()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise DataError(f"bad checkpoint magic in {p}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}, expected {VERSION}")
    table_end = 12 + count * 24
    if len(blob) < table_end:
        raise DataError("truncated section table")
    raw: dict[bytes, bytes] = {}
    for k in range(count):
        base = 12 + k * 24
        name = blob[base : base + 8]
        off, length = struct.unpack_from("<QQ", blob, base + 8)
        if off + length > len(blob):
            raise DataError(f"truncated section {name.rstrip(bytes([0])).decode(errors='replace')}")
        raw[name] = blob[off : off + length]

    if b"META\x00\x00\x00\x00" not in raw:
        raise DataError("checkpoint missing META section")
    try:
        meta = json.loads(raw[b"META\x00\x00\x00\x00"].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"corrupt META section: {e}") from e

    arrays: dict[str, torch.Tensor] = {}
    for name, (attr, _) in _ARRAY_SECTIONS.items():
        if name in raw:
            clean = name.rstrip(bytes([0])).decode()
            arrays[attr] = torch.from_numpy(_decode_array(raw[name], clean))

    for required in ("face_idx", "bary", "offset", "opacity_raw", "color", "radius"):
        if required not in arrays:
            raise DataError(f"checkpoint missing section for {required}")

    cloud = PsmCloud(face_idx=arrays["face_idx"], bary=arrays["bary"], offset=arrays["offset"])
    state = CheckpointState(
        stage=meta.get("stage", ""),
        seed=int(meta.get("seed", 0)),
        cloud=cloud,
        opacity_raw=arrays["opacity_raw"],
        color=arrays["color"],
        radius=arrays["radius"],
        corrective_pose=arrays.get("corrective_pose"),
        corrective_expr=arrays.get("corrective_expr"),
        local_q=arrays.get("local_q"),
        log_scale=arrays.get("log_scale"),
        sh_coeffs=arrays.get("sh_coeffs"),
        sh_degree=int(meta.get("sh_degree", 0)),
        config=meta.get("config", {}),
    )
    state.validate()
    return state
