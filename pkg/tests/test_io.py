import json
import struct

import pytest
import torch

from headsplat.blockhead import generate_blockhead
from headsplat.errors import DataError
from headsplat.io.checkpoint import CheckpointState, load_checkpoint, save_checkpoint
from headsplat.io.dataset import load_dataset, load_manifest, load_stream, save_manifest
from headsplat.io.images import linear_to_srgb, read_image, read_mask, srgb_to_linear, write_image, write_mask
from headsplat.psm import PsmCloud, build_cloud

F64 = torch.float64


def random_state(stage, n=17, seed=0, with_corrective=True, sh_degree=2):
    g = torch.Generator().manual_seed(seed)
    bary = torch.rand(n, 3, dtype=F64, generator=g)
    bary = bary / bary.sum(dim=1, keepdim=True)
    cloud = PsmCloud(
        face_idx=torch.randint(0, 9, (n,), generator=g),
        bary=bary,
        offset=torch.rand(n, dtype=F64, generator=g) * 0.3,
    )
    state = CheckpointState(
        stage=stage,
        seed=seed,
        cloud=cloud,
        opacity_raw=torch.randn(n, dtype=F64, generator=g),
        color=torch.rand(n, 3, dtype=F64, generator=g),
        radius=torch.rand(n, dtype=F64, generator=g) * 0.01,
        config={"lr": 0.01, "note": "fixture"},
    )
    if with_corrective:
        state.corrective_pose = torch.randn(5, 3, 27, dtype=F64, generator=g)
        state.corrective_expr = torch.randn(5, 3, 4, dtype=F64, generator=g)
    if stage == "appearance":
        q = torch.randn(n, 4, dtype=F64, generator=g)
        state.local_q = q / q.norm(dim=1, keepdim=True)
        state.log_scale = torch.randn(n, 3, dtype=F64, generator=g)
        state.sh_coeffs = torch.randn(n, 3, (sh_degree + 1) ** 2, dtype=F64, generator=g)
        state.sh_degree = sh_degree
    return state


@pytest.mark.parametrize("stage", ["shape", "appearance"])
def test_checkpoint_round_trip_bitwise(tmp_path, stage):
    state = random_state(stage)
    path = tmp_path / "a.psav"
    save_checkpoint(state, path)
    back = load_checkpoint(path)
    assert back.stage == stage
    assert back.seed == state.seed
    assert back.config == state.config
    assert torch.equal(back.cloud.face_idx, state.cloud.face_idx)
    assert torch.equal(back.cloud.bary, state.cloud.bary)
    assert torch.equal(back.cloud.offset, state.cloud.offset)
    assert torch.equal(back.opacity_raw, state.opacity_raw)
    assert torch.equal(back.color, state.color)
    assert torch.equal(back.radius, state.radius)
    assert torch.equal(back.corrective_pose, state.corrective_pose)
    if stage == "appearance":
        assert torch.equal(back.local_q, state.local_q)
        assert torch.equal(back.log_scale, state.log_scale)
        assert torch.equal(back.sh_coeffs, state.sh_coeffs)
        assert back.sh_degree == state.sh_degree


def test_checkpoint_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.psav"
    p.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(DataError, match="magic"):
        load_checkpoint(p)


def test_checkpoint_rejects_future_version(tmp_path):
    state = random_state("shape")
    p = tmp_path / "v.psav"
    save_checkpoint(state, p)
    blob = bytearray(p.read_bytes())
    blob[4:8] = struct.pack("<I", 2)
    p.write_bytes(bytes(blob))
    with pytest.raises(DataError, match="unsupported checkpoint version 2"):
        load_checkpoint(p)


def test_checkpoint_truncation_names_section(tmp_path):
    state = random_state("shape")
    p = tmp_path / "t.psav"
    save_checkpoint(state, p)
    blob = p.read_bytes()
    p.write_bytes(blob[: len(blob) - 16])
    with pytest.raises(DataError, match="truncated section"):
        load_checkpoint(p)


def test_checkpoint_missing_file_and_missing_section(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_checkpoint(tmp_path / "absent.psav")
    state = random_state("appearance")
    state.local_q = None
    with pytest.raises(DataError, match="appearance checkpoint missing"):
        save_checkpoint(state, tmp_path / "x.psav")


def test_srgb_transfer_endpoints_and_round_trip():
    x = torch.linspace(0.0, 1.0, 1001, dtype=F64)
    assert float(linear_to_srgb(torch.zeros(1, dtype=F64))) == 0.0
    assert abs(float(linear_to_srgb(torch.ones(1, dtype=F64))) - 1.0) < 1e-12
    assert abs(float(srgb_to_linear(torch.ones(1, dtype=F64))) - 1.0) < 1e-12
    back = srgb_to_linear(linear_to_srgb(x))
    assert (back - x).abs().max() < 1e-12
    # monotone and continuous across the knee
    enc = linear_to_srgb(x)
    assert (enc[1:] >= enc[:-1]).all()
    lo = linear_to_srgb(torch.tensor([0.0031308 - 1e-9], dtype=F64))
    hi = linear_to_srgb(torch.tensor([0.0031308 + 1e-9], dtype=F64))
    assert abs(float(hi) - float(lo)) < 1e-6


def test_png_round_trip_quantization_bound(tmp_path):
    g = torch.Generator().manual_seed(1)
    img = torch.rand(20, 24, 3, dtype=F64, generator=g)
    path = tmp_path / "x.png"
    write_image(path, img)
    back = read_image(path)
    err = (linear_to_srgb(back) - linear_to_srgb(img)).abs().max()
    assert float(err) <= 0.5 / 255.0 + 1e-9


def test_mask_round_trip(tmp_path):
    mask = torch.rand(9, 9) > 0.5
    write_mask(tmp_path / "m.png", mask)
    assert torch.equal(read_mask(tmp_path / "m.png"), mask)


def test_missing_image_errors_name_path(tmp_path):
    with pytest.raises(DataError, match="not found"):
        read_image(tmp_path / "nope.png")


def _write_tiny_dataset(tmp_path, model, frames=2, width=16, height=16):
    from headsplat.morphable import save_template
    from headsplat.splat.camera import orbit_camera

    save_template(model, tmp_path / "template.json")
    (tmp_path / "frames").mkdir()
    entries = []
    for k in range(frames):
        img = torch.full((height, width, 3), 0.25 * (k + 1), dtype=F64)
        write_image(tmp_path / f"frames/{k}.png", img)
        cam = orbit_camera([0.0, 0.15, 0.0], 0.5, 10.0 * k, 0.0, width, height)
        entries.append(
            {
                "image": f"frames/{k}.png",
                "pose": [[0.0] * 3 for _ in range(model.num_joints)],
                "expression": [0.0] * model.num_expressions,
                "camera": cam.to_dict(),
            }
        )
    save_manifest(tmp_path / "manifest.json", "template.json", entries)
    return entries


def test_load_dataset_round_trip(tmp_path, blockhead):
    _write_tiny_dataset(tmp_path, blockhead)
    model, records = load_dataset(tmp_path / "manifest.json")
    assert len(records) == 2
    assert records[0].image.shape == (16, 16, 3)
    assert records[0].camera.width == 16
    assert torch.equal(model.vertices, blockhead.vertices)


def test_load_dataset_missing_image_names_frame(tmp_path, blockhead):
    _write_tiny_dataset(tmp_path, blockhead)
    (tmp_path / "frames/1.png").unlink()
    with pytest.raises(DataError, match="frame 1"):
        load_dataset(tmp_path / "manifest.json")


def test_manifest_rejects_unknown_keys_and_versions(tmp_path, blockhead):
    entries = _write_tiny_dataset(tmp_path, blockhead)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    doc["surprise"] = 1
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(DataError, match="unknown keys"):
        load_manifest(tmp_path / "manifest.json")

    doc = {"version": 2, "template": "template.json", "frames": entries}
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(DataError, match="version"):
        load_manifest(tmp_path / "manifest.json")

    entries[0]["extra"] = True
    doc = {"version": 1, "template": "template.json", "frames": entries}
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(DataError, match="frame 0 has unknown keys"):
        load_dataset(tmp_path / "manifest.json")


def test_load_dataset_rejects_size_mismatch(tmp_path, blockhead):
    entries = _write_tiny_dataset(tmp_path, blockhead)
    img = torch.zeros(8, 8, 3, dtype=F64)
    write_image(tmp_path / "frames/0.png", img)
    with pytest.raises(DataError, match="frame 0 image"):
        load_dataset(tmp_path / "manifest.json")
    del entries


def test_load_stream_accepts_imageless_frames(tmp_path, blockhead):
    entries = _write_tiny_dataset(tmp_path, blockhead)
    for e in entries:
        e.pop("image")
    doc = {"version": 1, "frames": entries}
    (tmp_path / "stream.json").write_text(json.dumps(doc))
    stream = load_stream(tmp_path / "stream.json", blockhead)
    assert len(stream) == 2
    pe, cam = stream[1]
    assert pe.theta.shape == (blockhead.num_joints, 3)
    assert cam.height == 16


def test_pose_shape_validated_against_template(tmp_path, blockhead):
    entries = _write_tiny_dataset(tmp_path, blockhead)
    entries[0]["pose"] = [[0.0, 0.0, 0.0]]
    save_manifest(tmp_path / "manifest.json", "template.json", entries)
    with pytest.raises(DataError, match="frame 0 pose"):
        load_dataset(tmp_path / "manifest.json")


def test_checkpoint_cloud_matches_template_sampling(tmp_path):
    model = generate_blockhead(seed=0)
    cloud = build_cloud(model, 25, seed=3)
    n = len(cloud)
    state = CheckpointState(
        stage="shape",
        seed=3,
        cloud=cloud,
        opacity_raw=torch.zeros(n, dtype=F64),
        color=torch.full((n, 3), 0.5, dtype=F64),
        radius=torch.full((n,), 0.004, dtype=F64),
    )
    save_checkpoint(state, tmp_path / "s.psav")
    back = load_checkpoint(tmp_path / "s.psav")
    back.cloud.validate(model)
