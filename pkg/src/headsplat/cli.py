"""Command-line entry point for the avatar pipeline.

Every subcommand reads defaults, then an optional JSON config file, then
dotted-key overrides (`optim.lr_color=0.01`), rejecting keys it does not
know. Each run echoes the fully resolved config next to its outputs so a
result can always be reproduced from its directory.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import torch

from .errors import DataError, HeadsplatError, UsageError
from .optim.training import OptimConfig

logger = logging.getLogger(__name__)

THREADS_ENV = "HEADSPLAT_THREADS"

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "optim": asdict(OptimConfig()),
    "sample": {"count": 2000, "max_offset": 0.30, "ratio": 1.0},
    "synthetic": {
        "count": 60,
        "width": 128,
        "height": 128,
        "num_samples": 2000,
        "sh_degree": 1,
        "perturb_expr": 0.0,
    },
    "render": {
        "width": 256,
        "height": 256,
        "orbit_radius": 0.55,
        "azimuth": 0.0,
        "elevation": 0.0,
        "background": [1.0, 1.0, 1.0],
    },
    "serve": {
        "host": "127.0.0.1",
        "port": 8765,
        "fps": 0.0,
        "credit_window": 3,
        "width": 256,
        "height": 256,
    },
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with its own format
        raise UsageError(message)


def _parse_override_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _merge(base: dict, incoming: dict, path: str = "") -> None:
    for key, value in incoming.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise UsageError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise UsageError(f"config key {where!r} expects a section, got {type(value).__name__}")
            _merge(base[key], value, where)
        else:
            base[key] = value


def _apply_override(cfg: dict, spec: str) -> None:
    if "=" not in spec:
        raise UsageError(f"override {spec!r} is not key=value")
    dotted, raw = spec.split("=", 1)
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise UsageError(f"unknown config key {dotted!r}")
        node = node[key]
    if keys[-1] not in node:
        raise UsageError(f"unknown config key {dotted!r}")
    if isinstance(node[keys[-1]], dict):
        raise UsageError(f"config key {dotted!r} is a section, not a value")
    node[keys[-1]] = _parse_override_value(raw)


def resolve_config(config_path: str | None, overrides: list[str], seed: int | None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if config_path:
        p = Path(config_path)
        if not p.exists():
            raise DataError(f"config file not found: {p}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise DataError(f"config file is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise DataError("config file must hold a JSON object")
        _merge(cfg, doc)
    for spec in overrides or []:
        _apply_override(cfg, spec)
    if seed is not None:
        cfg["seed"] = seed
    cfg["optim"]["seed"] = cfg["seed"]
    OptimConfig.from_dict(cfg["optim"])  # validates optimizer section early
    return cfg


def _echo_config(cfg: dict, out_dir: Path, name: str = "resolved_config.json") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(json.dumps(cfg, indent=1, sort_keys=True))


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file merged over defaults")
    sub.add_argument("--seed", type=int, help="override config seed")
    sub.add_argument(
        "overrides",
        nargs="*",
        metavar="key=value",
        help="dotted-key config overrides, e.g. optim.lr_color=0.01",
    )


def cmd_make_template(args) -> int:
    from .blockhead import generate_blockhead
    from .morphable import save_template

    cfg = resolve_config(args.config, args.overrides, args.seed)
    model = generate_blockhead(seed=cfg["seed"])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_template(model, out)
    _echo_config(cfg, out.parent, name=out.stem + ".config.json")
    print(json.dumps({"template": str(out), "vertices": model.num_vertices, "faces": model.num_faces}))
    return 0


def cmd_make_synthetic(args) -> int:
    from .io.synthetic import make_synthetic
    from .morphable import load_template

    cfg = resolve_config(args.config, args.overrides, args.seed)
    model = load_template(args.template)
    out = Path(args.out)
    syn = cfg["synthetic"]
    manifest = make_synthetic(
        model,
        out,
        count=syn["count"],
        width=syn["width"],
        height=syn["height"],
        seed=cfg["seed"],
        num_samples=syn["num_samples"],
        sh_degree=syn["sh_degree"],
        perturb_expr=syn["perturb_expr"],
    )
    _echo_config(cfg, out)
    print(json.dumps({"manifest": str(manifest), "frames": syn["count"]}))
    return 0


def cmd_sample(args) -> int:
    from .io.checkpoint import CheckpointState, save_checkpoint
    from .morphable import DTYPE, load_template
    from .psm import build_cloud, default_point_radius

    cfg = resolve_config(args.config, args.overrides, args.seed)
    model = load_template(args.template)
    cloud = build_cloud(
        model,
        cfg["sample"]["count"],
        seed=cfg["seed"],
        max_offset=cfg["sample"]["max_offset"],
        ratio=cfg["sample"]["ratio"],
    )
    n = len(cloud)
    radius = cfg["optim"]["point_radius"] or default_point_radius(model)
    state = CheckpointState(
        stage="shape",
        seed=cfg["seed"],
        cloud=cloud,
        opacity_raw=torch.zeros(n, dtype=DTYPE),
        color=torch.full((n, 3), 0.5, dtype=DTYPE),
        radius=torch.full((n,), radius, dtype=DTYPE),
        corrective_pose=model.corrective_pose_basis.clone(),
        corrective_expr=model.corrective_expr_basis.clone(),
        config=cfg["sample"],
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(state, out)
    _echo_config(cfg, out.parent, name=out.stem + ".config.json")
    print(json.dumps({"checkpoint": str(out), "samples": n}))
    return 0


def _load_for_fit(args, cfg):
    from .io.dataset import load_dataset

    model, records = load_dataset(args.dataset)
    return model, records


def cmd_fit_shape(args) -> int:
    from .io.checkpoint import load_checkpoint, save_checkpoint
    from .optim.training import fit_shape, write_stats
    from .psm import build_cloud

    cfg = resolve_config(args.config, args.overrides, args.seed)
    if args.epochs is not None:
        cfg["optim"]["shape_epochs"] = args.epochs
    ocfg = OptimConfig.from_dict(cfg["optim"])
    model, records = _load_for_fit(args, cfg)
    if args.cloud:
        cloud = load_checkpoint(args.cloud).cloud
    else:
        cloud = build_cloud(
            model,
            cfg["sample"]["count"],
            seed=cfg["seed"],
            max_offset=cfg["sample"]["max_offset"],
            ratio=cfg["sample"]["ratio"],
        )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out_dir)
    state, stats = fit_shape(records, model, cloud, ocfg)
    save_checkpoint(state, out_dir / "shape.psav")
    write_stats(args.stats or out_dir / "stats_shape.jsonl", stats)
    summary = {
        "checkpoint": str(out_dir / "shape.psav"),
        "samples": len(state.cloud),
        "final_loss": stats[-1]["loss"],
    }
    if "iou" in stats[-1]:
        summary["final_iou"] = stats[-1]["iou"]
    print(json.dumps(summary))
    return 0


def cmd_fit_appearance(args) -> int:
    from .io.checkpoint import load_checkpoint, save_checkpoint
    from .optim.training import fit_appearance, write_stats

    cfg = resolve_config(args.config, args.overrides, args.seed)
    if args.epochs is not None:
        cfg["optim"]["appearance_epochs"] = args.epochs
    ocfg = OptimConfig.from_dict(cfg["optim"])
    model, records = _load_for_fit(args, cfg)
    shape_state = load_checkpoint(args.shape_checkpoint)
    if shape_state.stage != "shape":
        raise DataError(f"expected a shape-stage checkpoint, got {shape_state.stage!r}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out_dir)
    state, stats = fit_appearance(records, model, shape_state, ocfg)
    save_checkpoint(state, out_dir / "appearance.psav")
    write_stats(args.stats or out_dir / "stats_appearance.jsonl", stats)
    print(
        json.dumps(
            {
                "checkpoint": str(out_dir / "appearance.psav"),
                "gaussians": len(state.cloud),
                "final_loss": stats[-1]["loss"],
                "final_psnr": stats[-1]["psnr"],
            }
        )
    )
    return 0


def cmd_render(args) -> int:
    from .avatar import render_avatar
    from .io.checkpoint import load_checkpoint
    from .io.dataset import load_stream
    from .io.images import write_image
    from .morphable import load_template
    from .splat.camera import orbit_camera

    cfg = resolve_config(args.config, args.overrides, args.seed)
    model = load_template(args.template)
    state = load_checkpoint(args.avatar)
    stream = load_stream(args.stream, model)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out_dir)
    rcfg = cfg["render"]
    background = torch.tensor(rcfg["background"], dtype=torch.float64)
    target = model.vertices.mean(dim=0)
    fallback = orbit_camera(
        target, rcfg["orbit_radius"], rcfg["azimuth"], rcfg["elevation"], rcfg["width"], rcfg["height"]
    )
    for k, (pe, camera) in enumerate(stream):
        cam = camera if camera is not None else fallback
        with torch.no_grad():
            render = render_avatar(state, model, pe, cam, background=background)
        write_image(out_dir / f"{k:06d}.png", render.image)
    print(json.dumps({"frames": len(stream), "out_dir": str(out_dir)}))
    return 0


def cmd_eval(args) -> int:
    from .io.images import read_image
    from .optim.metrics import psnr, ssim

    cfg = resolve_config(args.config, args.overrides, args.seed)
    dir_a = Path(args.dir_a)
    dir_b = Path(args.dir_b)
    names = sorted(p.name for p in dir_a.glob("*.png"))
    if not names:
        raise DataError(f"no PNG files in {dir_a}")
    missing = [n for n in names if not (dir_b / n).exists()]
    if missing:
        raise DataError(f"missing from {dir_b}: {missing[:5]}")
    rows = []
    for n in names:
        a = read_image(dir_a / n)
        b = read_image(dir_b / n)
        rows.append({"name": n, "psnr": psnr(a, b), "ssim": ssim(a, b)})
    report = {
        "count": len(rows),
        "psnr_mean": sum(r["psnr"] for r in rows) / len(rows),
        "ssim_mean": sum(r["ssim"] for r in rows) / len(rows),
        "frames": rows,
    }
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1))
    print(json.dumps({k: report[k] for k in ("count", "psnr_mean", "ssim_mean")}))
    del cfg
    return 0


def cmd_serve(args) -> int:
    from .server import run_server

    cfg = resolve_config(args.config, args.overrides, args.seed)
    scfg = cfg["serve"]
    return run_server(
        template_path=args.template,
        checkpoint_path=args.avatar,
        host=scfg["host"],
        port=scfg["port"],
        fps=scfg["fps"],
        credit_window=scfg["credit_window"],
        width=scfg["width"],
        height=scfg["height"],
        frontend_dir=args.frontend,
    )


def make_parser() -> _Parser:
    parser = _Parser(prog="headsplat", description="point-splat head avatar pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-template", help="write the procedural head template")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_make_template)

    p = sub.add_parser("make-synthetic", help="render a synthetic ground-truth dataset")
    p.add_argument("--template", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("sample", help="sample an untrained point cloud on a template")
    p.add_argument("--template", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fit-shape", help="stage one: fit point splats and correctives")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cloud", help="checkpoint holding the initial samples")
    p.add_argument("--epochs", type=int, help="override optim.shape_epochs")
    p.add_argument("--stats", help="stats JSONL path")
    _add_common(p)
    p.set_defaults(func=cmd_fit_shape)

    p = sub.add_parser("fit-appearance", help="stage two: fit Gaussians on the pruned cloud")
    p.add_argument("--dataset", required=True)
    p.add_argument("--shape-checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, help="override optim.appearance_epochs")
    p.add_argument("--stats", help="stats JSONL path")
    _add_common(p)
    p.set_defaults(func=cmd_fit_appearance)

    p = sub.add_parser("render", help="render an avatar along a parameter stream")
    p.add_argument("--avatar", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--stream", required=True, help="manifest-shaped parameter stream")
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="compare two directories of PNG frames")
    p.add_argument("--dir-a", required=True)
    p.add_argument("--dir-b", required=True)
    p.add_argument("--out", help="write the full per-frame report here")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="websocket render service")
    p.add_argument("--avatar", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--frontend", help="static viewer directory to serve at /")
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def _setup_threads() -> None:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        torch.set_num_threads(1)
        return
    try:
        count = int(raw)
        if count < 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    torch.set_num_threads(count)
    try:
        import numba

        numba.set_num_threads(min(count, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        _setup_threads()
        parser = make_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except HeadsplatError as e:
        print(
            json.dumps({"error": type(e).__name__, "message": str(e), "exit_code": e.exit_code}),
            file=sys.stderr,
        )
        return e.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
