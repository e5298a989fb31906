"""Websocket render service for live avatar animation.

One avatar session per process. Clients drive pose, expression, and an orbit
camera over text messages; rendered frames come back as binary websocket
messages: a 16-byte header (magic, width, height, sequence number) followed
by a PNG. Flow control is explicit: a client starts with `credit_window`
frame credits and tops them up as it consumes frames, so the server never
renders ahead of a slow consumer.
"""

from __future__ import annotations

import asyncio
import json
import logging
import struct
import time
from dataclasses import dataclass, field

import torch
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse

from .avatar import check_compatible, render_avatar
from .errors import DataError
from .io.checkpoint import CheckpointState, load_checkpoint
from .io.images import png_bytes
from .morphable import DTYPE, PoseExpr, TemplateModel, load_template
from .splat.camera import CameraModel, orbit_camera

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
FRAME_MAGIC = b"PSFR"
FRAME_HEADER = struct.Struct("<4sIII")  # magic, width, height, seq
DEFAULT_CREDIT_WINDOW = 3
MIN_SIZE = 16
MAX_SIZE = 1024
FPS_EMA_ALPHA = 0.2

_SET_PARAM_KEYS = {"v", "type", "seq", "pose", "expression", "camera", "width", "height"}
_CAMERA_KEYS = {"azimuth", "elevation", "distance"}


@dataclass
class OrbitState:
    azimuth: float = 0.0
    elevation: float = 0.0
    distance: float = 0.55


@dataclass
class _Snapshot:
    pose_expr: PoseExpr
    camera: CameraModel
    width: int
    height: int


@dataclass
class SessionState:
    """Mutable avatar state plus render bookkeeping, guarded by one lock."""

    model: TemplateModel
    state: CheckpointState
    width: int
    height: int
    orbit: OrbitState = field(default_factory=OrbitState)
    pose_expr: PoseExpr | None = None
    frame_counter: int = 0
    fps: float = 0.0
    _gap_ema: float | None = None
    _last_time: float | None = None

    def __post_init__(self):
        if self.pose_expr is None:
            self.pose_expr = PoseExpr.rest(self.model)
        self._target = self.model.vertices.mean(dim=0)

    def camera(self) -> CameraModel:
        return orbit_camera(
            self._target,
            self.orbit.distance,
            self.orbit.azimuth,
            self.orbit.elevation,
            self.width,
            self.height,
        )

    def snapshot(self) -> _Snapshot:
        pe = PoseExpr(theta=self.pose_expr.theta.clone(), psi=self.pose_expr.psi.clone())
        return _Snapshot(pe, self.camera(), self.width, self.height)

    def tick(self) -> tuple[int, float]:
        """Advance the frame counter and fps estimate; returns (seq, fps)."""
        self.frame_counter += 1
        now = time.perf_counter()
        if self._last_time is not None:
            gap = max(now - self._last_time, 1e-6)
            self._gap_ema = gap if self._gap_ema is None else (
                (1.0 - FPS_EMA_ALPHA) * self._gap_ema + FPS_EMA_ALPHA * gap
            )
            self.fps = 1.0 / self._gap_ema
        self._last_time = now
        return self.frame_counter, self.fps


def _validate_set_params(msg: dict, model: TemplateModel) -> dict:
    """Check every field before any state is touched; returns parsed updates."""
    unknown = set(msg) - _SET_PARAM_KEYS
    if unknown:
        raise DataError(f"unknown fields {sorted(unknown)}")
    updates: dict = {}
    if "pose" in msg:
        theta = torch.tensor(msg["pose"], dtype=DTYPE)
        if theta.shape != (model.num_joints, 3):
            raise DataError(
                f"pose shape {tuple(theta.shape)} does not match expected "
                f"({model.num_joints}, 3)"
            )
        if not torch.isfinite(theta).all():
            raise DataError("pose contains non-finite values")
        updates["pose"] = theta
    if "expression" in msg:
        psi = torch.tensor(msg["expression"], dtype=DTYPE)
        if psi.dim() != 1 or psi.numel() != model.num_expressions:
            raise DataError(
                f"expression length {psi.numel()} does not match expected "
                f"{model.num_expressions}"
            )
        if not torch.isfinite(psi).all():
            raise DataError("expression contains non-finite values")
        updates["expression"] = psi
    if "camera" in msg:
        cam = msg["camera"]
        if not isinstance(cam, dict):
            raise DataError("camera must be an object")
        bad = set(cam) - _CAMERA_KEYS
        if bad:
            raise DataError(f"unknown camera fields {sorted(bad)}")
        for key, value in cam.items():
            if not isinstance(value, (int, float)) or not torch.isfinite(torch.tensor(float(value))):
                raise DataError(f"camera {key} must be a finite number")
        if "distance" in cam and cam["distance"] <= 0:
            raise DataError("camera distance must be positive")
        updates["camera"] = {k: float(v) for k, v in cam.items()}
    for key in ("width", "height"):
        if key in msg:
            value = msg[key]
            if not isinstance(value, int) or not MIN_SIZE <= value <= MAX_SIZE:
                raise DataError(f"{key} must be an integer in [{MIN_SIZE}, {MAX_SIZE}]")
            updates[key] = value
    return updates


class AvatarSession:
    """Owns the session state; all mutation and snapshotting goes through here."""

    def __init__(
        self,
        model: TemplateModel,
        state: CheckpointState,
        width: int,
        height: int,
        credit_window: int = DEFAULT_CREDIT_WINDOW,
    ):
        check_compatible(state, model)
        self.session = SessionState(model=model, state=state, width=width, height=height)
        self.credit_window = credit_window
        self.lock = asyncio.Lock()
        self.subscribers: set[asyncio.Event] = set()

    def _wake_all(self) -> None:
        for event in self.subscribers:
            event.set()

    async def handle_set_params(self, msg: dict) -> tuple[dict, bool]:
        """Apply a partial parameter update; returns (ack message, changed)."""
        seq = msg.get("seq")
        try:
            updates = _validate_set_params(msg, self.session.model)
        except DataError as e:
            return {"v": PROTOCOL_VERSION, "type": "error", "seq": seq, "message": str(e)}, False
        async with self.lock:
            if "pose" in updates:
                self.session.pose_expr.theta = updates["pose"]
            if "expression" in updates:
                self.session.pose_expr.psi = updates["expression"]
            for key, value in updates.get("camera", {}).items():
                setattr(self.session.orbit, key, value)
            if "width" in updates:
                self.session.width = updates["width"]
            if "height" in updates:
                self.session.height = updates["height"]
        changed = bool(updates)
        if changed:
            self._wake_all()
        return {"v": PROTOCOL_VERSION, "type": "ack", "seq": seq}, changed

    async def render_next(self) -> tuple[bytes, dict]:
        """Render one frame from an atomic snapshot; returns (binary message, stats)."""
        async with self.lock:
            snap = self.session.snapshot()
        render = await asyncio.to_thread(self._render_sync, snap)
        payload = await asyncio.to_thread(png_bytes, render.image)
        async with self.lock:
            seq, fps = self.session.tick()
        header = FRAME_HEADER.pack(FRAME_MAGIC, snap.width, snap.height, seq)
        stats = {"v": PROTOCOL_VERSION, "type": "stats", "fps": fps, "frames": seq}
        return header + payload, stats

    def _render_sync(self, snap: _Snapshot):
        with torch.no_grad():
            return render_avatar(
                self.session.state,
                self.session.model,
                snap.pose_expr,
                snap.camera,
                background=torch.ones(3, dtype=DTYPE),
            )

    def hello(self) -> dict:
        s = self.session
        return {
            "v": PROTOCOL_VERSION,
            "type": "hello",
            "num_joints": s.model.num_joints,
            "num_expressions": s.model.num_expressions,
            "width": s.width,
            "height": s.height,
            "credit_window": self.credit_window,
            "stage": s.state.stage,
        }


@dataclass
class _Client:
    credits: int
    dirty: bool = True
    last_seq: int = -1
    wake: asyncio.Event = field(default_factory=asyncio.Event)

    def __post_init__(self):
        self.wake.set()


def _error_msg(message: str, seq=None) -> dict:
    return {"v": PROTOCOL_VERSION, "type": "error", "seq": seq, "message": message}


async def _writer_loop(ws: WebSocket, client: _Client, avatar: AvatarSession) -> None:
    while True:
        await client.wake.wait()
        client.wake.clear()
        while client.dirty and client.credits > 0:
            client.dirty = False
            client.credits -= 1
            frame, stats = await avatar.render_next()
            await ws.send_bytes(frame)
            await ws.send_text(json.dumps(stats))


async def _handle_text(ws: WebSocket, raw: str, client: _Client, avatar: AvatarSession) -> None:
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError:
        await ws.send_text(json.dumps(_error_msg("message is not valid JSON")))
        return
    if not isinstance(msg, dict):
        await ws.send_text(json.dumps(_error_msg("message must be an object")))
        return
    seq = msg.get("seq")
    if msg.get("v") != PROTOCOL_VERSION:
        await ws.send_text(json.dumps(_error_msg(f"unsupported protocol version {msg.get('v')!r}", seq)))
        return
    kind = msg.get("type")
    if kind == "set_params":
        if not isinstance(seq, int):
            await ws.send_text(json.dumps(_error_msg("set_params requires an integer seq", seq)))
            return
        if seq <= client.last_seq:
            await ws.send_text(
                json.dumps(_error_msg(f"seq {seq} is not greater than {client.last_seq}", seq))
            )
            return
        client.last_seq = seq
        ack, changed = await avatar.handle_set_params(msg)
        await ws.send_text(json.dumps(ack))
        if changed:
            client.dirty = True
            client.wake.set()
    elif kind == "credit":
        frames = msg.get("frames")
        if not isinstance(frames, int) or frames < 1:
            await ws.send_text(json.dumps(_error_msg("credit requires a positive integer 'frames'", seq)))
            return
        client.credits = min(client.credits + frames, avatar.credit_window)
        client.wake.set()
    elif kind == "render":
        client.dirty = True
        client.wake.set()
        if seq is not None:
            await ws.send_text(json.dumps({"v": PROTOCOL_VERSION, "type": "ack", "seq": seq}))
    else:
        await ws.send_text(json.dumps(_error_msg(f"unknown message type {kind!r}", seq)))


def build_app(
    model: TemplateModel,
    state: CheckpointState,
    width: int = 256,
    height: int = 256,
    credit_window: int = DEFAULT_CREDIT_WINDOW,
    fps: float = 0.0,
    frontend_dir: str | None = None,
) -> FastAPI:
    avatar = AvatarSession(model, state, width, height, credit_window)
    app = FastAPI()
    app.state.avatar = avatar
    app.state.fps = fps

    @app.get("/healthz", response_class=PlainTextResponse)
    async def healthz() -> str:
        return "ok"

    @app.websocket("/session")
    async def session_ws(ws: WebSocket) -> None:
        await ws.accept()
        client = _Client(credits=avatar.credit_window)
        avatar.subscribers.add(client.wake)
        await ws.send_text(json.dumps(avatar.hello()))
        writer = asyncio.create_task(_writer_loop(ws, client, avatar))
        ticker = None
        if fps > 0:

            async def _tick() -> None:
                while True:
                    await asyncio.sleep(1.0 / fps)
                    client.dirty = True
                    client.wake.set()

            ticker = asyncio.create_task(_tick())
        try:
            while True:
                message = await ws.receive()
                if message["type"] == "websocket.disconnect":
                    break
                if message.get("text") is not None:
                    await _handle_text(ws, message["text"], client, avatar)
                elif message.get("bytes") is not None:
                    await ws.send_text(json.dumps(_error_msg("binary messages are not accepted")))
        except WebSocketDisconnect:
            pass
        finally:
            writer.cancel()
            if ticker is not None:
                ticker.cancel()
            avatar.subscribers.discard(client.wake)
            logger.info("client disconnected, session persists")

    if frontend_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")

    return app


def run_server(
    template_path: str,
    checkpoint_path: str,
    host: str = "127.0.0.1",
    port: int = 8765,
    fps: float = 0.0,
    credit_window: int = DEFAULT_CREDIT_WINDOW,
    width: int = 256,
    height: int = 256,
    frontend_dir: str | None = None,
) -> int:
    import uvicorn

    model = load_template(template_path)
    state = load_checkpoint(checkpoint_path)
    app = build_app(model, state, width, height, credit_window, fps, frontend_dir)
    logger.info("serving avatar on ws://%s:%d/session", host, port)
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0
