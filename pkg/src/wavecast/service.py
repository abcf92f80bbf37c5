"""WebSocket service streaming progressive render passes to clients.

Control messages are JSON text frames; each completed pass is pushed as a
binary frame (header below, then raw RGBA). A set_view message bumps the
session generation: the in-flight render is cancelled at its next pass
boundary and queued frames from older generations are discarded, so a
client never sees an old generation after a newer one has started
arriving. If a client lags more than MAX_PENDING frames, intermediate
(non-final) frames are dropped; final frames are always delivered.

Binary frame layout (little-endian):
  u32 magic 0x57465250, u32 generation, u32 pass_index,
  u32 flags (bit0 = final), u32 width, u32 height, u32 n_active,
  f32 completeness, then width*height*4 bytes of RGBA.
"""

from __future__ import annotations

import asyncio
import json
import struct
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .codec import CompressedVolume
from .engine import RenderOptions, render_passes
from .errors import UsageError
from .grids import MacrocellGrids
from .oracle import decode_full
from .traversal import Camera

FRAME_MAGIC = 0x57465250
FLAG_FINAL = 1
MAX_PENDING = 3
_HEADER = struct.Struct("<IIIIIIIf")


@dataclass(frozen=True)
class Frame:
    generation: int
    pass_index: int
    final: bool
    payload: bytes  # fully encoded wire frame


def encode_frame(generation, pass_index, final, width, height, n_active, completeness, rgba_bytes) -> bytes:
    header = _HEADER.pack(
        FRAME_MAGIC,
        generation,
        pass_index,
        FLAG_FINAL if final else 0,
        width,
        height,
        n_active,
        completeness,
    )
    return header + rgba_bytes


def parse_frame(data: bytes) -> dict:
    """Decode a wire frame; used by tests and kept in sync with the viewer."""
    if len(data) < _HEADER.size:
        raise ValueError("frame too short")
    magic, gen, pass_index, flags, w, h, n_active, completeness = _HEADER.unpack_from(data)
    if magic != FRAME_MAGIC:
        raise ValueError(f"bad frame magic {magic:#x}")
    rgba = data[_HEADER.size :]
    if len(rgba) != w * h * 4:
        raise ValueError("frame payload size mismatch")
    return {
        "generation": gen,
        "pass_index": pass_index,
        "final": bool(flags & FLAG_FINAL),
        "width": w,
        "height": h,
        "n_active": n_active,
        "completeness": completeness,
        "rgba": rgba,
    }


class FrameOutbox:
    """Pending-frame queue applying the stale-generation and backpressure rules."""

    def __init__(self, max_pending: int = MAX_PENDING):
        self.max_pending = max_pending
        self._pending: deque[Frame] = deque()

    def push(self, frame: Frame) -> None:
        # a newer generation supersedes anything still queued from older ones
        self._pending = deque(f for f in self._pending if f.generation >= frame.generation)
        self._pending.append(frame)
        while len(self._pending) > self.max_pending:
            victim = next((f for f in self._pending if not f.final), None)
            if victim is None:
                break  # final frames are never dropped
            self._pending.remove(victim)

    def pop(self, current_generation: int) -> Frame | None:
        while self._pending:
            frame = self._pending.popleft()
            if frame.generation >= current_generation:
                return frame
        return None

    def __len__(self) -> int:
        return len(self._pending)


@dataclass
class ViewRequest:
    generation: int
    camera: Camera
    iso: float
    width: int
    height: int
    speculation: bool


def _parse_set_view(msg: dict) -> tuple[Camera, float, int, int, bool]:
    try:
        cam_spec = msg["camera"]
        eye = [float(v) for v in cam_spec["eye"]]
        target = [float(v) for v in cam_spec["look_at"]]
        up = [float(v) for v in cam_spec.get("up", (0.0, 1.0, 0.0))]
        fov_y = float(cam_spec.get("fov_y", 45.0))
        iso = float(msg["iso"])
        width = int(msg["width"])
        height = int(msg["height"])
        speculation = bool(msg.get("speculation", True))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed set_view: {exc}") from exc
    if len(eye) != 3 or len(target) != 3 or len(up) != 3:
        raise UsageError("camera vectors must have three components")
    if width < 1 or height < 1:
        raise UsageError("width and height must be at least 1")
    cam = Camera.look_at(eye, target, up=up, fov_y=fov_y)
    return cam, iso, width, height, speculation


class _Session:
    """One render session per connection; render work runs off the handler."""

    def __init__(self, cv, grids, loop: asyncio.AbstractEventLoop):
        self.cv = cv
        self.grids = grids
        self.loop = loop
        self.generation = 0
        self.outbox = FrameOutbox()
        self.wake = asyncio.Event()
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._request: ViewRequest | None = None
        self._closed = False
        self._worker = threading.Thread(target=self._render_loop, daemon=True)
        self._worker.start()

    def set_view(self, cam, iso, width, height, speculation) -> int:
        with self._cond:
            self.generation += 1
            self._request = ViewRequest(self.generation, cam, iso, width, height, speculation)
            self._cond.notify()
            return self.generation

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify()

    def _enqueue(self, frame: Frame) -> None:
        self.outbox.push(frame)
        self.wake.set()

    def _render_loop(self) -> None:
        while True:
            with self._cond:
                while self._request is None and not self._closed:
                    self._cond.wait()
                if self._closed:
                    return
                req = self._request
                self._request = None
            opts = RenderOptions(
                width=req.width, height=req.height, speculation=req.speculation
            )
            n_pixels = req.width * req.height
            emitted_any = False
            for snapshot, stats in render_passes(
                self.cv, self.grids, req.camera, req.iso, opts
            ):
                with self._lock:
                    cancelled = self.generation != req.generation or self._closed
                if cancelled:
                    break
                emitted_any = True
                final = stats.completeness == 1.0
                frame = Frame(
                    generation=req.generation,
                    pass_index=stats.pass_index,
                    final=final,
                    payload=encode_frame(
                        req.generation,
                        stats.pass_index,
                        final,
                        req.width,
                        req.height,
                        n_pixels - int(round(stats.completeness * n_pixels)),
                        stats.completeness,
                        snapshot.rgba.tobytes(),
                    ),
                )
                self.loop.call_soon_threadsafe(self._enqueue, frame)
            if not emitted_any:
                with self._lock:
                    cancelled = self.generation != req.generation or self._closed
                if not cancelled:
                    # every pixel missed the volume: emit one complete frame
                    from .engine import Framebuffer

                    fb = Framebuffer.blank(req.width, req.height)
                    frame = Frame(
                        generation=req.generation,
                        pass_index=0,
                        final=True,
                        payload=encode_frame(
                            req.generation, 0, True, req.width, req.height, 0, 1.0,
                            fb.rgba.tobytes(),
                        ),
                    )
                    self.loop.call_soon_threadsafe(self._enqueue, frame)


def create_app(cv: CompressedVolume, grids: MacrocellGrids, ui_dir=None) -> FastAPI:
    app = FastAPI(title="wavecast render service")
    decoded = decode_full(cv)
    info = {
        "type": "info",
        "dims": list(cv.dims),
        "value_range": [decoded.value_range[0], decoded.value_range[1]],
    }

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        loop = asyncio.get_running_loop()
        session = _Session(cv, grids, loop)

        async def sender():
            while True:
                await session.wake.wait()
                session.wake.clear()
                while True:
                    with session._lock:
                        current = session.generation
                    frame = session.outbox.pop(current)
                    if frame is None:
                        break
                    await websocket.send_bytes(frame.payload)

        sender_task = asyncio.create_task(sender())
        try:
            while True:
                message = await websocket.receive()
                if message["type"] == "websocket.disconnect":
                    break
                text = message.get("text")
                if text is None:
                    await websocket.send_text(json.dumps({
                        "type": "error",
                        "code": "binary_control",
                        "reason": "control messages must be JSON text frames",
                    }))
                    continue
                try:
                    msg = json.loads(text)
                except json.JSONDecodeError as exc:
                    await websocket.send_text(json.dumps({
                        "type": "error", "code": "bad_json", "reason": str(exc),
                    }))
                    continue
                mtype = msg.get("type")
                if mtype == "info_request":
                    await websocket.send_text(json.dumps(info))
                elif mtype == "set_view":
                    try:
                        cam, iso, width, height, speculation = _parse_set_view(msg)
                    except UsageError as exc:
                        await websocket.send_text(json.dumps({
                            "type": "error", "code": "bad_set_view", "reason": str(exc),
                        }))
                        continue
                    session.set_view(cam, iso, width, height, speculation)
                else:
                    await websocket.send_text(json.dumps({
                        "type": "error",
                        "code": "unknown_type",
                        "reason": f"unknown message type {mtype!r}",
                    }))
        except WebSocketDisconnect:
            pass
        finally:
            session.close()
            sender_task.cancel()

    if ui_dir:
        ui_path = Path(ui_dir)
        if ui_path.is_dir():
            from fastapi.staticfiles import StaticFiles

            app.mount("/", StaticFiles(directory=ui_path, html=True), name="ui")
    return app
