"""WebSocket control surface: parameter messages in, state broadcasts and
preview frames out.

Protocol v1, single endpoint:
  * text frames: one JSON object per frame (set_param / get_state /
    start_record / stop_record / pause / resume; replies ack / state /
    error; server greets with {"type":"hello","proto":1})
  * binary frames: 1 byte kind (0 input, 1 output, 2 composite),
    4 bytes little-endian frame index, PNG payload

Preview fan-out is latest-wins per client at a capped rate, so a slow or
dead client can never back-pressure the render loop.
"""

from __future__ import annotations

import asyncio
import io
import json
import logging
import struct
import threading

from PIL import Image as PILImage

from .instrument import ControlState, FrameStats, PreviewBus

__all__ = ["ControlService", "PROTO_VERSION", "encode_preview", "decode_preview"]

log = logging.getLogger(__name__)

PROTO_VERSION = 1
DEFAULT_PORT = 7654


def encode_preview(kind: int, index: int, image) -> bytes:
    buf = io.BytesIO()
    arr = image.data[..., 0] if image.channels == 1 else image.data
    PILImage.fromarray(arr).save(buf, format="PNG")
    return bytes([kind]) + struct.pack("<I", index) + buf.getvalue()


def decode_preview(payload: bytes) -> tuple[int, int, bytes]:
    kind = payload[0]
    (index,) = struct.unpack_from("<I", payload, 1)
    return kind, index, payload[5:]


class ControlService:
    """Runs the websocket server on its own thread/event loop."""

    def __init__(
        self,
        control: ControlState,
        preview_bus: PreviewBus | None = None,
        stats: FrameStats | None = None,
        host: str = "127.0.0.1",
        port: int = DEFAULT_PORT,
        preview_fps: float = 15.0,
    ):
        self.control = control
        self.preview_bus = preview_bus
        self.stats = stats
        self.host = host
        self.port = port
        self.preview_fps = preview_fps
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None
        self._ready = threading.Event()
        self._stop: asyncio.Event | None = None
        self._clients: set = set()
        self._state_dirty: asyncio.Event | None = None

    # -- state messages ------------------------------------------------------

    def state_message(self) -> dict:
        snap = self.control.snapshot()
        return {
            "type": "state",
            "params": {
                "norm_low": snap.live.norm_low,
                "norm_high": snap.live.norm_high,
                "brightness": snap.live.brightness,
                "contrast": snap.live.contrast,
            },
            "paused": snap.paused,
            "recording": snap.recording,
            "generation": snap.generation,
            "fps": round(self.stats.fps, 3) if self.stats is not None else 0.0,
        }

    def _handle_text(self, raw: str) -> dict:
        """Returns the direct reply; sets the dirty flag on state changes."""
        try:
            msg = json.loads(raw)
            if not isinstance(msg, dict):
                raise ValueError("message must be an object")
        except ValueError as exc:
            return {"type": "error", "message": f"malformed message: {exc}"}
        mtype = msg.get("type")
        if mtype == "set_param":
            ok, result = self.control.set_param(msg.get("name"), msg.get("value"))
            if not ok:
                return {"type": "error", "message": str(result)}
            self._mark_dirty()
            return {"type": "ack", "name": msg["name"], "value": result}
        if mtype == "get_state":
            return self.state_message()
        if mtype == "pause":
            self.control.set_paused(True)
            self._mark_dirty()
            return {"type": "ack", "action": "pause"}
        if mtype == "resume":
            self.control.set_paused(False)
            self._mark_dirty()
            return {"type": "ack", "action": "resume"}
        if mtype == "start_record":
            self.control.set_recording(True)
            self._mark_dirty()
            return {"type": "ack", "action": "start_record"}
        if mtype == "stop_record":
            self.control.set_recording(False)
            self._mark_dirty()
            return {"type": "ack", "action": "stop_record"}
        return {"type": "error", "message": f"unknown message type {mtype!r}"}

    def _mark_dirty(self) -> None:
        if self._state_dirty is not None:
            self._state_dirty.set()

    # -- connection handling ---------------------------------------------------

    async def _preview_pump(self, ws) -> None:
        seen: dict[int, int] = {}
        interval = 1.0 / self.preview_fps
        while True:
            await asyncio.sleep(interval)
            if self.preview_bus is None:
                continue
            for kind, (index, image) in sorted(self.preview_bus.latest().items()):
                if seen.get(kind) == index:
                    continue
                seen[kind] = index
                await ws.send(self._encoded(kind, index, image))

    def _encoded(self, kind: int, index: int, image) -> bytes:
        # tiny per-service cache: encode each (kind, index) once for all clients
        cache = getattr(self, "_enc_cache", {})
        key = (kind, index)
        if key not in cache:
            cache = {k: v for k, v in cache.items() if k[0] != kind}
            cache[key] = encode_preview(kind, index, image)
            self._enc_cache = cache
        return cache[key]

    async def _handler(self, ws) -> None:
        self._clients.add(ws)
        pump = asyncio.ensure_future(self._preview_pump(ws))
        try:
            await ws.send(json.dumps({"type": "hello", "proto": PROTO_VERSION}))
            async for raw in ws:
                if isinstance(raw, bytes):
                    await ws.send(json.dumps(
                        {"type": "error", "message": "binary frames are server-to-client only"}
                    ))
                    continue
                reply = self._handle_text(raw)
                await ws.send(json.dumps(reply))
        except Exception:
            pass
        finally:
            pump.cancel()
            self._clients.discard(ws)

    async def _broadcaster(self) -> None:
        while True:
            await self._state_dirty.wait()
            self._state_dirty.clear()
            payload = json.dumps(self.state_message())
            for ws in list(self._clients):
                try:
                    await ws.send(payload)
                except Exception:
                    self._clients.discard(ws)

    async def _main(self) -> None:
        from websockets.asyncio.server import serve

        self._state_dirty = asyncio.Event()
        self._stop = asyncio.Event()
        broadcaster = asyncio.ensure_future(self._broadcaster())
        async with serve(self._handler, self.host, self.port) as server:
            self.port = server.sockets[0].getsockname()[1]
            self._ready.set()
            await self._stop.wait()
        broadcaster.cancel()

    def start(self) -> None:
        def runner():
            self._loop = asyncio.new_event_loop()
            asyncio.set_event_loop(self._loop)
            try:
                self._loop.run_until_complete(self._main())
            finally:
                self._loop.close()

        self._thread = threading.Thread(target=runner, daemon=True, name="control-service")
        self._thread.start()
        if not self._ready.wait(timeout=10):
            raise RuntimeError("control service failed to start")

    def stop(self) -> None:
        if self._loop is not None and self._stop is not None:
            self._loop.call_soon_threadsafe(self._stop.set)
        if self._thread is not None:
            self._thread.join(timeout=5)
