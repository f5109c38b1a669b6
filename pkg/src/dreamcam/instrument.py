"""Real-time performance loop: frames in, model out, live human control.

The render loop reads one immutable control snapshot per frame; parameter
writers never block it. Camera/video sources run behind a latest-wins slot
so slow inference drops stale frames instead of queueing latency.
"""

from __future__ import annotations

import csv
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import model as model_mod
from . import preprocess
from .dataset import from_tensor, to_tensor
from .imaging import Image8, load_png, save_png
from .preprocess import LiveParams, PreprocessConfig

__all__ = [
    "ControlState",
    "ControlSnapshot",
    "FrameStats",
    "ImageSequenceSource",
    "VideoFileSource",
    "CameraSource",
    "LatestFrameSlot",
    "PreviewBus",
    "Recorder",
    "ExitReport",
    "run_performance",
    "composite_frame",
    "PARAM_SCHEMA",
]

log = logging.getLogger(__name__)

# name -> (kind, low, high); integers are clamped, floats are clamped
PARAM_SCHEMA = {
    "norm_low": ("int", 0, 255),
    "norm_high": ("int", 0, 255),
    "brightness": ("float", 0.1, 4.0),
    "contrast": ("float", 0.1, 4.0),
}


@dataclass(frozen=True)
class ControlSnapshot:
    live: LiveParams
    paused: bool
    recording: bool
    generation: int


class ControlState:
    """Live performance parameters with snapshot publication.

    Writers take the lock; readers grab a complete immutable snapshot.
    Every successful mutation bumps the generation counter.
    """

    def __init__(self, live: LiveParams = LiveParams()):
        self._lock = threading.Lock()
        self._live = live
        self._paused = False
        self._recording = False
        self._generation = 0
        self.last_error: str | None = None

    def snapshot(self) -> ControlSnapshot:
        with self._lock:
            return ControlSnapshot(self._live, self._paused, self._recording, self._generation)

    def set_param(self, name: str, value) -> tuple[bool, object]:
        """Returns (accepted, applied_value_or_reason)."""
        if name not in PARAM_SCHEMA:
            return False, f"unknown parameter {name!r}"
        kind, low, high = PARAM_SCHEMA[name]
        try:
            if kind == "int":
                value = int(round(float(value)))
            else:
                value = float(value)
        except (TypeError, ValueError):
            return False, f"non-numeric value for {name!r}"
        value = min(max(value, low), high)
        with self._lock:
            self._live = replace(self._live, **{name: value})
            self._generation += 1
        return True, value

    def set_paused(self, paused: bool) -> None:
        with self._lock:
            self._paused = bool(paused)
            self._generation += 1

    def set_recording(self, recording: bool) -> None:
        with self._lock:
            self._recording = bool(recording)
            self._generation += 1


@dataclass
class FrameStats:
    fps: float = 0.0
    latency_ms: dict = field(default_factory=dict)
    frames_total: int = 0
    _last_t: float | None = None

    def update(self, stage_ms: dict) -> None:
        now = time.perf_counter()
        if self._last_t is not None:
            dt = now - self._last_t
            if dt > 0:
                inst = 1.0 / dt
                self.fps = inst if self.fps == 0.0 else 0.9 * self.fps + 0.1 * inst
        self._last_t = now
        self.frames_total += 1
        for k, v in stage_ms.items():
            prev = self.latency_ms.get(k, v)
            self.latency_ms[k] = 0.9 * prev + 0.1 * v


class ImageSequenceSource:
    """Deterministic source: sorted PNG/JPEG files from a directory."""

    def __init__(self, directory, fps: float = 0.0, loop: bool = False):
        self.paths = sorted(
            p
            for p in Path(directory).iterdir()
            if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        if not self.paths:
            raise FileNotFoundError(f"no frames in {directory}")
        self.fps = fps
        self.loop = loop
        self._i = 0
        self._last = 0.0

    def read(self) -> Image8 | None:
        if self._i >= len(self.paths):
            if not self.loop:
                return None
            self._i = 0
        if self.fps > 0:
            wait = self._last + 1.0 / self.fps - time.perf_counter()
            if wait > 0:
                time.sleep(wait)
            self._last = time.perf_counter()
        frame = load_png(self.paths[self._i])
        if frame.channels == 1:
            frame = Image8(np.repeat(frame.data, 3, axis=2))
        self._i += 1
        return frame

    def close(self) -> None:
        pass


class VideoFileSource:
    def __init__(self, path, loop: bool = False):
        import cv2

        self._cv2 = cv2
        self.path = str(path)
        self.loop = loop
        self.cap = cv2.VideoCapture(self.path)
        if not self.cap.isOpened():
            raise RuntimeError(f"cannot open video {path}")

    def read(self) -> Image8 | None:
        ok, bgr = self.cap.read()
        if not ok:
            if not self.loop:
                return None
            self.cap.set(self._cv2.CAP_PROP_POS_FRAMES, 0)
            ok, bgr = self.cap.read()
            if not ok:
                return None
        return Image8(np.ascontiguousarray(bgr[:, :, ::-1]))

    def close(self) -> None:
        self.cap.release()


class CameraSource:
    def __init__(self, device: int = 0):
        import cv2

        self.cap = cv2.VideoCapture(device)
        if not self.cap.isOpened():
            raise RuntimeError(f"cannot open camera {device}")

    def read(self) -> Image8 | None:
        ok, bgr = self.cap.read()
        if not ok:
            return None
        return Image8(np.ascontiguousarray(bgr[:, :, ::-1]))

    def close(self) -> None:
        self.cap.release()


class LatestFrameSlot:
    """Capacity-1 producer/consumer slot; the newest frame always wins."""

    def __init__(self):
        self._lock = threading.Lock()
        self._item = None
        self._closed = False

    def put(self, item) -> None:
        with self._lock:
            self._item = item

    def take(self):
        with self._lock:
            item, self._item = self._item, None
            return item

    def close(self) -> None:
        self._closed = True

    @property
    def closed(self) -> bool:
        return self._closed


class PreviewBus:
    """Latest-wins broadcast of preview frames to any number of subscribers.

    Publishing is a dict write per kind under a short lock; a slow
    subscriber only ever misses frames, it never blocks the publisher.
    """

    KIND_INPUT = 0
    KIND_OUTPUT = 1
    KIND_COMPOSITE = 2

    def __init__(self):
        self._lock = threading.Lock()
        self._latest: dict[int, tuple[int, Image8]] = {}

    def publish(self, kind: int, index: int, image: Image8) -> None:
        with self._lock:
            self._latest[kind] = (index, image)

    def latest(self) -> dict[int, tuple[int, Image8]]:
        with self._lock:
            return dict(self._latest)


class Recorder:
    """Writes composited frames + a params sidecar CSV per recording run."""

    SIDECAR_HEADER = ["frame", "t_ms", "norm_low", "norm_high", "brightness", "contrast"]

    def __init__(self, base_dir):
        self.base_dir = Path(base_dir)
        self.run_dir: Path | None = None
        self._csv = None
        self._writer = None
        self._n = 0
        self._t0 = 0.0
        self._run_idx = 0

    @property
    def active(self) -> bool:
        return self.run_dir is not None

    def start(self) -> Path:
        self.run_dir = self.base_dir / f"run_{self._run_idx:03d}"
        self._run_idx += 1
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._csv = open(self.run_dir / "params.csv", "w", newline="")
        self._writer = csv.writer(self._csv)
        self._writer.writerow(self.SIDECAR_HEADER)
        self._n = 0
        self._t0 = time.perf_counter()
        return self.run_dir

    def write(self, composite: Image8, live: LiveParams) -> None:
        if not self.active:
            return
        try:
            save_png(composite, self.run_dir / f"frame_{self._n:07d}.png")
            t_ms = (time.perf_counter() - self._t0) * 1000.0
            self._writer.writerow(
                [self._n, f"{t_ms:.3f}", live.norm_low, live.norm_high,
                 f"{live.brightness!r}", f"{live.contrast!r}"]
            )
            self._csv.flush()
            self._n += 1
        except OSError as exc:
            log.error("recording stopped: %s", exc)
            self.stop()
            raise

    def stop(self) -> None:
        if self._csv is not None:
            self._csv.close()
        self._csv = None
        self._writer = None
        self.run_dir = None


@dataclass
class ExitReport:
    frames: int
    mean_fps: float
    stage_latency_ms: dict
    error: str | None = None

    def summary(self) -> str:
        stages = ", ".join(f"{k}={v:.2f}ms" for k, v in self.stage_latency_ms.items())
        lines = [
            f"frames: {self.frames}",
            f"mean fps: {self.mean_fps:.2f}",
            f"stage latency: {stages or 'n/a'}",
        ]
        if self.error:
            lines.append(f"error: {self.error}")
        return "\n".join(lines)


def composite_frame(prepared: Image8, output: Image8) -> Image8:
    """Side-by-side view: live (prepared color) frame | model output."""
    left = np.repeat(prepared.data, 3, axis=2) if prepared.channels == 1 else prepared.data
    right = np.repeat(output.data, 3, axis=2) if output.channels == 1 else output.data
    return Image8(np.concatenate([left, right], axis=1))


def run_performance(
    generator,
    source,
    control: ControlState,
    config: PreprocessConfig,
    preview_bus: PreviewBus | None = None,
    recorder: Recorder | None = None,
    frame_sink=None,
    max_frames: int | None = None,
    stop_event: threading.Event | None = None,
    stats: FrameStats | None = None,
) -> ExitReport:
    """Drive the live loop until the source ends or a stop is requested.

    Per frame: snapshot control, preprocess, infer, composite, deliver.
    Pausing freezes delivery and stats but keeps accepting control changes.
    """
    stats = stats if stats is not None else FrameStats()
    frames = 0
    fps_sum = 0.0
    error = None
    t_start = time.perf_counter()
    try:
        while True:
            if stop_event is not None and stop_event.is_set():
                break
            if max_frames is not None and frames >= max_frames:
                break
            snap = control.snapshot()
            if snap.paused:
                time.sleep(0.005)
                continue

            t0 = time.perf_counter()
            frame = source.read()
            if frame is None:
                break
            t1 = time.perf_counter()
            prepared = preprocess.prepare_frame(frame, config)
            inp = preprocess.live_from_prepared(prepared, config, snap.live)
            t2 = time.perf_counter()
            pred = model_mod.infer(generator, to_tensor(inp))
            t3 = time.perf_counter()
            output = from_tensor(pred)
            comp = composite_frame(prepared, output)
            t4 = time.perf_counter()

            if preview_bus is not None:
                preview_bus.publish(PreviewBus.KIND_INPUT, frames, inp)
                preview_bus.publish(PreviewBus.KIND_OUTPUT, frames, output)
                preview_bus.publish(PreviewBus.KIND_COMPOSITE, frames, comp)
            if recorder is not None and snap.recording:
                if not recorder.active:
                    recorder.start()
                try:
                    recorder.write(comp, snap.live)
                except OSError as exc:
                    control.last_error = f"recording failed: {exc}"
            elif recorder is not None and recorder.active:
                recorder.stop()
            if frame_sink is not None:
                frame_sink(frames, comp)

            stats.update(
                {
                    "acquire": (t1 - t0) * 1000.0,
                    "preprocess": (t2 - t1) * 1000.0,
                    "infer": (t3 - t2) * 1000.0,
                    "composite": (t4 - t3) * 1000.0,
                }
            )
            frames += 1
    except Exception as exc:  # inference failure and friends
        error = f"{type(exc).__name__}: {exc}"
        log.exception("performance loop aborted")
        raise
    finally:
        if recorder is not None and recorder.active:
            recorder.stop()
        source.close()
    elapsed = time.perf_counter() - t_start
    mean_fps = frames / elapsed if elapsed > 0 else 0.0
    return ExitReport(frames, mean_fps, dict(stats.latency_ms), error)
