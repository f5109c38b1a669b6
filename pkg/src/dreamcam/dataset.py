"""Target-only corpus ingestion and on-the-fly mini-batch assembly."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from . import imaging, preprocess
from .imaging import Image8
from .preprocess import PreprocessConfig, PreprocessParams

__all__ = [
    "Corpus",
    "CorpusError",
    "MiniBatch",
    "load_corpus",
    "next_minibatch",
    "to_tensor",
    "from_tensor",
    "write_manifest",
    "generate_synthetic_corpus",
]

log = logging.getLogger(__name__)

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


class CorpusError(RuntimeError):
    pass


@dataclass
class Corpus:
    root: Path
    entries: list[tuple[Path, int, int]]  # (path, width, height)
    min_dim: int
    rejected: list[tuple[Path, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


def _probe(path: Path, desired_size: int) -> tuple[int, int]:
    with PILImage.open(path) as pil:
        mode, size = pil.mode, pil.size
    if mode != "RGB":
        raise CorpusError(f"not a 3-channel image (mode {mode})")
    w, h = size
    if min(w, h) < desired_size:
        raise CorpusError(f"short side {min(w, h)} < desired_size {desired_size}")
    return w, h


def load_corpus(root, desired_size: int) -> Corpus:
    """Index every PNG/JPEG under ``root`` (recursive, sorted paths).

    Per-file failures are collected, not fatal, unless nothing survives.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus directory does not exist: {root}")
    entries: list[tuple[Path, int, int]] = []
    rejected: list[tuple[Path, str]] = []
    for path in sorted(root.rglob("*")):
        if not path.is_file() or path.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        try:
            w, h = _probe(path, desired_size)
        except Exception as exc:  # decode errors included in the report
            rejected.append((path, str(exc)))
            continue
        entries.append((path, w, h))
    if not entries:
        raise CorpusError(
            f"no usable images under {root} "
            f"({len(rejected)} rejected)" if rejected else f"no images under {root}"
        )
    for path, reason in rejected:
        log.warning("corpus: skipping %s: %s", path, reason)
    return Corpus(root=root, entries=entries, min_dim=desired_size, rejected=rejected)


def write_manifest(corpus: Corpus, path) -> None:
    lines = [f"{p} {w} {h}" for p, w, h in corpus.entries]
    Path(path).write_text("\n".join(lines) + "\n")


def to_tensor(img: Image8) -> np.ndarray:
    """uint8 (h, w, c) -> float32 (c, h, w) in [-1, 1]."""
    return (img.data.astype(np.float32) / 127.5 - 1.0).transpose(2, 0, 1)


def from_tensor(t: np.ndarray) -> Image8:
    """float (c, h, w) -> uint8 image; exact inverse of to_tensor."""
    if t.ndim == 4 and t.shape[0] == 1:
        t = t[0]
    if t.ndim != 3 or t.shape[0] not in (1, 3):
        raise ValueError(f"from_tensor expects (1|3, h, w), got shape {t.shape}")
    x = (t.astype(np.float64) + 1.0) * 127.5
    return Image8(np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8).transpose(1, 2, 0))


@dataclass
class MiniBatch:
    inputs: np.ndarray  # (B, 1, S, S) float32 in [-1, 1]
    targets: np.ndarray  # (B, 3, S, S) float32 in [-1, 1]
    params_used: list[PreprocessParams]


def next_minibatch(
    corpus: Corpus,
    config: PreprocessConfig,
    rng: np.random.Generator,
    batch: int = 4,
) -> MiniBatch:
    """Draw ``batch`` targets uniformly with replacement and synthesize pairs.

    A failed decode is retried once, then the slot is redrawn.
    """
    inputs, targets, used = [], [], []
    while len(inputs) < batch:
        idx = int(rng.integers(0, len(corpus.entries)))
        path = corpus.entries[idx][0]
        try:
            target = _load_rgb(path)
        except Exception:
            try:
                target = _load_rgb(path)
            except Exception as exc:
                log.warning("minibatch: redrawing after decode failure %s: %s", path, exc)
                continue
        params = preprocess.sample_params(config, rng)
        inp, target_crop = preprocess.make_pair(target, config, params)
        inputs.append(to_tensor(inp))
        targets.append(to_tensor(target_crop))
        used.append(params)
    return MiniBatch(np.stack(inputs), np.stack(targets), used)


def _load_rgb(path: Path) -> Image8:
    with PILImage.open(path) as pil:
        arr = np.asarray(pil.convert("RGB"), dtype=np.uint8)
    return Image8(np.ascontiguousarray(arr))


def generate_synthetic_corpus(out_dir, n: int = 8, size: int = 256, seed: int = 0) -> Path:
    """Procedural test corpus: soft-gradient blobs of random hue on gradient
    backgrounds. Keeps CI independent of any external dataset."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    for i in range(n):
        c0 = rng.uniform(0, 120, size=3)
        c1 = rng.uniform(120, 255, size=3)
        angle = rng.uniform(0, 2 * np.pi)
        ramp = (np.cos(angle) * xx + np.sin(angle) * yy + 1) / 3
        img = c0[None, None, :] + ramp[..., None] * (c1 - c0)[None, None, :]
        for _ in range(int(rng.integers(3, 7))):
            cx, cy = rng.uniform(0, 1, size=2)
            radius = rng.uniform(0.08, 0.3)
            hue = rng.uniform(0, 255, size=3)
            blob = np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * radius**2)))
            img = img * (1 - blob[..., None]) + hue[None, None, :] * blob[..., None]
        imaging.save_png(
            Image8(np.clip(img, 0, 255).astype(np.uint8)), out_dir / f"blob_{i:03d}.png"
        )
    return out_dir
