"""Single command-line entry point: train / perform / process / preview-pairs.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv as csv_mod
import logging
import sys
import threading
from pathlib import Path

import numpy as np
import torch

from . import dataset, model, preprocess, trainer
from .config import ConfigError, load_repo_config
from .control import ControlService
from .imaging import ImagingError, load_png, save_png
from .instrument import (
    CameraSource,
    ControlState,
    FrameStats,
    ImageSequenceSource,
    PreviewBus,
    Recorder,
    VideoFileSource,
    composite_frame,
    run_performance,
)
from .preprocess import LiveParams

log = logging.getLogger(__name__)


class CliError(Exception):
    """Validation failure -> exit code 2."""


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="repo config file (YAML)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dreamcam")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a target-only corpus")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--resume", type=Path, default=None)

    p = sub.add_parser("perform", help="run the live instrument")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--source", required=True, help="camera:N | video:path | seq:dir")
    p.add_argument("--control-port", type=int, default=None)
    p.add_argument("--record-dir", type=Path, default=None)
    p.add_argument("--headless", action="store_true")
    p.add_argument("--loop", action="store_true", help="loop file/sequence sources")
    p.add_argument("--seq-fps", type=float, default=0.0,
                   help="pace a seq: source at this frame rate (0 = as fast as possible)")
    p.add_argument("--max-frames", type=int, default=None)

    p = sub.add_parser("process", help="offline batch version of the live path")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--in", dest="in_dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--params", default=None, help='e.g. "norm_low=0,norm_high=128"')
    p.add_argument("--sidecar", type=Path, default=None, help="recorded params.csv to replay")

    p = sub.add_parser("preview-pairs", help="emit training-pair triptychs, no model")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("synth-corpus", help="generate the procedural test corpus")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--size", type=int, default=256)

    return parser


def _load_config(args):
    try:
        cfg = load_repo_config(args.config)
    except (ConfigError, OSError) as exc:
        raise CliError(str(exc)) from exc
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    print(cfg.describe())
    return cfg


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    if not args.corpus.is_dir():
        raise CliError(f"corpus directory not found: {args.corpus}")
    tc = trainer.TrainConfig(
        corpus_dir=args.corpus,
        out_dir=args.out,
        preprocess=cfg.preprocess,
        generator=cfg.model.generator_spec(),
        discriminator=cfg.model.discriminator_spec(),
        hp=cfg.train.hyperparams(),
        total_iterations=args.iters if args.iters is not None else cfg.train.total_iterations,
        batch_size=cfg.train.batch_size,
        checkpoint_every=cfg.train.checkpoint_every,
        preview_every=cfg.train.preview_every,
        seed=cfg.train.seed,
        resume=args.resume,
        num_threads=cfg.train.num_threads,
    )
    final = trainer.train(tc)
    print(f"final checkpoint: {final}")
    return 0


def _open_source(spec: str, loop: bool, seq_fps: float = 0.0):
    kind, _, rest = spec.partition(":")
    if kind == "camera":
        return CameraSource(int(rest or 0))
    if kind == "video":
        return VideoFileSource(rest, loop=loop)
    if kind == "seq":
        if not Path(rest).is_dir():
            raise CliError(f"sequence directory not found: {rest}")
        return ImageSequenceSource(rest, fps=seq_fps, loop=loop)
    raise CliError(f"unknown source {spec!r} (use camera:N | video:path | seq:dir)")


def _load_generator(path: Path):
    try:
        g, *_ = model.load_checkpoint(path)
    except FileNotFoundError as exc:
        raise CliError(f"checkpoint not found: {path}") from exc
    except model.CheckpointError as exc:
        raise CliError(str(exc)) from exc
    g.eval()
    return g


def _cmd_perform(args) -> int:
    cfg = _load_config(args)
    torch.set_num_threads(cfg.train.num_threads)
    g = _load_generator(args.checkpoint)
    source = _open_source(args.source, args.loop, args.seq_fps)
    control = ControlState()
    bus = PreviewBus()
    stats = FrameStats()
    recorder = Recorder(args.record_dir) if args.record_dir is not None else None
    if recorder is not None:
        control.set_recording(True)

    port = args.control_port if args.control_port is not None else cfg.service.port
    service = ControlService(
        control, bus, stats, host=cfg.service.host, port=port,
        preview_fps=cfg.service.preview_fps,
    )
    service.start()
    print(f"control: ws://{cfg.service.host}:{service.port}", flush=True)

    frame_sink = None
    if not args.headless:
        frame_sink = _window_sink()

    max_frames = args.max_frames
    if max_frames is None and cfg.instrument.max_frames:
        max_frames = cfg.instrument.max_frames
    try:
        report = run_performance(
            g, source, control, cfg.preprocess,
            preview_bus=bus, recorder=recorder, frame_sink=frame_sink,
            max_frames=max_frames, stats=stats,
        )
    finally:
        service.stop()
    print(report.summary())
    return 0


def _window_sink():
    try:
        import cv2

        def sink(index, comp):
            cv2.imshow("dreamcam", comp.data[:, :, ::-1])
            cv2.waitKey(1)

        return sink
    except Exception:
        log.warning("no display available, continuing headless")
        return None


def _parse_params(text: str) -> LiveParams:
    values = {}
    for part in text.split(","):
        if not part.strip():
            continue
        key, _, val = part.partition("=")
        key = key.strip()
        if key not in ("norm_low", "norm_high", "brightness", "contrast"):
            raise CliError(f"unknown parameter {key!r} in --params")
        values[key] = int(val) if key.startswith("norm") else float(val)
    try:
        return LiveParams(**values)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _read_sidecar(path: Path) -> list[LiveParams]:
    rows = []
    with open(path, newline="") as f:
        for row in csv_mod.DictReader(f):
            rows.append(
                LiveParams(
                    norm_low=int(row["norm_low"]),
                    norm_high=int(row["norm_high"]),
                    brightness=float(row["brightness"]),
                    contrast=float(row["contrast"]),
                )
            )
    return rows


def _cmd_process(args) -> int:
    cfg = _load_config(args)
    torch.set_num_threads(cfg.train.num_threads)
    g = _load_generator(args.checkpoint)
    if not args.in_dir.is_dir():
        raise CliError(f"input directory not found: {args.in_dir}")
    paths = sorted(
        p for p in args.in_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    )
    if not paths:
        raise CliError(f"no images in {args.in_dir}")
    sidecar = _read_sidecar(args.sidecar) if args.sidecar is not None else None
    fixed = _parse_params(args.params) if args.params else LiveParams()

    args.out.mkdir(parents=True, exist_ok=True)
    for n, path in enumerate(paths):
        live = sidecar[n] if sidecar is not None and n < len(sidecar) else fixed
        frame = load_png(path)
        if frame.channels == 1:
            frame = _gray_to_rgb(frame)
        prepared = preprocess.prepare_frame(frame, cfg.preprocess)
        inp = preprocess.live_from_prepared(prepared, cfg.preprocess, live)
        pred = model.infer(g, dataset.to_tensor(inp))
        comp = composite_frame(prepared, dataset.from_tensor(pred))
        save_png(comp, args.out / f"frame_{n:07d}.png")
    print(f"processed {len(paths)} frames -> {args.out}")
    return 0


def _gray_to_rgb(img):
    from .imaging import Image8

    return Image8(np.repeat(img.data, 3, axis=2))


def _cmd_preview_pairs(args) -> int:
    cfg = _load_config(args)
    try:
        corpus = dataset.load_corpus(args.corpus, cfg.preprocess.desired_size)
    except dataset.CorpusError as exc:
        raise CliError(str(exc)) from exc
    rng = np.random.default_rng(cfg.train.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        idx = int(rng.integers(0, len(corpus.entries)))
        target = load_png(corpus.entries[idx][0])
        params = preprocess.sample_params(cfg.preprocess, rng)
        inp, target_crop = preprocess.make_pair(target, cfg.preprocess, params)
        save_png(
            trainer.make_triptych(target_crop, inp, None),
            args.out / f"triptych_{i:03d}.png",
        )
    print(f"wrote {args.n} triptychs -> {args.out}")
    return 0


def _cmd_synth_corpus(args) -> int:
    cfg = _load_config(args)
    dataset.generate_synthetic_corpus(args.out, n=args.n, size=args.size, seed=cfg.train.seed)
    print(f"wrote {args.n} synthetic images -> {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "perform": _cmd_perform,
    "process": _cmd_process,
    "preview-pairs": _cmd_preview_pairs,
    "synth-corpus": _cmd_synth_corpus,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (dataset.CorpusError, ImagingError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # runtime failure
        log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
