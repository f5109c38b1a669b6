"""Training orchestration: data, steps, metrics CSV, previews, checkpoints."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import dataset, model
from .dataset import Corpus, from_tensor
from .imaging import Image8, save_png
from .model import DiscriminatorSpec, GeneratorSpec, HyperParams
from .preprocess import PreprocessConfig

__all__ = ["TrainConfig", "train", "make_triptych"]

log = logging.getLogger(__name__)

CSV_HEADER = "iter,l1,gan_g,gan_d,wall_ms"


@dataclass
class TrainConfig:
    corpus_dir: Path
    out_dir: Path
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    discriminator: DiscriminatorSpec = field(default_factory=DiscriminatorSpec)
    hp: HyperParams = field(default_factory=HyperParams)
    total_iterations: int = 500_000
    batch_size: int = 4
    checkpoint_every: int = 1000
    preview_every: int = 1000
    seed: int = 0
    resume: Path | None = None
    num_threads: int = 1

    def __post_init__(self):
        if self.total_iterations < 1:
            raise ValueError("total_iterations must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def make_triptych(target_crop: Image8, inp: Image8, prediction: Image8 | None) -> Image8:
    """Side-by-side preview: target crop | synthesized input | prediction.

    The right panel is mid-gray when no model prediction is available.
    """
    s = target_crop.height
    gray3 = np.repeat(inp.data, 3, axis=2) if inp.channels == 1 else inp.data
    if prediction is None:
        right = np.full((s, s, 3), 128, dtype=np.uint8)
    else:
        right = (
            np.repeat(prediction.data, 3, axis=2)
            if prediction.channels == 1
            else prediction.data
        )
    return Image8(np.concatenate([target_crop.data, gray3, right], axis=1))


def _iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    # keyed per iteration so a resumed run draws the identical batch stream
    return np.random.default_rng([seed, iteration])


def _prune_checkpoints(ckpt_dir: Path, every: int) -> None:
    # keep last 3 plus every 10th checkpoint index
    ckpts = sorted(ckpt_dir.glob("ckpt_*.l2sc"))
    keep = set(ckpts[-3:])
    for p in ckpts:
        idx = int(p.stem.split("_")[1]) // max(every, 1)
        if idx % 10 == 0:
            keep.add(p)
    for p in ckpts:
        if p not in keep:
            p.unlink()
            card = p.with_suffix(".card.txt")
            if card.exists():
                card.unlink()


def _write_card(ckpt_path: Path, cfg: TrainConfig, iteration: int) -> None:
    card = ckpt_path.with_suffix(".card.txt")
    card.write_text(
        "\n".join(
            [
                f"checkpoint: {ckpt_path.name}",
                f"generator: {cfg.generator}",
                f"discriminator: {cfg.discriminator}",
                f"corpus: {cfg.corpus_dir}",
                f"iteration: {iteration}",
                f"seed: {cfg.seed}",
            ]
        )
        + "\n"
    )


def train(cfg: TrainConfig) -> Path:
    """Run the training loop; returns the final checkpoint path."""
    torch.set_num_threads(cfg.num_threads)
    out_dir = Path(cfg.out_dir)
    ckpt_dir = out_dir / "checkpoints"
    preview_dir = out_dir / "previews"
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir.mkdir(exist_ok=True)
    preview_dir.mkdir(exist_ok=True)

    corpus = dataset.load_corpus(cfg.corpus_dir, cfg.preprocess.desired_size)
    dataset.write_manifest(corpus, out_dir / "corpus_manifest.txt")

    if cfg.resume is not None:
        g, d, g_opt, d_opt, start_iter, seed = model.load_checkpoint(cfg.resume, cfg.hp)
        if seed != cfg.seed:
            log.warning("resume: checkpoint seed %d overrides config seed %d", seed, cfg.seed)
    else:
        g, d = model.build_models(cfg.generator, cfg.discriminator, seed=cfg.seed)
        g_opt, d_opt = model.make_optimizers(g, d, cfg.hp)
        start_iter, seed = 0, cfg.seed

    metrics_path = out_dir / "metrics.csv"
    fresh = not (cfg.resume is not None and metrics_path.exists())
    csv = open(metrics_path, "w" if fresh else "a")
    if fresh:
        csv.write(CSV_HEADER + "\n")

    last_ckpt = Path(cfg.resume) if cfg.resume is not None else None
    try:
        for it in range(start_iter + 1, cfg.total_iterations + 1):
            t0 = time.perf_counter()
            rng = _iteration_rng(seed, it)
            batch = dataset.next_minibatch(corpus, cfg.preprocess, rng, cfg.batch_size)
            inputs = torch.from_numpy(batch.inputs)
            targets = torch.from_numpy(batch.targets)
            try:
                m = model.train_step(g, d, g_opt, d_opt, inputs, targets, cfg.hp)
            except model.TrainingDiverged as exc:
                raise model.TrainingDiverged(
                    f"iteration {it}: {exc} (last checkpoint: {last_ckpt})"
                ) from exc
            wall_ms = (time.perf_counter() - t0) * 1000.0
            csv.write(
                f"{it},{m['l1']:.9e},{m['gan_g']:.9e},{m['gan_d']:.9e},{wall_ms:.3f}\n"
            )

            if it % cfg.preview_every == 0:
                pred = model.infer(g, batch.inputs[0])
                tri = make_triptych(
                    from_tensor(batch.targets[0]),
                    from_tensor(batch.inputs[0]),
                    from_tensor(pred),
                )
                save_png(tri, preview_dir / f"preview_{it:07d}.png")

            if it % cfg.checkpoint_every == 0 or it == cfg.total_iterations:
                last_ckpt = ckpt_dir / f"ckpt_{it:07d}.l2sc"
                model.save_checkpoint(last_ckpt, g, d, g_opt, d_opt, it, seed)
                _write_card(last_ckpt, cfg, it)
                _prune_checkpoints(ckpt_dir, cfg.checkpoint_every)
    finally:
        csv.close()

    assert last_ckpt is not None
    return last_ckpt
