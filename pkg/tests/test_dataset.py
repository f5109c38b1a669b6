import numpy as np
import pytest

from conftest import random_image
from dreamcam import dataset
from dreamcam.dataset import (
    CorpusError,
    from_tensor,
    load_corpus,
    next_minibatch,
    to_tensor,
    write_manifest,
)
from dreamcam.imaging import Image8, save_png
from dreamcam.preprocess import PreprocessConfig


def test_load_corpus_counts(synth_corpus_dir):
    corpus = load_corpus(synth_corpus_dir, 128)
    assert len(corpus) == 8
    assert corpus.entries == sorted(corpus.entries)


def test_load_corpus_rejects_small_images(tmp_path):
    save_png(Image8.constant(64, 64, 3, 10), tmp_path / "small.png")
    save_png(Image8.constant(256, 256, 3, 10), tmp_path / "big.png")
    corpus = load_corpus(tmp_path, 128)
    assert len(corpus) == 1
    assert corpus.rejected and "short side" in corpus.rejected[0][1]


def test_load_corpus_empty_dir(tmp_path):
    with pytest.raises(CorpusError):
        load_corpus(tmp_path, 128)


def test_load_corpus_missing_dir(tmp_path):
    with pytest.raises(CorpusError, match="does not exist"):
        load_corpus(tmp_path / "nope", 128)


def test_tensor_examples_and_roundtrip():
    img = Image8(np.array([[[0], [255], [128]]], dtype=np.uint8))
    t = to_tensor(img)
    assert t.shape == (1, 1, 3)
    assert t[0, 0, 0] == -1.0
    assert t[0, 0, 1] == 1.0
    assert abs(t[0, 0, 2] - (128 / 127.5 - 1)) < 1e-7

    rng = np.random.default_rng(0)
    for _ in range(20):
        img = random_image(rng)
        assert from_tensor(to_tensor(img)).same_pixels(img)

    # clamps out-of-range values
    assert from_tensor(np.full((1, 2, 2), 1.5, np.float32)).data.max() == 255
    with pytest.raises(ValueError):
        from_tensor(np.zeros((2, 4, 4), np.float32))


def test_minibatch_shapes_and_range(synth_corpus_dir):
    corpus = load_corpus(synth_corpus_dir, 64)
    cfg = PreprocessConfig(desired_size=64)
    batch = next_minibatch(corpus, cfg, np.random.default_rng(0), batch=4)
    assert batch.inputs.shape == (4, 1, 64, 64)
    assert batch.targets.shape == (4, 3, 64, 64)
    assert batch.inputs.dtype == np.float32
    assert batch.inputs.min() >= -1.0 and batch.inputs.max() <= 1.0
    assert len(batch.params_used) == 4


def test_minibatch_determinism_and_variation(synth_corpus_dir):
    corpus = load_corpus(synth_corpus_dir, 64)
    cfg = PreprocessConfig(desired_size=64)
    a = next_minibatch(corpus, cfg, np.random.default_rng(5))
    b = next_minibatch(corpus, cfg, np.random.default_rng(5))
    c = next_minibatch(corpus, cfg, np.random.default_rng(6))
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets, b.targets)
    assert a.params_used == b.params_used
    assert a.params_used != c.params_used


def test_single_image_collapsed_config_degenerate(tmp_path):
    save_png(Image8.constant(64, 64, 3, 33), tmp_path / "one.png")
    corpus = load_corpus(tmp_path, 32)
    cfg = PreprocessConfig(
        desired_size=32, scale_min=1.0, scale_max=1.0,
        allow_flip_h=False, allow_flip_v=False,
        brightness_range=0.0, contrast_range=0.0,
    )
    batch = next_minibatch(corpus, cfg, np.random.default_rng(1))
    for i in range(1, 4):
        assert np.array_equal(batch.inputs[0], batch.inputs[i])
        assert np.array_equal(batch.targets[0], batch.targets[i])


def test_manifest(tmp_path, synth_corpus_dir):
    corpus = load_corpus(synth_corpus_dir, 128)
    write_manifest(corpus, tmp_path / "manifest.txt")
    lines = (tmp_path / "manifest.txt").read_text().strip().splitlines()
    assert len(lines) == 8
    assert all(len(line.split()) == 3 for line in lines)
