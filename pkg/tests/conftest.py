import numpy as np
import pytest
import torch

from dreamcam import dataset
from dreamcam.imaging import Image8

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def synth_corpus_dir(tmp_path_factory):
    """8 procedural 256x256 RGB images, the CI stand-in for a real dataset."""
    d = tmp_path_factory.mktemp("corpus")
    dataset.generate_synthetic_corpus(d, n=8, size=256, seed=0)
    return d


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus_small")
    dataset.generate_synthetic_corpus(d, n=4, size=96, seed=1)
    return d


def random_image(rng: np.random.Generator, max_side: int = 16, channels=None) -> Image8:
    w = int(rng.integers(1, max_side + 1))
    h = int(rng.integers(1, max_side + 1))
    c = channels if channels is not None else int(rng.choice([1, 3]))
    return Image8(rng.integers(0, 256, size=(h, w, c), dtype=np.uint8))
