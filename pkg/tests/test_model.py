import math

import numpy as np
import pytest
import torch

from dreamcam import model
from dreamcam.model import (
    CheckpointError,
    DiscriminatorSpec,
    GeneratorSpec,
    HyperParams,
    TrainingDiverged,
    build_models,
    load_checkpoint,
    loss_gan,
    loss_l1,
    make_optimizers,
    save_checkpoint,
    train_step,
)

TINY_G = GeneratorSpec(depth=2, base_channels=4)
TINY_D = DiscriminatorSpec(base_channels=4)


def test_generator_shape_and_range():
    g, _ = build_models(GeneratorSpec(depth=4, base_channels=8), TINY_D, seed=0)
    x = torch.randn(2, 1, 64, 64)
    with torch.no_grad():
        y = g(x)
    assert y.shape == (2, 3, 64, 64)
    assert float(y.abs().max()) <= 1.0


def test_generator_zero_weights_outputs_zero():
    g = model.Generator(TINY_G)
    with torch.no_grad():
        for p in g.parameters():
            p.zero_()
    y = g(torch.randn(1, 1, 16, 16))
    assert torch.all(y == 0)


def test_generator_rejects_bad_spatial():
    g, _ = build_models(GeneratorSpec(depth=4), TINY_D, seed=0)
    with pytest.raises(ValueError, match="divisible"):
        g(torch.randn(1, 1, 60, 60))


def test_discriminator_shape_and_batch_independence():
    _, d = build_models(TINY_G, DiscriminatorSpec(base_channels=8), seed=0)
    inp = torch.randn(3, 1, 64, 64)
    cand = torch.randn(3, 3, 64, 64)
    out = d(inp, cand)
    assert out.shape == (3, 1, 8, 8)
    perm = torch.tensor([2, 0, 1])
    out_perm = d(inp[perm], cand[perm])
    assert torch.allclose(out[perm], out_perm, atol=1e-6)


def test_discriminator_zero_weights():
    d = model.Discriminator(TINY_D)
    with torch.no_grad():
        for p in d.parameters():
            p.zero_()
    out = d(torch.randn(1, 1, 32, 32), torch.randn(1, 3, 32, 32))
    assert torch.all(out == 0)


def test_losses():
    a = torch.randn(2, 3, 4, 4)
    assert float(loss_l1(a, a)) == 0.0
    assert abs(float(loss_l1(a + 0.5, a)) - 0.5) < 1e-6
    logits = torch.zeros(2, 1, 4, 4)
    assert abs(float(loss_gan(logits, True)) - math.log(2)) < 1e-6
    assert abs(float(loss_gan(logits, False)) - math.log(2)) < 1e-6
    with pytest.raises(ValueError):
        loss_l1(a, torch.randn(2, 3, 4, 5))


def test_l1_decreases_on_fixed_batch():
    torch.manual_seed(0)
    g, d = build_models(GeneratorSpec(depth=2, base_channels=8), TINY_D, seed=0)
    hp = HyperParams(lambda_gan=0.0)
    g_opt, d_opt = make_optimizers(g, d, hp)
    inputs = torch.rand(2, 1, 16, 16) * 2 - 1
    targets = (torch.rand(2, 3, 16, 16) * 2 - 1).clamp(-0.9, 0.9)
    first = train_step(g, d, g_opt, d_opt, inputs, targets, hp)["l1"]
    for _ in range(49):
        last = train_step(g, d, g_opt, d_opt, inputs, targets, hp)["l1"]
    assert last < first


def test_train_step_deterministic():
    def run():
        g, d = build_models(TINY_G, TINY_D, seed=11)
        hp = HyperParams(lambda_gan=1.0)
        g_opt, d_opt = make_optimizers(g, d, hp)
        gen = torch.Generator().manual_seed(3)
        inputs = torch.rand(2, 1, 16, 16, generator=gen)
        targets = torch.rand(2, 3, 16, 16, generator=gen)
        metrics = None
        for _ in range(10):
            metrics = train_step(g, d, g_opt, d_opt, inputs, targets, hp)
        return metrics

    assert run() == run()


def test_train_step_gan_losses_active():
    g, d = build_models(TINY_G, TINY_D, seed=2)
    hp = HyperParams(lambda_gan=1.0)
    g_opt, d_opt = make_optimizers(g, d, hp)
    m = train_step(g, d, g_opt, d_opt, torch.rand(1, 1, 16, 16), torch.rand(1, 3, 16, 16), hp)
    assert m["gan_d"] > 0 and m["gan_g"] > 0

    hp0 = HyperParams(lambda_gan=0.0)
    m0 = train_step(g, d, g_opt, None, torch.rand(1, 1, 16, 16), torch.rand(1, 3, 16, 16), hp0)
    assert m0["gan_d"] == 0.0 and m0["gan_g"] == 0.0


def test_train_step_detects_divergence():
    g, d = build_models(TINY_G, TINY_D, seed=2)
    hp = HyperParams(lambda_gan=0.0)
    g_opt, d_opt = make_optimizers(g, d, hp)
    bad = torch.full((1, 3, 16, 16), float("nan"))
    with pytest.raises(TrainingDiverged):
        train_step(g, d, g_opt, d_opt, torch.rand(1, 1, 16, 16), bad, hp)


# --- checkpoint format ---------------------------------------------------------


def _ckpt(tmp_path, steps=3):
    g, d = build_models(TINY_G, TINY_D, seed=5)
    hp = HyperParams()
    g_opt, d_opt = make_optimizers(g, d, hp)
    for _ in range(steps):
        train_step(g, d, g_opt, d_opt, torch.rand(1, 1, 16, 16), torch.rand(1, 3, 16, 16), hp)
    path = tmp_path / "model.l2sc"
    save_checkpoint(path, g, d, g_opt, d_opt, 123, 42)
    return path, g, d


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    path, g, d = _ckpt(tmp_path)
    g2, d2, g_opt2, d_opt2, iteration, seed = load_checkpoint(path)
    assert iteration == 123 and seed == 42
    for (n1, a), (n2, b) in zip(g.state_dict().items(), g2.state_dict().items()):
        assert n1 == n2 and torch.equal(a, b)
    for (n1, a), (n2, b) in zip(d.state_dict().items(), d2.state_dict().items()):
        assert n1 == n2 and torch.equal(a, b)
    # optimizer moments restored
    assert len(g_opt2.state) == len([p for p in g2.parameters()])


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "bad.l2sc"
    p.write_bytes(b"NOPE" + b"\0" * 64)
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        load_checkpoint(p)


def test_checkpoint_truncated(tmp_path):
    path, *_ = _ckpt(tmp_path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError, match="length|truncated"):
        load_checkpoint(path)


def test_checkpoint_bad_version(tmp_path):
    path, *_ = _ckpt(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_resumed_optimizer_continues_identically(tmp_path):
    gen = torch.Generator().manual_seed(9)
    batches = [(torch.rand(1, 1, 16, 16, generator=gen),
                torch.rand(1, 3, 16, 16, generator=gen)) for _ in range(6)]
    hp = HyperParams(lambda_gan=0.0)

    g, d = build_models(TINY_G, TINY_D, seed=1)
    g_opt, d_opt = make_optimizers(g, d, hp)
    trace = []
    for inp, tgt in batches[:3]:
        train_step(g, d, g_opt, d_opt, inp, tgt, hp)
    save_checkpoint(tmp_path / "mid.l2sc", g, d, g_opt, d_opt, 3, 1)
    for inp, tgt in batches[3:]:
        trace.append(train_step(g, d, g_opt, d_opt, inp, tgt, hp)["l1"])

    g2, d2, g_opt2, d_opt2, _, _ = load_checkpoint(tmp_path / "mid.l2sc", hp)
    trace2 = [train_step(g2, d2, g_opt2, d_opt2, inp, tgt, hp)["l1"] for inp, tgt in batches[3:]]
    assert trace == trace2
