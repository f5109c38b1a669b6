import numpy as np
import pytest

from dreamcam import cli, dataset, model
from dreamcam.imaging import Image8, load_png, save_png


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cliwork")
    rc = cli.main(["synth-corpus", "--out", str(d / "corpus"), "--n", "4", "--size", "64"])
    assert rc == 0
    cfg = d / "cfg.yaml"
    cfg.write_text(
        "preprocess:\n  desired_size: 32\n"
        "model:\n  depth: 2\n  base_channels: 4\n  disc_base_channels: 4\n"
        "train:\n  total_iterations: 6\n  batch_size: 2\n  lambda_gan: 0.0\n"
        "  checkpoint_every: 3\n  preview_every: 3\n"
    )
    rc = cli.main([
        "train", "--config", str(cfg), "--corpus", str(d / "corpus"),
        "--out", str(d / "train"),
    ])
    assert rc == 0
    ckpts = sorted((d / "train" / "checkpoints").glob("*.l2sc"))
    assert ckpts
    return d, cfg, ckpts[-1]


def test_train_resume(workdir):
    d, cfg, ckpt = workdir
    mid = d / "train" / "checkpoints" / "ckpt_0000003.l2sc"
    rc = cli.main([
        "train", "--config", str(cfg), "--corpus", str(d / "corpus"),
        "--out", str(d / "train_resume"), "--resume", str(mid), "--iters", "6",
    ])
    assert rc == 0
    final = d / "train_resume" / "checkpoints" / "ckpt_0000006.l2sc"
    *_, iteration, _seed = model.load_checkpoint(final)
    assert iteration == 6


def test_train_missing_corpus(tmp_path):
    rc = cli.main(["train", "--corpus", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_perform_headless_seq(workdir, tmp_path):
    d, cfg, ckpt = workdir
    frames = tmp_path / "frames"
    rng = np.random.default_rng(1)
    for i in range(10):
        save_png(Image8(rng.integers(0, 256, (40, 40, 3), dtype=np.uint8)),
                 frames / f"{i:02d}.png")
    rec = tmp_path / "rec"
    rc = cli.main([
        "perform", "--config", str(cfg), "--checkpoint", str(ckpt),
        "--source", f"seq:{frames}", "--headless", "--control-port", "0",
        "--record-dir", str(rec),
    ])
    assert rc == 0
    assert len(list((rec / "run_000").glob("frame_*.png"))) == 10
    assert (rec / "run_000" / "params.csv").exists()


def test_perform_bad_checkpoint(workdir, tmp_path):
    d, cfg, _ = workdir
    bad = tmp_path / "bad.l2sc"
    bad.write_bytes(b"JUNKJUNKJUNK" * 10)
    frames = tmp_path / "f"
    save_png(Image8.constant(40, 40, 3, 1), frames / "0.png")
    rc = cli.main([
        "perform", "--config", str(cfg), "--checkpoint", str(bad),
        "--source", f"seq:{frames}", "--headless", "--control-port", "0",
    ])
    assert rc == 2


def test_process_deterministic_and_params(workdir, tmp_path):
    d, cfg, ckpt = workdir
    frames = tmp_path / "in"
    rng = np.random.default_rng(2)
    for i in range(3):
        save_png(Image8(rng.integers(0, 256, (48, 48, 3), dtype=np.uint8)),
                 frames / f"{i}.png")
    for out in ("out_a", "out_b"):
        rc = cli.main([
            "process", "--config", str(cfg), "--checkpoint", str(ckpt),
            "--in", str(frames), "--out", str(tmp_path / out),
        ])
        assert rc == 0
    for i in range(3):
        a = load_png(tmp_path / "out_a" / f"frame_{i:07d}.png")
        b = load_png(tmp_path / "out_b" / f"frame_{i:07d}.png")
        assert a.same_pixels(b)

    rc = cli.main([
        "process", "--config", str(cfg), "--checkpoint", str(ckpt),
        "--in", str(frames), "--out", str(tmp_path / "out_lv"),
        "--params", "norm_low=0,norm_high=64",
    ])
    assert rc == 0
    # different levels must change the output
    base = load_png(tmp_path / "out_a" / "frame_0000000.png")
    lv = load_png(tmp_path / "out_lv" / "frame_0000000.png")
    assert not base.same_pixels(lv)


def test_process_empty_dir(workdir, tmp_path):
    d, cfg, ckpt = workdir
    empty = tmp_path / "empty"
    empty.mkdir()
    rc = cli.main([
        "process", "--config", str(cfg), "--checkpoint", str(ckpt),
        "--in", str(empty), "--out", str(tmp_path / "o"),
    ])
    assert rc == 2


def test_preview_pairs(workdir, tmp_path):
    d, cfg, _ = workdir
    out = tmp_path / "tri"
    rc = cli.main([
        "preview-pairs", "--config", str(cfg), "--corpus", str(d / "corpus"),
        "--n", "4", "--out", str(out),
    ])
    assert rc == 0
    tris = sorted(out.glob("triptych_*.png"))
    assert len(tris) == 4
    tri = load_png(tris[0])
    assert tri.width == 3 * 32

    out2 = tmp_path / "tri2"
    rc = cli.main([
        "preview-pairs", "--config", str(cfg), "--corpus", str(d / "corpus"),
        "--n", "4", "--out", str(out2),
    ])
    assert rc == 0
    for a, b in zip(sorted(out.iterdir()), sorted(out2.iterdir())):
        assert load_png(a).same_pixels(load_png(b))  # same seed, reproducible


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as e:
        cli.main(["train"])  # missing required flags
    assert e.value.code == 2
