"""Conditional image-to-image model: U-Net generator, patch discriminator,
losses, one-step training update, and binary checkpoint format.

Kept deliberately desk-scale (depth/base_channels are knobs); all math runs
on CPU tensors so single-threaded runs are bit-reproducible.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

__all__ = [
    "GeneratorSpec",
    "DiscriminatorSpec",
    "HyperParams",
    "Generator",
    "Discriminator",
    "CheckpointError",
    "TrainingDiverged",
    "build_models",
    "loss_l1",
    "loss_gan",
    "train_step",
    "save_checkpoint",
    "load_checkpoint",
    "infer",
]

MAGIC = b"L2SC"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    depth: int = 4
    base_channels: int = 32
    in_channels: int = 1
    out_channels: int = 3


@dataclass(frozen=True)
class DiscriminatorSpec:
    base_channels: int = 32
    in_channels: int = 4  # 1 input + 3 candidate


@dataclass(frozen=True)
class HyperParams:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_l1: float = 100.0
    lambda_gan: float = 1.0


def _enc_channels(spec: GeneratorSpec) -> list[int]:
    return [min(spec.base_channels * 2**k, 8 * spec.base_channels) for k in range(spec.depth)]


class Generator(nn.Module):
    """U-Net: stride-2 4x4 conv encoder, nearest-upsample + 3x3 conv decoder
    with skip concatenation, instance norm (except the first encoder block),
    tanh output."""

    def __init__(self, spec: GeneratorSpec = GeneratorSpec()):
        super().__init__()
        self.spec = spec
        chs = _enc_channels(spec)
        self.enc = nn.ModuleList()
        self.enc_norm = nn.ModuleList()
        prev = spec.in_channels
        for k, ch in enumerate(chs):
            self.enc.append(nn.Conv2d(prev, ch, 4, stride=2, padding=1))
            self.enc_norm.append(
                nn.Identity() if k == 0 else nn.InstanceNorm2d(ch, affine=True)
            )
            prev = ch
        self.dec = nn.ModuleList()
        self.dec_norm = nn.ModuleList()
        for k in range(spec.depth - 1, -1, -1):
            skip = chs[k - 1] if k >= 1 else 0
            out_ch = chs[k - 1] if k >= 1 else spec.base_channels
            self.dec.append(nn.Conv2d(prev + skip, out_ch, 3, padding=1))
            self.dec_norm.append(nn.InstanceNorm2d(out_ch, affine=True))
            prev = out_ch
        self.head = nn.Conv2d(prev, spec.out_channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        s = x.shape[-1]
        if s % (2**self.spec.depth) != 0:
            raise ValueError(f"spatial size {s} not divisible by 2^{self.spec.depth}")
        feats = []
        for conv, norm in zip(self.enc, self.enc_norm):
            x = F.leaky_relu(norm(conv(x)), 0.2)
            feats.append(x)
        for i, (conv, norm) in enumerate(zip(self.dec, self.dec_norm)):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            skip_idx = self.spec.depth - 2 - i
            if skip_idx >= 0:
                x = torch.cat([x, feats[skip_idx]], dim=1)
            x = F.relu(norm(conv(x)))
        return torch.tanh(self.head(x))


class Discriminator(nn.Module):
    """Patch discriminator: 3 stride-2 4x4 conv blocks + 1-channel head,
    emitting an (S/8, S/8) grid of raw logits."""

    def __init__(self, spec: DiscriminatorSpec = DiscriminatorSpec()):
        super().__init__()
        self.spec = spec
        b = spec.base_channels
        self.conv1 = nn.Conv2d(spec.in_channels, b, 4, stride=2, padding=1)
        self.conv2 = nn.Conv2d(b, 2 * b, 4, stride=2, padding=1)
        self.norm2 = nn.InstanceNorm2d(2 * b, affine=True)
        self.conv3 = nn.Conv2d(2 * b, 4 * b, 4, stride=2, padding=1)
        self.norm3 = nn.InstanceNorm2d(4 * b, affine=True)
        self.head = nn.Conv2d(4 * b, 1, 3, padding=1)

    def forward(self, inp: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        x = torch.cat([inp, candidate], dim=1)
        x = F.leaky_relu(self.conv1(x), 0.2)
        x = F.leaky_relu(self.norm2(self.conv2(x)), 0.2)
        x = F.leaky_relu(self.norm3(self.conv3(x)), 0.2)
        return self.head(x)


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, nn.Conv2d):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def build_models(
    gspec: GeneratorSpec, dspec: DiscriminatorSpec, seed: int | None = None
) -> tuple[Generator, Discriminator]:
    if seed is not None:
        torch.manual_seed(seed)
    g = Generator(gspec)
    d = Discriminator(dspec)
    g.apply(_init_weights)
    d.apply(_init_weights)
    return g, d


def loss_l1(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


def loss_gan(logits: torch.Tensor, is_real: bool) -> torch.Tensor:
    target = torch.ones_like(logits) if is_real else torch.zeros_like(logits)
    return F.binary_cross_entropy_with_logits(logits, target)


def train_step(
    g: Generator,
    d: Discriminator,
    g_opt: torch.optim.Optimizer,
    d_opt: torch.optim.Optimizer | None,
    inputs: torch.Tensor,
    targets: torch.Tensor,
    hp: HyperParams,
) -> dict:
    """One discriminator update (real + detached fake) then one generator
    update. With lambda_gan == 0 the discriminator is skipped entirely."""
    fake = g(inputs)

    gan_d = 0.0
    if hp.lambda_gan != 0.0:
        assert d_opt is not None
        d_opt.zero_grad(set_to_none=True)
        d_real = loss_gan(d(inputs, targets), True)
        d_fake = loss_gan(d(inputs, fake.detach()), False)
        d_loss = 0.5 * (d_real + d_fake)
        d_loss.backward()
        d_opt.step()
        gan_d = float(d_loss.detach())

    g_opt.zero_grad(set_to_none=True)
    l1 = loss_l1(fake, targets)
    if hp.lambda_gan != 0.0:
        gan_g = loss_gan(d(inputs, fake), True)
        g_loss = hp.lambda_l1 * l1 + hp.lambda_gan * gan_g
        gan_g_val = float(gan_g.detach())
    else:
        g_loss = hp.lambda_l1 * l1
        gan_g_val = 0.0
    g_loss.backward()
    g_opt.step()

    metrics = {"l1": float(l1.detach()), "gan_g": gan_g_val, "gan_d": gan_d}
    for name, value in metrics.items():
        if not np.isfinite(value):
            raise TrainingDiverged(f"non-finite loss component {name!r}: {value}")
    return metrics


def make_optimizers(
    g: Generator, d: Discriminator, hp: HyperParams
) -> tuple[torch.optim.Adam, torch.optim.Adam]:
    betas = (hp.beta1, hp.beta2)
    return (
        torch.optim.Adam(g.parameters(), lr=hp.lr, betas=betas),
        torch.optim.Adam(d.parameters(), lr=hp.lr, betas=betas),
    )


def infer(g: Generator, inp: np.ndarray) -> np.ndarray:
    """Run the generator on one (1, S, S) float32 input; returns (3, S, S)."""
    with torch.no_grad():
        out = g(torch.from_numpy(inp[None]).float())
    return out[0].numpy()


# --- checkpoint format -------------------------------------------------------
#
#   magic "L2SC" | uint32 version | uint64 manifest length | manifest (UTF-8
#   JSON: model specs + tensor table of name/shape/offset) | payload of
#   little-endian float32 tensors | uint64 iteration | uint64 seed
#
# Adam moment tensors ride along in the manifest so a resumed run continues
# the uninterrupted trajectory bit-exactly.


def _named_tensors(g, d, g_opt, d_opt) -> list[tuple[str, np.ndarray]]:
    out = []
    for prefix, module in (("g", g), ("d", d)):
        for name, p in module.state_dict().items():
            out.append((f"{prefix}.{name}", p.detach().numpy().astype(np.float32)))
    for prefix, module, opt in (("opt_g", g, g_opt), ("opt_d", d, d_opt)):
        if opt is None:
            continue
        by_id = {id(p): n for n, p in module.named_parameters()}
        for param, state in opt.state.items():
            name = by_id[id(param)]
            out.append((f"{prefix}.{name}.step", np.array([float(state["step"])], np.float32)))
            for key in ("exp_avg", "exp_avg_sq"):
                out.append(
                    (f"{prefix}.{name}.{key}", state[key].detach().numpy().astype(np.float32))
                )
    return out


def save_checkpoint(path, g, d, g_opt, d_opt, iteration: int, seed: int) -> None:
    tensors = _named_tensors(g, d, g_opt, d_opt)
    table = []
    offset = 0
    blobs = []
    for name, arr in tensors:
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        table.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    manifest = json.dumps(
        {
            "generator_spec": asdict(g.spec),
            "discriminator_spec": asdict(d.spec),
            "tensors": table,
            "payload_bytes": offset,
        }
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(manifest)))
        f.write(manifest)
        for blob in blobs:
            f.write(blob)
        f.write(struct.pack("<QQ", iteration, seed))
    tmp.replace(path)


def load_checkpoint(path, hp: HyperParams = HyperParams()):
    """Returns (generator, discriminator, g_opt, d_opt, iteration, seed)."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (mlen,) = struct.unpack_from("<Q", raw, 8)
    header_end = 16 + mlen
    if len(raw) < header_end:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[16:header_end].decode("utf-8"))
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable manifest: {exc}") from exc
    payload_bytes = manifest["payload_bytes"]
    if len(raw) != header_end + payload_bytes + 16:
        raise CheckpointError(
            f"{path}: payload length mismatch "
            f"(expected {payload_bytes} bytes plus trailer)"
        )
    payload = raw[header_end : header_end + payload_bytes]
    iteration, seed = struct.unpack_from("<QQ", raw, header_end + payload_bytes)

    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=start).reshape(shape)
        tensors[entry["name"]] = arr.copy()

    gspec = GeneratorSpec(**manifest["generator_spec"])
    dspec = DiscriminatorSpec(**manifest["discriminator_spec"])
    g, d = Generator(gspec), Discriminator(dspec)
    for prefix, module in (("g", g), ("d", d)):
        state = {}
        for name, p in module.state_dict().items():
            key = f"{prefix}.{name}"
            if key not in tensors:
                raise CheckpointError(f"{path}: missing tensor {key}")
            if tuple(tensors[key].shape) != tuple(p.shape):
                raise CheckpointError(
                    f"{path}: shape mismatch for {key}: "
                    f"{tensors[key].shape} vs {tuple(p.shape)}"
                )
            state[name] = torch.from_numpy(tensors[key])
        module.load_state_dict(state)

    g_opt, d_opt = make_optimizers(g, d, hp)
    for prefix, module, opt in (("opt_g", g, g_opt), ("opt_d", d, d_opt)):
        for name, param in module.named_parameters():
            key = f"{prefix}.{name}.exp_avg"
            if key not in tensors:
                continue
            opt.state[param] = {
                "step": torch.tensor(float(tensors[f"{prefix}.{name}.step"][0])),
                "exp_avg": torch.from_numpy(tensors[key].reshape(param.shape)),
                "exp_avg_sq": torch.from_numpy(
                    tensors[f"{prefix}.{name}.exp_avg_sq"].reshape(param.shape)
                ),
            }
    return g, d, g_opt, d_opt, iteration, seed
