"""Adapter fine-tuning on the noise-prediction objective.

Conditioning tensors come straight from the dataset (mask and masked image
as stored); the loss is the mean squared error between the injected noise
and the model's prediction, nothing else.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .dataset import Dataset, Sample, load_dataset
from .errors import ManifestMismatch
from .lora import apply_lora, lora_parameters, lora_state_dict
from .models import BaseModel, build_base_model
from .schedule import DiffusionSchedule


@dataclass
class TrainConfig:
    base_model: str = "tiny-latent-v1"
    rank: int = 8
    alpha: float = 16.0
    dropout: float = 0.1
    lr_unet: float = 2e-4
    lr_text: float = 4e-5
    batch_size: int = 4
    iterations: int = 10_000
    inference_steps: int = 50
    prompt: str | None = None  # None: use the dataset manifest's prompt
    schedule_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    schedule_kind: str = "linear"  # noise-schedule type is a config default,
    guidance_scale: float = 1.0    # not a claim; 1.0 disables guidance
    seed: int = 0
    mixed_precision: bool = False
    grad_accumulation: int = 1
    grad_clip: float = 1.0
    weight_decay: float = 0.0
    # projections that receive adapters, in both self- and cross-attention
    lora_targets: tuple = ("to_q", "to_k", "to_v", "to_out")

    def __post_init__(self):
        self.lora_targets = tuple(self.lora_targets)
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.lr_unet <= 0 or self.lr_text <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch size must be >= 1, iterations >= 0")
        if self.grad_accumulation < 1:
            raise ValueError("grad_accumulation must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def downsample_mask(mask: torch.Tensor, factor: int) -> torch.Tensor:
    """Area-average a (B, 1, H, W) mask onto the latent grid."""
    return torch.nn.functional.avg_pool2d(mask, factor)


@dataclass
class EncodedSample:
    sample_id: str
    x0: torch.Tensor
    mask_latent: torch.Tensor
    masked_latent: torch.Tensor
    tokens: torch.Tensor


def encode_sample(sample: Sample, base: BaseModel, prompt: str | None = None) -> EncodedSample:
    image = torch.from_numpy(np.ascontiguousarray(sample.image)).float()
    masked = torch.from_numpy(np.ascontiguousarray(sample.masked_image)).float()
    mask = torch.from_numpy(np.ascontiguousarray(sample.mask)).float()
    image = image.permute(2, 0, 1)[None]
    masked = masked.permute(2, 0, 1)[None]
    mask = mask[None, None]
    x0 = base.codec.encode(image)
    return EncodedSample(
        sample_id=sample.sample_id,
        x0=x0,
        mask_latent=downsample_mask(mask, base.codec.factor),
        masked_latent=base.codec.encode(masked),
        tokens=base.text_encoder.tokenize(prompt or sample.prompt)[None],
    )


def unet_input(x_t, enc: EncodedSample) -> torch.Tensor:
    return torch.cat([x_t, enc.mask_latent.expand(x_t.shape[0], -1, -1, -1),
                      enc.masked_latent.expand(x_t.shape[0], -1, -1, -1)], dim=1)


def train(
    dataset_dir,
    cfg: TrainConfig,
    out_dir,
    log_every: int = 50,
) -> Path:
    """Fine-tune adapters on a dataset; returns the checkpoint path.

    Writes ``adapters.pt``, ``loss.csv`` and ``run.json`` under ``out_dir``.
    The dataset directory is never written to.
    """
    ds: Dataset = load_dataset(dataset_dir, verify=True)
    if len(ds) == 0:
        raise ManifestMismatch("cannot train on an empty dataset")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    base = build_base_model(cfg.base_model)
    apply_lora(base.unet, cfg.rank, cfg.alpha, cfg.dropout, cfg.lora_targets)
    apply_lora(base.text_encoder, cfg.rank, cfg.alpha, cfg.dropout, cfg.lora_targets)
    schedule = DiffusionSchedule(
        steps=cfg.schedule_steps,
        beta_start=cfg.beta_start,
        beta_end=cfg.beta_end,
        kind=cfg.schedule_kind,
    )

    torch.manual_seed(cfg.seed)
    encoded = [encode_sample(s, base, cfg.prompt) for s in ds.samples]

    unet_params = list(lora_parameters(base.unet))
    text_params = list(lora_parameters(base.text_encoder))
    optimizer = torch.optim.AdamW(
        [
            {"params": unet_params, "lr": cfg.lr_unet},
            {"params": text_params, "lr": cfg.lr_text},
        ],
        weight_decay=cfg.weight_decay,
    )
    mse = nn.MSELoss()
    losses = []
    n = len(encoded)
    base.unet.train()
    base.text_encoder.train()
    for step in range(1, cfg.iterations + 1):
        picks = [encoded[((step - 1) * cfg.batch_size + i) % n] for i in range(cfg.batch_size)]
        x0 = torch.cat([e.x0 for e in picks])
        mask_lat = torch.cat([e.mask_latent for e in picks])
        masked_lat = torch.cat([e.masked_latent for e in picks])
        tokens = torch.cat([e.tokens for e in picks])
        t = torch.randint(1, schedule.steps + 1, (x0.shape[0],))
        noise = torch.randn_like(x0)
        x_t = schedule.add_noise(x0, noise, t)
        with torch.autocast("cpu", dtype=torch.bfloat16, enabled=cfg.mixed_precision):
            ctx = base.text_encoder(tokens)
            pred = base.unet(torch.cat([x_t, mask_lat, masked_lat], dim=1), t, ctx)
            loss = mse(pred.float(), noise.float())
        (loss / cfg.grad_accumulation).backward()
        if step % cfg.grad_accumulation == 0:
            if cfg.grad_clip:
                nn.utils.clip_grad_norm_(unet_params + text_params, cfg.grad_clip)
            optimizer.step()
            optimizer.zero_grad()
        losses.append(float(loss.detach()))
        if log_every and step % log_every == 0:
            recent = float(np.mean(losses[-log_every:]))
            print(f"step {step}/{cfg.iterations} loss {recent:.4f}", flush=True)

    ckpt_path = out_dir / "adapters.pt"
    torch.save(
        {
            "config": cfg.to_dict(),
            "unet": lora_state_dict(base.unet),
            "text_encoder": lora_state_dict(base.text_encoder),
        },
        ckpt_path,
    )
    loss_path = out_dir / "loss.csv"
    loss_path.write_text(
        "".join(f"{i + 1},{value}\n" for i, value in enumerate(losses))
    )
    (out_dir / "run.json").write_text(
        json.dumps(
            {
                "config": cfg.to_dict(),
                "seed": cfg.seed,
                "loss_curve": loss_path.name,
                "dataset": str(dataset_dir),
                "samples": len(ds),
            },
            indent=2,
            sort_keys=True,
        )
    )
    return ckpt_path
