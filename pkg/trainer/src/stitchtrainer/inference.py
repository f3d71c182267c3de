"""Denoise inference packages and write generated right halves.

Each package denoises from per-sample seeded noise under its own mask and
masked-image conditioning; the decoded right half is blended with the input
right half through the package mask, so pixels the mask never selected
reproduce the input exactly. The left half is discarded.
"""

import hashlib
import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .dataset import load_dataset
from .errors import ModelLoadError, ShapeMismatch
from .lora import apply_lora, load_lora_state
from .models import build_base_model
from .schedule import DiffusionSchedule
from .training import TrainConfig, encode_sample


def derive_seed(seed: int, sample_id: str) -> int:
    digest = hashlib.sha256(f"{seed}|{sample_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def load_adapters(path) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except (OSError, RuntimeError, ValueError) as exc:
        raise ModelLoadError(f"cannot load adapters from {path}: {exc}") from exc
    for key in ("config", "unet", "text_encoder"):
        if key not in payload:
            raise ModelLoadError(f"adapter file missing {key!r} entry")
    return payload


def infer(
    dataset_dir,
    adapters_path,
    out_dir,
    inference_steps: int | None = None,
    seed: int = 0,
    guidance_scale: float | None = None,
) -> list:
    """Generate right halves for every package; returns the written ids."""
    payload = load_adapters(adapters_path)
    cfg = TrainConfig.from_dict(payload["config"])
    steps = inference_steps or cfg.inference_steps
    guidance = cfg.guidance_scale if guidance_scale is None else guidance_scale

    base = build_base_model(cfg.base_model)
    apply_lora(base.unet, cfg.rank, cfg.alpha, cfg.dropout, cfg.lora_targets)
    apply_lora(base.text_encoder, cfg.rank, cfg.alpha, cfg.dropout, cfg.lora_targets)
    load_lora_state(base.unet, payload["unet"])
    load_lora_state(base.text_encoder, payload["text_encoder"])
    base.unet.eval()
    base.text_encoder.eval()

    schedule = DiffusionSchedule(
        steps=cfg.schedule_steps,
        beta_start=cfg.beta_start,
        beta_end=cfg.beta_end,
        kind=cfg.schedule_kind,
    )
    ds = load_dataset(dataset_dir, verify=True)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for sample in ds.samples:
        h, w2 = sample.mask.shape
        if h % base.codec.factor or w2 % base.codec.factor:
            raise ShapeMismatch(
                f"{sample.sample_id}: package size {h}x{w2} is not divisible "
                f"by the latent factor {base.codec.factor}"
            )
        try:
            enc = encode_sample(sample, base, cfg.prompt)
        except ValueError as exc:
            raise ShapeMismatch(str(exc)) from exc

        generator = torch.Generator().manual_seed(derive_seed(seed, sample.sample_id))
        x = torch.randn(enc.x0.shape, generator=generator)
        timesteps = schedule.ddim_timesteps(steps)
        with torch.no_grad():
            ctx = base.text_encoder(enc.tokens)
            uncond_ctx = None
            if guidance != 1.0:
                uncond_ctx = base.text_encoder(
                    base.text_encoder.tokenize("")[None]
                )
            for i, t in enumerate(timesteps.tolist()):
                t_prev = timesteps[i + 1].item() if i + 1 < len(timesteps) else 0
                t_tensor = torch.tensor([t])
                stack = torch.cat([x, enc.mask_latent, enc.masked_latent], dim=1)
                eps = base.unet(stack, t_tensor, ctx)
                if uncond_ctx is not None:
                    eps_uncond = base.unet(stack, t_tensor, uncond_ctx)
                    eps = eps_uncond + guidance * (eps - eps_uncond)
                x = schedule.ddim_step(x, eps, t, t_prev)

        decoded = base.codec.decode(x)[0].permute(1, 2, 0).numpy().astype(np.float64)
        half = w2 // 2
        right_gen = decoded[:, half:]
        right_in = sample.image[:, half:]
        right_mask = sample.mask[:, half:][:, :, None]
        blended = right_gen * right_mask + right_in * (1.0 - right_mask)
        if blended.shape != right_in.shape:
            raise ShapeMismatch(
                f"{sample.sample_id}: generated half {blended.shape} "
                f"does not match package {right_in.shape}"
            )

        sample_dir = out_dir / sample.sample_id
        sample_dir.mkdir(parents=True, exist_ok=True)
        data = np.round(np.clip(blended, 0.0, 1.0) * 255.0).astype(np.uint8)
        Image.fromarray(data, mode="RGB").save(
            sample_dir / "generated.png", format="PNG"
        )
        written.append(sample.sample_id)

    (out_dir / "run.json").write_text(
        json.dumps(
            {
                "config": cfg.to_dict(),
                "seed": seed,
                "inference_steps": steps,
                "guidance_scale": guidance,
                "adapters": str(adapters_path),
                "samples": written,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return written
