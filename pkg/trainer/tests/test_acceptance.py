"""Acceptance gate for the trainer component, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s``. The shared 300-step overfit
run lives in the ``trained`` session fixture.
"""

from contextlib import contextmanager
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from conftest import _stitchforge
from stitchtrainer.dataset import load_dataset
from stitchtrainer.inference import infer, load_adapters
from stitchtrainer.lora import apply_lora, load_lora_state
from stitchtrainer.models import LATENT_CHANNELS, build_base_model
from stitchtrainer.training import TrainConfig, train


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"FAIL: {name}")
        raise
    else:
        print(f"PASS: {name}")


def _load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def test_overfit_smoke(trained):
    with criterion(
        "overfit smoke: 4 samples, 300 steps, rank 8 -> loss falls >= 50%, <= 15 min"
    ):
        losses = trained["losses"]
        assert len(losses) == 300
        early = float(np.mean(losses[:10]))
        late = float(np.mean(losses[-10:]))
        assert late <= 0.5 * early, f"early {early:.4f} -> late {late:.4f}"
        assert trained["wall"] <= 900.0


def test_zero_iteration_adapters_are_identity(corpus, tmp_path):
    with criterion("zero-iteration adapters: near-zero delta on outputs"):
        cfg = TrainConfig(iterations=0, rank=8, seed=0)
        ckpt = train(corpus / "dataset", cfg, tmp_path / "zero", log_every=0)
        payload = load_adapters(ckpt)

        base = build_base_model("tiny-latent-v1")
        x = torch.randn(
            1, LATENT_CHANNELS * 2 + 1, 8, 16,
            generator=torch.Generator().manual_seed(1),
        )
        t = torch.tensor([321])
        tokens = base.text_encoder.tokenize("probe")[None]
        with torch.no_grad():
            reference = base.unet(x, t, base.text_encoder(tokens))

        apply_lora(base.unet, cfg.rank, cfg.alpha, cfg.dropout)
        apply_lora(base.text_encoder, cfg.rank, cfg.alpha, cfg.dropout)
        load_lora_state(base.unet, payload["unet"])
        load_lora_state(base.text_encoder, payload["text_encoder"])
        base.unet.eval()
        base.text_encoder.eval()
        with torch.no_grad():
            adapted = base.unet(x, t, base.text_encoder(tokens))
        assert float((adapted - reference).abs().max()) <= 1e-7


def test_inference_shapes_and_determinism(corpus, trained, tmp_path):
    with criterion(
        "inference: output shapes match packages; fixed seed reproduces bytes"
    ):
        ds = load_dataset(corpus / "inference")
        out_a = tmp_path / "gen_a"
        written = infer(
            corpus / "inference", trained["ckpt"], out_a,
            inference_steps=8, seed=5,
        )
        assert sorted(written) == sorted(s.sample_id for s in ds.samples)
        for sample in ds.samples:
            generated = _load_png(out_a / sample.sample_id / "generated.png")
            half = sample.mask.shape[1] // 2
            assert generated.shape == (sample.mask.shape[0], half, 3)

        out_b = tmp_path / "gen_b"
        infer(corpus / "inference", trained["ckpt"], out_b,
              inference_steps=8, seed=5)
        for sample in ds.samples:
            a = (out_a / sample.sample_id / "generated.png").read_bytes()
            b = (out_b / sample.sample_id / "generated.png").read_bytes()
            assert a == b


def test_unmasked_pixels_preserved(corpus, trained, tmp_path):
    with criterion(
        "preservation: right-mask zero pixels match the input within 2/255"
    ):
        out = tmp_path / "gen"
        infer(corpus / "inference", trained["ckpt"], out,
              inference_steps=8, seed=5)
        ds = load_dataset(corpus / "inference")
        checked = 0
        for sample in ds.samples:
            half = sample.mask.shape[1] // 2
            right_mask = sample.mask[:, half:]
            right_in = sample.image[:, half:]
            generated = _load_png(out / sample.sample_id / "generated.png")
            zero = right_mask == 0.0
            if not zero.any():
                continue
            diff = np.abs(generated - right_in)[zero]
            assert diff.max() <= 2.0 / 255.0
            checked += 1
        assert checked > 0, "no package had exact-zero mask pixels"


def test_composited_target_region_exact(corpus, trained, tmp_path):
    with criterion(
        "composite: target-mask pixels equal the target exactly, any generator"
    ):
        gen_dir = corpus / "generated_for_composite"
        infer(corpus / "inference", trained["ckpt"], gen_dir,
              inference_steps=8, seed=5)
        _stitchforge(
            "--config", "inf.json", "composite",
            "--generated-dir", str(gen_dir),
            cwd=corpus,
        )
        ds = load_dataset(corpus / "inference")
        for sample in ds.samples:
            stitched = _load_png(corpus / "out" / f"{sample.sample_id}.png")
            files = {
                name: corpus / "inference" / rel
                for name, rel in _sample_files(corpus / "inference", sample.sample_id).items()
            }
            target = _load_png(files["target"])
            with Image.open(files["target_mask"]) as im:
                m_wt = (np.asarray(im.convert("L")) >= 128)
            assert m_wt.any()
            assert np.array_equal(stitched[m_wt], target[m_wt])


def _sample_files(dataset_root: Path, sample_id: str) -> dict:
    import json

    manifest = json.loads((dataset_root / "manifest.json").read_text())
    record = next(r for r in manifest["samples"] if r["id"] == sample_id)
    return record["files"]
