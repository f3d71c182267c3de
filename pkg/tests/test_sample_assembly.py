import json

import numpy as np
import pytest

from conftest import random_mask
from stitchforge.augmentation import make_pseudo_pair
from stitchforge.errors import ChecksumMismatch, DimensionMismatch
from stitchforge.geometry import AlignedPair, CanvasSpec
from stitchforge.imageio import from_uint8, to_uint8
from stitchforge.mask_distribution import MaskPair
from stitchforge.rectangling_priors import gradient_mask, telea_inpaint
from stitchforge.sample_assembly import (
    KIND_INFERENCE,
    SamplePackage,
    assemble_inference_sample,
    assemble_training_sample,
    final_composite,
    inverse_letterbox,
    letterbox,
    letterbox_transform,
    read_dataset,
    verify_dataset,
    write_dataset,
)


def _pseudo_pair(rng, h=24, w=24):
    img = rng.random((h, w, 3))
    mp = MaskPair(random_mask(rng, h, w), random_mask(rng, h, w), "mp0")
    return make_pseudo_pair(img, mp), img


def _training_package(rng, half=32, canvas=24, sample_id="s0"):
    pp, img = _pseudo_pair(rng, canvas, canvas)
    prior = rng.random((canvas, canvas, 3))
    gmask = np.clip(rng.random((canvas, canvas)), 0, 1)
    return assemble_training_sample(
        pp, prior, gmask, img, half_w=half, half_h=half, sample_id=sample_id
    )


class TestLetterbox:
    def test_same_aspect_no_padding(self, rng):
        t = letterbox_transform(24, 24, 32, 32)
        assert (t.pad_x, t.pad_y) == (0, 0)
        assert (t.content_w, t.content_h) == (32, 32)

    def test_wide_content_pads_rows(self):
        t = letterbox_transform(100, 50, 64, 64)
        assert t.content_w == 64 and t.content_h == 32
        assert t.pad_x == 0 and t.pad_y == 16

    def test_roundtrip_close_on_smooth_content(self):
        yy, xx = np.mgrid[0:20, 0:40]
        img = np.dstack([yy / 19.0, xx / 39.0, (yy + xx) / 58.0])
        t = letterbox_transform(40, 20, 64, 64)
        boxed = letterbox(img, t, 64, 64)
        back = inverse_letterbox(boxed, t)
        assert back.shape == img.shape
        assert np.max(np.abs(back - img)) < 0.05

    def test_identity_when_sizes_match(self, rng):
        img = rng.random((32, 32, 3))
        t = letterbox_transform(32, 32, 32, 32)
        assert np.array_equal(letterbox(img, t, 32, 32), img)


class TestAssembleTraining:
    def test_zero_gmask_masked_equals_image(self, rng):
        pp, img = _pseudo_pair(rng)
        prior = rng.random((24, 24, 3))
        pkg = assemble_training_sample(
            pp, prior, np.zeros((24, 24)), img, half_w=24, half_h=24
        )
        assert np.array_equal(pkg.masked_image, pkg.image_i)

    def test_ones_gmask_zeroes_right_half(self, rng):
        pp, img = _pseudo_pair(rng)
        prior = rng.random((24, 24, 3))
        pkg = assemble_training_sample(
            pp, prior, np.ones((24, 24)), img, half_w=24, half_h=24
        )
        assert np.all(pkg.masked_image[:, 24:] == 0.0)
        assert np.array_equal(pkg.masked_image[:, :24], pkg.image_i[:, :24])

    def test_default_resolution(self, rng):
        pp, img = _pseudo_pair(rng)
        prior = rng.random((24, 24, 3))
        pkg = assemble_training_sample(pp, prior, np.zeros((24, 24)), img)
        assert pkg.image_i.shape == (512, 1024, 3)
        assert pkg.mask_m.shape == (512, 1024)

    def test_left_mask_half_zero_and_product_exact(self, rng):
        pkg = _training_package(rng)
        half = pkg.half_width
        assert np.all(pkg.mask_m[:, :half] == 0.0)
        product = pkg.image_i * (1.0 - pkg.mask_m)[:, :, None]
        assert np.max(np.abs(product - pkg.masked_image)) <= 1e-6

    def test_halves_carry_prior_and_source(self, rng):
        pp, img = _pseudo_pair(rng)
        prior = rng.random((24, 24, 3))
        pkg = assemble_training_sample(
            pp, prior, np.zeros((24, 24)), img, half_w=24, half_h=24
        )
        assert np.array_equal(pkg.left_half(), prior)
        assert np.array_equal(pkg.right_half(), img)

    def test_dimension_mismatch(self, rng):
        pp, img = _pseudo_pair(rng)
        with pytest.raises(DimensionMismatch):
            assemble_training_sample(pp, rng.random((10, 10, 3)), np.zeros((24, 24)), img)


class TestAssembleInference:
    def _aligned_pair(self, rng, full_target=True):
        h = w = 24
        m_wr = np.zeros((h, w), np.uint8)
        m_wr[:, : w // 2] = 1
        m_wt = np.ones((h, w), np.uint8) if full_target else random_mask(rng, h, w)
        return AlignedPair(
            i_wr=rng.random((h, w, 3)) * m_wr[:, :, None],
            i_wt=rng.random((h, w, 3)) * m_wt[:, :, None],
            m_wr=m_wr,
            m_wt=m_wt,
            canvas=CanvasSpec(width=w, height=h),
            source_id="pair0",
        )

    def test_full_frame_target_mask_gives_all_ones_right_mask(self, rng):
        ap = self._aligned_pair(rng, full_target=True)
        pkg = assemble_inference_sample(ap, 3, 10, 15, half_w=24, half_h=24)
        assert np.array_equal(pkg.right_mask(), np.ones((24, 24)))

    def test_left_half_is_inpainted_composite(self, rng):
        ap = self._aligned_pair(rng)
        pkg = assemble_inference_sample(ap, 3, 10, 15, half_w=24, half_h=24)
        keep_target = (1 - (ap.m_wr & ap.m_wt)).astype(np.float64)[:, :, None]
        composite = np.clip(ap.i_wr + ap.i_wt * keep_target, 0, 1)
        prior = telea_inpaint(composite, (ap.m_wr | ap.m_wt).astype(np.uint8), 3)
        assert np.array_equal(pkg.left_half(), prior)
        assert pkg.kind == KIND_INFERENCE

    def test_right_half_is_target(self, rng):
        ap = self._aligned_pair(rng)
        pkg = assemble_inference_sample(ap, 3, 10, 15, half_w=24, half_h=24)
        assert np.array_equal(pkg.right_half(), ap.i_wt)
        assert np.array_equal(pkg.aux["target"], ap.i_wt)
        assert np.array_equal(pkg.aux["target_mask"], ap.m_wt.astype(np.float64))

    def test_right_mask_matches_gradient_mask(self, rng):
        ap = self._aligned_pair(rng, full_target=False)
        pkg = assemble_inference_sample(ap, 3, 10, 15, half_w=24, half_h=24)
        assert np.allclose(pkg.right_mask(), gradient_mask(ap.m_wt, 10, 15))


class TestFinalComposite:
    def test_all_ones_mask_keeps_target(self, rng):
        gen = rng.random((10, 10, 3))
        tgt = rng.random((10, 10, 3))
        out = final_composite(gen, tgt, np.ones((10, 10), np.uint8))
        assert np.array_equal(out, tgt)

    def test_all_zeros_mask_keeps_generated(self, rng):
        gen = rng.random((10, 10, 3))
        tgt = rng.random((10, 10, 3))
        out = final_composite(gen, tgt, np.zeros((10, 10), np.uint8))
        assert np.array_equal(out, gen)

    def test_matches_select_oracle(self, rng):
        gen = rng.random((12, 12, 3))
        tgt = rng.random((12, 12, 3))
        m = random_mask(rng, 12, 12)
        out = final_composite(gen, tgt, m)
        for i in range(12):
            for j in range(12):
                expected = tgt[i, j] if m[i, j] else gen[i, j]
                assert np.array_equal(out[i, j], expected)

    def test_kept_region_bit_exact_and_idempotent(self, rng):
        gen = rng.random((12, 12, 3))
        tgt = rng.random((12, 12, 3))
        m = random_mask(rng, 12, 12)
        once = final_composite(gen, tgt, m)
        assert np.array_equal(once[m > 0], tgt[m > 0])
        twice = final_composite(once, tgt, m)
        assert np.array_equal(once, twice)

    def test_soft_blend(self, rng):
        gen = rng.random((8, 8, 3))
        tgt = rng.random((8, 8, 3))
        soft = np.clip(rng.random((8, 8)), 0, 1)
        out = final_composite(gen, tgt, (soft > 0.5).astype(np.uint8), soft_mask=soft)
        expected = np.clip(tgt * soft[:, :, None] + gen * (1 - soft)[:, :, None], 0, 1)
        assert np.allclose(out, expected)


class TestDatasetRoundtrip:
    def test_write_read_quantized_equality(self, tmp_path, rng):
        packages = [_training_package(rng, sample_id=f"s{i}") for i in range(5)]
        manifest = write_dataset(packages, tmp_path / "ds")
        assert manifest.count == 5
        loaded_manifest, loaded = read_dataset(tmp_path / "ds")
        assert loaded_manifest.count == 5
        for original, restored in zip(packages, loaded):
            assert restored.sample_id == original.sample_id
            assert np.array_equal(
                restored.image_i, from_uint8(to_uint8(original.image_i))
            )
            assert np.array_equal(
                restored.mask_m, from_uint8(to_uint8(original.mask_m))
            )
            assert restored.prompt == original.prompt

    def test_ondisk_product_invariant(self, tmp_path, rng):
        packages = [_training_package(rng, sample_id=f"s{i}") for i in range(3)]
        write_dataset(packages, tmp_path / "ds")
        _, loaded = read_dataset(tmp_path / "ds")
        for pkg in loaded:
            product = pkg.image_i * (1.0 - pkg.mask_m)[:, :, None]
            assert np.max(np.abs(product - pkg.masked_image)) <= 1.0 / 255.0 + 1e-12

    def test_corrupt_file_detected(self, tmp_path, rng):
        packages = [_training_package(rng, sample_id="s0")]
        write_dataset(packages, tmp_path / "ds")
        victim = tmp_path / "ds" / "samples" / "s0" / "image.png"
        data = bytearray(victim.read_bytes())
        data[-20] ^= 0xFF
        victim.write_bytes(bytes(data))
        with pytest.raises(ChecksumMismatch):
            verify_dataset(tmp_path / "ds")

    def test_empty_dataset_valid(self, tmp_path):
        manifest = write_dataset([], tmp_path / "ds", half_w=16, half_h=16)
        assert manifest.count == 0
        loaded, packages = read_dataset(tmp_path / "ds")
        assert loaded.count == 0 and packages == []

    def test_manifest_lists_existing_files(self, tmp_path, rng):
        write_dataset([_training_package(rng, sample_id="s0")], tmp_path / "ds")
        manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
        for record in manifest["samples"]:
            for rel in record["files"].values():
                assert (tmp_path / "ds" / rel).is_file()


class TestPackageInvariants:
    def test_width_must_be_even(self, rng):
        img = rng.random((8, 7, 3))
        with pytest.raises(DimensionMismatch):
            SamplePackage(
                image_i=img,
                mask_m=np.zeros((8, 7)),
                masked_image=img,
                prompt="p",
                kind="training",
            )

    def test_left_mask_enforced(self, rng):
        img = rng.random((8, 8, 3))
        mask = np.ones((8, 8)) * 0.5
        with pytest.raises(DimensionMismatch):
            SamplePackage(
                image_i=img,
                mask_m=mask,
                masked_image=img * 0.5,
                prompt="p",
                kind="training",
            )

    def test_training_and_inference_structurally_alike(self, rng):
        train = _training_package(rng, half=24, canvas=24)
        ap_mask = np.ones((24, 24), np.uint8)
        ap = AlignedPair(
            i_wr=rng.random((24, 24, 3)),
            i_wt=rng.random((24, 24, 3)),
            m_wr=ap_mask,
            m_wt=ap_mask,
            canvas=CanvasSpec(width=24, height=24),
        )
        infer = assemble_inference_sample(ap, 3, 10, 15, half_w=24, half_h=24)
        assert train.image_i.shape == infer.image_i.shape
        assert train.mask_m.shape == infer.mask_m.shape
        assert {train.kind, infer.kind} == {"training", "inference"}
