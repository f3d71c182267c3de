import numpy as np
import pytest

from stitchforge.errors import DegenerateProjection, NonInvertibleHomography
from stitchforge.geometry import (
    CanvasSpec,
    Homography,
    align_pair,
    compute_canvas,
    warp_image,
    warp_mask,
)


class TestHomography:
    def test_identity(self):
        h = Homography.identity()
        assert np.array_equal(h.m, np.eye(3))

    def test_normalizes_bottom_right(self):
        h = Homography(2.0 * np.eye(3))
        assert h.m[2, 2] == 1.0
        assert h.m[0, 0] == 1.0

    def test_singular_rejected(self):
        with pytest.raises(NonInvertibleHomography):
            Homography(np.zeros((3, 3)))

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "h.txt"
        path.write_text("1 0 5\n0 1 -3\n0 0 1\n")
        h = Homography.from_file(path)
        assert np.allclose(h.m, [[1, 0, 5], [0, 1, -3], [0, 0, 1]])

    def test_file_wrong_count(self, tmp_path):
        path = tmp_path / "h.txt"
        path.write_text("1 2 3")
        with pytest.raises(NonInvertibleHomography):
            Homography.from_file(path)


class TestComputeCanvas:
    def test_identity_same_size(self):
        canvas = compute_canvas(Homography.identity(), (100, 80), (100, 80))
        assert (canvas.width, canvas.height) == (100, 80)
        assert (canvas.offset_x, canvas.offset_y) == (0, 0)

    def test_positive_translation(self):
        canvas = compute_canvas(Homography.translation(50, 0), (100, 80), (100, 80))
        assert (canvas.width, canvas.height) == (150, 80)
        assert (canvas.offset_x, canvas.offset_y) == (0, 0)

    def test_negative_translation(self):
        canvas = compute_canvas(Homography.translation(-30, -20), (100, 80), (100, 80))
        assert (canvas.width, canvas.height) == (130, 100)
        assert (canvas.offset_x, canvas.offset_y) == (30, 20)

    def test_behind_camera_rejected(self):
        h = Homography(np.array([[1.0, 0, 0], [0, 1, 0], [-0.05, 0, 1]]))
        with pytest.raises(DegenerateProjection):
            compute_canvas(h, (100, 80), (100, 80))


class TestWarpImage:
    def test_identity_bit_exact(self, rng):
        img = rng.random((80, 100, 3))
        canvas = CanvasSpec(width=100, height=80)
        assert np.array_equal(warp_image(img, Homography.identity(), canvas), img)

    def test_constant_on_footprint(self):
        img = np.full((40, 50, 3), 0.5)
        h = Homography(np.array([[1.1, 0.05, 7.0], [0.02, 0.9, 3.0], [0, 0, 1.0]]))
        canvas = compute_canvas(h, (50, 40), (50, 40))
        out = warp_image(img, h, canvas)
        on = np.abs(out - 0.5) < 1e-12
        off = out == 0.0
        assert np.all(on.all(axis=2) | off.all(axis=2))
        assert on.any() and off.any()

    def test_translation_matches_index_shift(self, rng):
        img = rng.random((64, 64, 3))
        tx, ty = 17, 9
        h = Homography.translation(tx, ty)
        canvas = compute_canvas(h, (64, 64), (64, 64))
        out = warp_image(img, h, canvas)
        expected = np.zeros((canvas.height, canvas.width, 3))
        expected[ty : ty + 64, tx : tx + 64] = img
        assert np.max(np.abs(out - expected)) <= 1e-6

    def test_two_translations_compose(self, rng):
        img = rng.random((32, 32, 3))
        canvas = CanvasSpec(width=64, height=64)
        once = warp_image(img, Homography.translation(11, 9), canvas)
        twice = warp_image(
            warp_image(img, Homography.translation(4, 6), canvas),
            Homography.translation(7, 3),
            canvas,
        )
        assert np.max(np.abs(once - twice)) <= 1e-6


class TestWarpMask:
    def test_identity_all_ones(self):
        canvas = CanvasSpec(width=100, height=80)
        mask = warp_mask(Homography.identity(), (100, 80), canvas)
        assert mask.shape == (80, 100)
        assert mask.all()

    def test_translation_support(self):
        h = Homography.translation(50, 0)
        canvas = compute_canvas(h, (100, 80), (100, 80))
        mask = warp_mask(h, (100, 80), canvas)
        assert mask[:, 50:150].all()
        assert not mask[:, :50].any()

    def test_rotation_preserves_area(self):
        # 90 degrees about the square's center maps the footprint to itself:
        # rotation about center is T(c) @ R @ T(-c)
        n = 64
        c = (n - 1) / 2.0
        t_fwd = np.array([[1, 0, c], [0, 1, c], [0, 0, 1.0]])
        t_back = np.array([[1, 0, -c], [0, 1, -c], [0, 0, 1.0]])
        r90 = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
        h = Homography(t_fwd @ r90 @ t_back)
        canvas = CanvasSpec(width=n, height=n)
        mask = warp_mask(h, (n, n), canvas)
        analytic_area = n * n
        assert abs(int(mask.sum()) - analytic_area) <= 0.01 * analytic_area

    def test_mask_covers_image_support(self, rng):
        img = rng.random((40, 40, 3)) * 0.9 + 0.1  # strictly positive interior
        h = Homography(np.array([[0.95, 0.1, 4.0], [-0.08, 1.05, 2.0], [0, 0, 1.0]]))
        canvas = compute_canvas(h, (40, 40), (40, 40))
        out = warp_image(img, h, canvas)
        mask = warp_mask(h, (40, 40), canvas)
        img_support = out.sum(axis=2) > 0
        assert not np.any(img_support & (mask == 0))


class TestAlignPair:
    def test_identity_pair(self, rng):
        ref = rng.random((30, 40, 3))
        tgt = rng.random((30, 40, 3))
        pair = align_pair(ref, tgt, Homography.identity(), source_id="p0")
        assert np.array_equal(pair.i_wt, tgt)
        assert np.array_equal(pair.i_wr, ref)
        assert pair.m_wr.all() and pair.m_wt.all()
        assert pair.source_id == "p0"

    def test_translated_pair_masks(self):
        ref = np.ones((20, 20, 3)) * 0.7
        tgt = np.ones((20, 20, 3)) * 0.3
        pair = align_pair(ref, tgt, Homography.translation(10, 0))
        assert pair.canvas.width == 30
        assert pair.m_wr[:, 10:30].all() and not pair.m_wr[:, :10].any()
        assert pair.m_wt[:, :20].all() and not pair.m_wt[:, 20:].any()
