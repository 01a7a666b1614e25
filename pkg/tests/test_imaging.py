"""File I/O, resampling, cropping, rotation, and pyramid contracts."""

import numpy as np
import pytest
from PIL import Image as PILImage

from nsdehaze import imaging
from nsdehaze.errors import ArgumentError, FormatError, NotFoundError, ShapeError
from conftest import random_image


class TestLoadSave:
    def test_black_and_white(self, tmp_path):
        for value, name in ((0, "black"), (255, "white")):
            path = tmp_path / f"{name}.png"
            PILImage.fromarray(np.full((4, 4, 3), value, np.uint8)).save(path)
            img = imaging.load_image(path)
            assert np.array_equal(img, np.full((4, 4, 3), value / 255.0))

    def test_exact_division_by_255(self, tmp_path):
        arr = np.zeros((2, 2, 3), np.uint8)
        arr[0, 0, 1] = 128
        path = tmp_path / "px.png"
        PILImage.fromarray(arr).save(path)
        img = imaging.load_image(path)
        assert img[0, 0, 1] == 128 / 255
        assert abs(img[0, 0, 1] - 0.50196) < 1e-5

    def test_save_round_trip(self, tmp_path, rng):
        img = random_image(rng, 8, 8)
        path = tmp_path / "rt.png"
        imaging.save_image(img, path)
        back = imaging.load_image(path)
        assert np.abs(back - img).max() <= 1 / 255

    def test_save_pure_black_white(self, tmp_path):
        for img, value in ((np.zeros((3, 3, 3)), 0), (np.ones((3, 3, 3)), 255)):
            path = tmp_path / "bw.png"
            imaging.save_image(img, path)
            assert np.all(np.asarray(PILImage.open(path)) == value)

    def test_jpeg_read_only(self, tmp_path, rng):
        path = tmp_path / "img.jpg"
        PILImage.fromarray((random_image(rng, 16, 16) * 255).astype(np.uint8)).save(path)
        img = imaging.load_image(path)
        assert img.shape == (16, 16, 3)
        with pytest.raises(FormatError):
            imaging.save_image(img, tmp_path / "out.jpg")

    def test_missing_file(self, tmp_path):
        with pytest.raises(NotFoundError):
            imaging.load_image(tmp_path / "nope.png")

    def test_non_rgb_rejected(self, tmp_path):
        path = tmp_path / "gray.png"
        PILImage.fromarray(np.zeros((4, 4), np.uint8), mode="L").save(path)
        with pytest.raises(FormatError):
            imaging.load_image(path)

    def test_non_decodable(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"not an image at all")
        with pytest.raises(FormatError):
            imaging.load_image(path)

    def test_unwritable_path(self, tmp_path):
        from nsdehaze.errors import IoError

        with pytest.raises(IoError):
            imaging.save_image(np.zeros((2, 2, 3)), tmp_path / "no" / "dir" / "x.png")


class TestValidation:
    def test_shape_checks(self):
        with pytest.raises(ShapeError):
            imaging.as_image(np.zeros((4, 4)))
        with pytest.raises(ShapeError):
            imaging.as_image(np.zeros((0, 4, 3)))

    def test_range_checks(self):
        with pytest.raises(ArgumentError):
            imaging.as_image(np.full((2, 2, 3), 1.5))
        clamped = imaging.as_image(np.full((2, 2, 3), 1.5), clamp=True)
        assert clamped.max() == 1.0
        with pytest.raises(ArgumentError):
            imaging.as_image(np.full((2, 2, 3), np.nan), clamp=True)


class TestResize:
    def test_constant_stays_constant(self, rng):
        img = np.full((7, 5, 3), 0.37)
        out = imaging.resize(img, 12, 9)
        assert out.shape == (12, 9, 3)
        assert np.allclose(out, 0.37)

    def test_checkerboard_golden(self):
        img = np.zeros((2, 2, 3))
        img[0, 1] = img[1, 0] = 1.0
        assert np.allclose(imaging.resize(img, 1, 1), 0.5)

    def test_identity_at_same_size(self, rng):
        img = random_image(rng, 9, 13)
        assert np.abs(imaging.resize(img, 9, 13) - img).max() < 1e-6

    def test_range_preserved(self, rng):
        img = random_image(rng, 8, 8) * 0.5 + 0.25
        out = imaging.resize(img, 21, 5)
        assert out.min() >= img.min() and out.max() <= img.max()

    def test_bad_dims(self, rng):
        with pytest.raises(ArgumentError):
            imaging.resize(random_image(rng, 4, 4), 0, 3)


class TestRandomCrop:
    def test_identity_crop(self, rng):
        img = random_image(rng, 6, 6)
        crop, offset = imaging.random_crop(img, 6, 6, seed=5)
        assert offset == (0, 0)
        assert np.array_equal(crop, img)

    def test_determinism(self, rng):
        img = random_image(rng, 30, 30)
        _, off1 = imaging.random_crop(img, 10, 10, seed=42)
        _, off2 = imaging.random_crop(img, 10, 10, seed=42)
        assert off1 == off2

    def test_too_large(self, rng):
        with pytest.raises(ArgumentError):
            imaging.random_crop(random_image(rng, 4, 4), 5, 5, seed=0)

    def test_offset_uniformity(self):
        # 286 -> 256 leaves offsets in [0, 30]^2; marginal counts within 3
        # sigma of the multinomial expectation for this fixed seed.
        img = np.zeros((286, 286, 3))
        n_draws = 10_000
        rows = np.zeros(31, int)
        cols = np.zeros(31, int)
        for k in range(n_draws):
            _, (top, left) = imaging.random_crop(img, 256, 256, seed=1000 + k)
            rows[top] += 1
            cols[left] += 1
        expected = n_draws / 31
        sigma = np.sqrt(n_draws * (1 / 31) * (30 / 31))
        assert np.all(np.abs(rows - expected) <= 3 * sigma)
        assert np.all(np.abs(cols - expected) <= 3 * sigma)


class TestRotate:
    def test_zero_identity(self, rng):
        img = random_image(rng, 5, 7)
        assert np.array_equal(imaging.rotate(img, 0), img)

    def test_quarter_turn_permutation(self):
        img = np.arange(12, dtype=float).reshape(2, 2, 3) / 11
        assert np.array_equal(imaging.rotate(img, 90), np.rot90(img))
        assert np.array_equal(imaging.rotate(img, 180), np.rot90(img, 2))
        assert np.array_equal(imaging.rotate(img, 270), np.rot90(img, 3))

    def test_round_trip_interior(self):
        y, x = np.mgrid[0:32, 0:32]
        img = np.stack(
            [
                np.sin(x / 10) * 0.3 + 0.5,
                np.cos(y / 12) * 0.3 + 0.5,
                (x + y) / 124 + 0.2,
            ],
            axis=2,
        )
        back = imaging.rotate(imaging.rotate(img, 30), 330)
        interior = np.abs(back - img)[5:-5, 5:-5]
        assert interior.max() <= 0.05

    def test_range_preserved(self, rng):
        img = random_image(rng, 16, 16)
        out = imaging.rotate(img, 37.5)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestPyramid:
    def test_level_dims(self, rng):
        pyr = imaging.pyramid(random_image(rng, 256, 256))
        assert [lv.shape[:2] for lv in pyr.levels] == [(128, 128), (256, 256), (512, 512)]

    def test_constant(self):
        pyr = imaging.pyramid(np.full((8, 8, 3), 0.6))
        assert all(np.allclose(lv, 0.6) for lv in pyr.levels)

    def test_unit_level_is_input(self, rng):
        img = random_image(rng, 10, 14)
        pyr = imaging.pyramid(img)
        assert pyr.levels[1] is img or np.array_equal(pyr.levels[1], img)

    def test_odd_dims_round(self, rng):
        pyr = imaging.pyramid(random_image(rng, 9, 7))
        assert pyr.levels[0].shape[:2] == (round(9 * 0.5), round(7 * 0.5))
        assert pyr.levels[2].shape[:2] == (18, 14)


class TestLuminance:
    def test_bt601_weights(self):
        img = np.zeros((1, 1, 3))
        img[0, 0] = (1.0, 0.0, 0.0)
        assert np.isclose(imaging.luminance(img)[0, 0], 0.299)
