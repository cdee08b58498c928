import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from n2b.image import (Image, MalformedImageError, PatchSampler,
                       UnsupportedImageError, clamp_01, image_to_tensor,
                       load_image, save_image, tensor_to_image)


class TestPgmPpm:
    def test_pgm_byte_mapping(self, tmp_path):
        p = tmp_path / "t.pgm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64]))
        img = load_image(p)
        expected = np.array([[0, 128 / 255], [1.0, 64 / 255]], dtype=np.float32)
        assert np.allclose(img.pixels[:, :, 0], expected)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = Image((rng.integers(0, 256, (5, 7, 1)) / 255.0).astype(np.float32))
        save_image(img, tmp_path / "a.pgm")
        again = load_image(tmp_path / "a.pgm")
        assert np.array_equal(img.pixels, again.pixels)

    def test_ppm_rgb_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = Image((rng.integers(0, 256, (4, 4, 3)) / 255.0).astype(np.float32))
        save_image(img, tmp_path / "a.ppm")
        assert np.array_equal(load_image(tmp_path / "a.ppm").pixels, img.pixels)

    def test_truncated_pgm(self, tmp_path):
        p = tmp_path / "t.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
        with pytest.raises(MalformedImageError):
            load_image(p)

    def test_unsupported_maxval(self, tmp_path):
        p = tmp_path / "t.pgm"
        p.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(UnsupportedImageError):
            load_image(p)


class TestPng:
    def test_gray_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        img = Image((rng.integers(0, 256, (9, 6, 1)) / 255.0).astype(np.float32))
        save_image(img, tmp_path / "a.png")
        assert np.array_equal(load_image(tmp_path / "a.png").pixels, img.pixels)

    def test_rgb_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        img = Image((rng.integers(0, 256, (6, 9, 3)) / 255.0).astype(np.float32))
        save_image(img, tmp_path / "a.png")
        assert np.array_equal(load_image(tmp_path / "a.png").pixels, img.pixels)

    def test_truncated_png_is_malformed(self, tmp_path):
        img = Image(np.zeros((8, 8, 1), dtype=np.float32))
        save_image(img, tmp_path / "a.png")
        data = (tmp_path / "a.png").read_bytes()
        (tmp_path / "cut.png").write_bytes(data[:len(data) // 2])
        with pytest.raises(MalformedImageError):
            load_image(tmp_path / "cut.png")

    def test_not_an_image(self, tmp_path):
        (tmp_path / "junk.png").write_bytes(b"not an image at all")
        with pytest.raises(MalformedImageError):
            load_image(tmp_path / "junk.png")

    def test_save_load_save_idempotent(self, tmp_path):
        rng = np.random.default_rng(4)
        img = Image(rng.random((8, 8, 1)).astype(np.float32) * 1.4 - 0.2)
        save_image(img, tmp_path / "a.png")
        save_image(load_image(tmp_path / "a.png"), tmp_path / "b.png")
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_image(tmp_path / "nope.png")


class TestTensorConversion:
    def test_layout(self):
        img = Image(np.arange(4, dtype=np.float32).reshape(2, 2, 1))
        t = image_to_tensor(img)
        assert t.shape == (1, 1, 2, 2)

    def test_round_trip_exact(self):
        rng = np.random.default_rng(5)
        img = Image(rng.random((6, 5, 3)).astype(np.float32))
        assert np.array_equal(tensor_to_image(image_to_tensor(img)).pixels, img.pixels)

    def test_channel_major_ordering(self):
        px = np.zeros((2, 2, 3), dtype=np.float32)
        px[:, :, 1] = 1.0
        t = image_to_tensor(Image(px))
        assert np.all(t.data[0, 1] == 1.0)
        assert np.all(t.data[0, 0] == 0.0) and np.all(t.data[0, 2] == 0.0)

    def test_bad_channel_count(self):
        from n2b.tensor import Tensor
        with pytest.raises(ValueError):
            tensor_to_image(Tensor(np.zeros((1, 2, 4, 4))))


class TestClamp:
    def test_clips_both_sides(self):
        img = Image(np.array([[[1.4], [-0.2]]], dtype=np.float32))
        out = clamp_01(img)
        assert np.allclose(out.pixels.reshape(-1), [1.0, 0.0])

    def test_identity_in_range(self):
        rng = np.random.default_rng(6)
        img = Image(rng.random((4, 4, 1)).astype(np.float32))
        assert np.array_equal(clamp_01(img).pixels, img.pixels)


class TestPatchSampler:
    def _img(self, h, w):
        return Image(np.zeros((h, w, 1), dtype=np.float32))

    def test_corner_bounds(self):
        sampler = PatchSampler([self._img(512, 512)], 128, seed=1)
        for _ in range(200):
            _, top, left = sampler.sample_corner()
            assert 0 <= top <= 384 and 0 <= left <= 384

    def test_degenerate_full_image(self):
        sampler = PatchSampler([self._img(64, 64)], 64, seed=2)
        idx, top, left = sampler.sample_corner()
        assert (top, left) == (0, 0)
        assert sampler.sample_patch().pixels.shape == (64, 64, 1)

    def test_seed_determinism(self):
        a = PatchSampler([self._img(100, 80)], 32, seed=7)
        b = PatchSampler([self._img(100, 80)], 32, seed=7)
        assert [a.sample_corner() for _ in range(50)] == \
               [b.sample_corner() for _ in range(50)]

    def test_patch_too_large(self):
        with pytest.raises(ValueError):
            PatchSampler([self._img(16, 16)], 32, seed=0)

    @settings(max_examples=40, deadline=None)
    @given(h=st.integers(8, 80), w=st.integers(8, 80), k=st.integers(1, 8),
           seed=st.integers(0, 1000))
    def test_never_out_of_bounds(self, h, w, k, seed):
        patch = min(k, h, w)
        sampler = PatchSampler([self._img(h, w)], patch, seed=seed)
        for _ in range(5):
            p = sampler.sample_patch()
            assert p.pixels.shape == (patch, patch, 1)
