"""Raw-map and PNG round trips."""

import numpy as np
import pytest

from dc2 import fileio


class TestRawMaps:
    def test_single_channel_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = rng.uniform(100, 5000, size=(20, 30)).astype(np.float32)
        path = tmp_path / "m.raw"
        fileio.write_raw_map(path, arr)
        back = fileio.read_raw_map(path)
        np.testing.assert_array_equal(back, arr)
        assert back.dtype == np.float32

    def test_two_channel_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        arr = rng.normal(size=(12, 9, 2)).astype(np.float32)
        path = tmp_path / "w.raw"
        fileio.write_raw_map(path, arr)
        np.testing.assert_array_equal(fileio.read_raw_map(path), arr)

    def test_header_layout(self, tmp_path):
        arr = np.zeros((5, 7), dtype=np.float32)
        path = tmp_path / "h.raw"
        fileio.write_raw_map(path, arr)
        blob = path.read_bytes()
        assert int.from_bytes(blob[0:4], "little") == 5
        assert int.from_bytes(blob[4:8], "little") == 7
        assert len(blob) == 8 + 5 * 7 * 4

    def test_bad_shapes_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            fileio.write_raw_map(tmp_path / "x.raw", np.zeros((3, 3, 3)))
        (tmp_path / "short.raw").write_bytes(b"\x01")
        with pytest.raises(ValueError):
            fileio.read_raw_map(tmp_path / "short.raw")


class TestPng:
    def test_16bit_round_trip_precision(self, tmp_path):
        rng = np.random.default_rng(2)
        img = rng.random((16, 24, 3))
        path = tmp_path / "img.png"
        fileio.save_image(path, img)
        back = fileio.load_image(path)
        assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-9

    def test_grayscale_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        img = rng.random((10, 10))
        fileio.save_image(tmp_path / "g.png", img)
        back = fileio.load_image(tmp_path / "g.png")
        assert back.shape == (10, 10)
        assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-9

    def test_mask_round_trip(self, tmp_path):
        mask = np.zeros((8, 8))
        mask[2:5, 3:7] = 1.0
        fileio.save_mask(tmp_path / "m.png", mask)
        np.testing.assert_array_equal(fileio.load_mask(tmp_path / "m.png"), mask)

    def test_bytes_round_trip(self):
        rng = np.random.default_rng(4)
        img = rng.random((9, 11, 3))
        blob = fileio.encode_png_bytes(img, bitdepth=16)
        back = fileio.decode_png_bytes(blob)
        assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-9
        with pytest.raises(ValueError):
            fileio.decode_png_bytes(b"not a png")
