"""PPM/PNG round trips and bilinear resizing."""

import numpy as np
import pytest

from phaseformer.errors import IngestionError, UsageError
from phaseformer.imageio import bilinear_resize, load_image, save_image


def write_ppm(path, rgb_u8):
    h, w, _ = rgb_u8.shape
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode() + rgb_u8.tobytes())


class TestPpm:
    def test_red_pixel_scaling(self, tmp_path):
        rgb = np.zeros((2, 2, 3), dtype=np.uint8)
        rgb[0, 0] = (255, 0, 0)
        p = tmp_path / "red.ppm"
        write_ppm(p, rgb)
        img = load_image(p)
        assert img.shape == (3, 2, 2)
        np.testing.assert_allclose(img[:, 0, 0], [1.0, 0.0, 0.0])

    def test_comment_and_whitespace_tolerant(self, tmp_path):
        rgb = np.full((1, 2, 3), 128, dtype=np.uint8)
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n# a comment\n 2 1\n255\n" + rgb.tobytes())
        img = load_image(p)
        assert img.shape == (3, 1, 2)

    def test_roundtrip_bit_exact(self, tmp_path, rng):
        rgb = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
        p = tmp_path / "x.ppm"
        write_ppm(p, rgb)
        img = load_image(p)
        q = tmp_path / "y.ppm"
        save_image(q, img)
        assert np.array_equal(load_image(q), img)

    def test_truncated_raster_reports_offset(self, tmp_path):
        p = tmp_path / "bad.ppm"
        p.write_bytes(b"P6\n4 4\n255\n" + b"\x00" * 10)
        with pytest.raises(IngestionError, match="byte offset"):
            load_image(p)

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "bad.ppm"
        p.write_bytes(b"P3\n1 1\n255\n000")
        with pytest.raises(IngestionError):
            load_image(p)


class TestPng:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        img = rng.random((3, 6, 9)).astype(np.float32)
        p = tmp_path / "x.png"
        save_image(p, img)
        back = load_image(p)
        # both directions quantize to the same bytes
        assert np.array_equal(
            np.rint(back * 255).astype(np.uint8), np.rint(img * 255).astype(np.uint8)
        )

    def test_png_and_ppm_agree(self, tmp_path, rng):
        img = rng.random((3, 8, 8)).astype(np.float32)
        png_path = tmp_path / "a.png"
        ppm_path = tmp_path / "a.ppm"
        save_image(png_path, img)
        save_image(ppm_path, img)
        assert np.array_equal(load_image(png_path), load_image(ppm_path))

    def test_rgba_alpha_dropped(self, tmp_path):
        import struct
        import zlib

        w = h = 2
        rgba = np.arange(w * h * 4, dtype=np.uint8).reshape(h, w, 4)
        raw = b"".join(b"\x00" + rgba[r].tobytes() for r in range(h))

        def chunk(ctype, body):
            return (
                struct.pack(">I", len(body)) + ctype + body
                + struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF)
            )

        data = (
            b"\x89PNG\r\n\x1a\n"
            + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 6, 0, 0, 0))
            + chunk(b"IDAT", zlib.compress(raw))
            + chunk(b"IEND", b"")
        )
        p = tmp_path / "rgba.png"
        p.write_bytes(data)
        img = load_image(p)
        assert img.shape == (3, 2, 2)
        np.testing.assert_allclose(img[:, 0, 0], rgba[0, 0, :3] / 255.0, atol=1e-7)

    def test_sub_and_up_filters_decode(self, tmp_path):
        import struct
        import zlib

        w = h = 3
        rows = np.array(
            [[[10, 20, 30], [13, 24, 35], [16, 28, 40]],
             [[50, 60, 70], [53, 64, 75], [56, 68, 80]],
             [[90, 95, 99], [93, 99, 104], [96, 103, 109]]],
            dtype=np.uint8,
        )
        # encode row 0 with filter 1 (sub), row 1 with filter 2 (up), row 2 raw
        def sub_filter(row):
            out = row.astype(np.int16).copy().reshape(-1)
            for i in range(len(out) - 1, 2, -1):
                out[i] -= out[i - 3]
            return (out & 0xFF).astype(np.uint8)

        def up_filter(row, prev):
            return ((row.astype(np.int16) - prev.astype(np.int16)) & 0xFF).astype(np.uint8).reshape(-1)

        raw = (
            b"\x01" + sub_filter(rows[0]).tobytes()
            + b"\x02" + up_filter(rows[1], rows[0]).tobytes()
            + b"\x00" + rows[2].tobytes()
        )

        def chunk(ctype, body):
            return (
                struct.pack(">I", len(body)) + ctype + body
                + struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF)
            )

        data = (
            b"\x89PNG\r\n\x1a\n"
            + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))
            + chunk(b"IDAT", zlib.compress(raw))
            + chunk(b"IEND", b"")
        )
        p = tmp_path / "filters.png"
        p.write_bytes(data)
        img = (load_image(p) * 255).round().astype(np.uint8).transpose(1, 2, 0)
        assert np.array_equal(img, rows)

    def test_16bit_rejected(self, tmp_path):
        import struct
        import zlib

        def chunk(ctype, body):
            return (
                struct.pack(">I", len(body)) + ctype + body
                + struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF)
            )

        data = (
            b"\x89PNG\r\n\x1a\n"
            + chunk(b"IHDR", struct.pack(">IIBBBBB", 1, 1, 16, 2, 0, 0, 0))
            + chunk(b"IDAT", zlib.compress(b"\x00" * 7))
            + chunk(b"IEND", b"")
        )
        p = tmp_path / "deep.png"
        p.write_bytes(data)
        with pytest.raises(IngestionError, match="bit depth"):
            load_image(p)


class TestResize:
    def test_constant_stays_constant(self):
        img = np.full((3, 2, 2), 0.437, dtype=np.float32)
        out = bilinear_resize(img, 4, 4)
        np.testing.assert_allclose(out, 0.437, rtol=1e-6)

    def test_identity_when_same_size(self, rng):
        img = rng.random((3, 4, 4)).astype(np.float32)
        np.testing.assert_array_equal(bilinear_resize(img, 4, 4), img)

    def test_downsample_average_of_2x2(self):
        img = np.zeros((1, 2, 2), dtype=np.float64)
        img[0] = [[0.0, 1.0], [1.0, 0.0]]
        out = bilinear_resize(img, 1, 1)
        assert out[0, 0, 0] == pytest.approx(0.5)

    def test_load_resizes_to_target(self, tmp_path, rng):
        rgb = rng.integers(0, 256, (10, 20, 3), dtype=np.uint8)
        p = tmp_path / "r.ppm"
        write_ppm(p, rgb)
        img = load_image(p, target_size=8)
        assert img.shape == (3, 8, 8)

    def test_unknown_extension_rejected(self, tmp_path, rng):
        with pytest.raises(UsageError):
            save_image(tmp_path / "x.jpg", rng.random((3, 4, 4)))
