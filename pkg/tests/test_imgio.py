"""Codec round-trips, quantization rule, atomicity, resize behavior."""

import numpy as np
import pytest

from liquiform import fixtures, imgio


def test_quantize_round_half_up():
    # 0.5/255 boundary must round up, not to even
    x = np.array([[[0.0, 0.5 / 255.0, 1.5 / 255.0, 1.0]]]).transpose(0, 2, 1)
    q = imgio.quantize_u8(x)
    assert q.ravel().tolist() == [0, 1, 2, 255]


def test_quantize_saturates():
    x = np.array([[[-0.2]], [[1.3]]])
    assert imgio.quantize_u8(x).ravel().tolist() == [0, 255]


@pytest.mark.parametrize("ext", [".png", ".ppm"])
def test_write_read_round_trip(tmp_path, ext):
    rng = np.random.default_rng(0)
    img = rng.random((7, 9, 3)).astype(np.float32)
    path = tmp_path / f"img{ext}"
    imgio.write_image(path, img)
    back = imgio.read_image(path)
    assert back.shape == img.shape and back.dtype == np.float32
    expect = imgio.quantize_u8(img).astype(np.float32) / 255.0
    assert np.array_equal(back, expect)


def test_second_write_is_idempotent(tmp_path):
    img = fixtures.toy_portrait(3, size=16)
    path = tmp_path / "img.ppm"
    imgio.write_image(path, img)
    first = path.read_bytes()
    imgio.write_image(path, img)
    assert path.read_bytes() == first


def test_no_temp_file_left_behind(tmp_path):
    imgio.write_image(tmp_path / "a.ppm", np.zeros((4, 4, 3)))
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.ppm"]


def test_grayscale_png_round_trip(tmp_path):
    img = np.linspace(0, 1, 24, dtype=np.float32).reshape(6, 4, 1)
    path = tmp_path / "g.png"
    imgio.write_image(path, img)
    back = imgio.read_image(path)
    assert back.shape == (6, 4, 1)
    expect = imgio.quantize_u8(img).astype(np.float32) / 255.0
    assert np.array_equal(back, expect)


def test_read_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        imgio.read_image(tmp_path / "nope.png")


def test_read_garbage_ppm_raises(tmp_path):
    bad = tmp_path / "bad.ppm"
    bad.write_bytes(b"JUNKJUNK")
    with pytest.raises(ValueError, match="P6"):
        imgio.read_image(bad)
    short = tmp_path / "short.ppm"
    short.write_bytes(b"P6\n4 4\n255\nxx")
    with pytest.raises(ValueError, match="truncated"):
        imgio.read_image(short)


def test_ppm_header_comments(tmp_path):
    data = np.full((2, 3, 3), 128, dtype=np.uint8)
    path = tmp_path / "c.ppm"
    path.write_bytes(b"P6\n# a comment\n3 2\n255\n" + data.tobytes())
    img = imgio.read_image(path)
    assert img.shape == (2, 3, 3)
    assert np.allclose(img, 128 / 255.0)


def test_unsupported_extension_rejected(tmp_path):
    with pytest.raises(ValueError, match="extension"):
        imgio.write_image(tmp_path / "x.jpg", np.zeros((4, 4, 3)))


def test_bad_shape_rejected(tmp_path):
    with pytest.raises(ValueError, match="H, W, C"):
        imgio.write_image(tmp_path / "x.png", np.zeros((4, 4)))


def test_committed_bullseye_matches_generator():
    back = imgio.read_image(fixtures.bullseye_file())
    expect = imgio.quantize_u8(fixtures.bullseye()).astype(np.float32) / 255.0
    assert np.array_equal(back, expect)


def test_resize_identity_when_same_size():
    img = fixtures.toy_portrait(1, size=16)
    out = imgio.resize_bilinear(img, 16, 16)
    assert np.array_equal(out, img)


def test_resize_corner_alignment():
    rng = np.random.default_rng(1)
    img = rng.random((5, 7, 3))
    out = imgio.resize_bilinear(img, 9, 13)
    assert out.shape == (9, 13, 3)
    for (ro, co), (ri, ci) in [((0, 0), (0, 0)), ((0, -1), (0, -1)),
                               ((-1, 0), (-1, 0)), ((-1, -1), (-1, -1))]:
        np.testing.assert_allclose(out[ro, co], img[ri, ci], rtol=1e-12)


def test_resize_constant_stays_constant():
    img = np.full((6, 6, 1), 0.25)
    out = imgio.resize_bilinear(img, 4, 10)
    np.testing.assert_allclose(out, 0.25, rtol=1e-12)
