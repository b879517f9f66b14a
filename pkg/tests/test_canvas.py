import numpy as np
import pytest

from posterdiff.canvas import (
    PatchGrid,
    Raster,
    compose_four_channel,
    extract_salbox,
    load_png,
    patchify,
    save_png,
    unpatchify,
)


def _rand_raster(rng, h, w, c):
    return Raster(rng.random((h, w, c)).astype(np.float32))


def test_raster_validation():
    with pytest.raises(ValueError):
        Raster(np.full((4, 4, 1), 2.0))
    with pytest.raises(ValueError):
        Raster(np.full((4, 4, 1), np.nan))


def test_compose_all_zero():
    out = compose_four_channel(Raster.constant(8, 8, 3), Raster.constant(8, 8, 1))
    assert out.channels == 4
    assert not out.data.any()


def test_compose_channel_projection():
    rng = np.random.default_rng(0)
    canvas = _rand_raster(rng, 16, 12, 3)
    sal = _rand_raster(rng, 16, 12, 1)
    out = compose_four_channel(canvas, sal)
    assert np.array_equal(out.data[:, :, :3], canvas.data)
    assert np.array_equal(out.data[:, :, 3:], sal.data)


def test_compose_dimension_mismatch():
    with pytest.raises(ValueError):
        compose_four_channel(Raster.constant(8, 8, 3), Raster.constant(8, 9, 1))


def test_salbox_full_canvas():
    box = extract_salbox(Raster.constant(32, 32, 1, 1.0), 0.5)
    assert (box.cx, box.cy, box.w, box.h) == (0.5, 0.5, 1.0, 1.0)


def test_salbox_none():
    assert extract_salbox(Raster.constant(32, 32, 1, 0.0), 0.5) is None


def test_salbox_bright_block():
    # single 8x8 block at the top-left of a 64x64 map; oracle: linear pixel scan
    arr = np.zeros((64, 64, 1), dtype=np.float32)
    arr[0:8, 0:8, 0] = 1.0
    expected_rows = [i for i in range(64) if arr[i, :, 0].max() >= 0.5]
    expected_cols = [j for j in range(64) if arr[:, j, 0].max() >= 0.5]
    box = extract_salbox(Raster(arr), 0.5)
    assert box.x0 == pytest.approx(expected_cols[0] / 64)
    assert box.x1 == pytest.approx((expected_cols[-1] + 1) / 64)
    assert box.y0 == pytest.approx(expected_rows[0] / 64)
    assert box.y1 == pytest.approx((expected_rows[-1] + 1) / 64)
    assert box.w == pytest.approx(8 / 64)
    assert box.h == pytest.approx(8 / 64)


def test_salbox_covers_every_hot_pixel_tightly():
    rng = np.random.default_rng(7)
    for _ in range(20):
        arr = (rng.random((32, 32, 1)) > 0.9).astype(np.float32)
        box = extract_salbox(Raster(arr), 0.5)
        if box is None:
            assert not (arr >= 0.5).any()
            continue
        ys, xs = np.nonzero(arr[:, :, 0] >= 0.5)
        # containment of every hot pixel's cell
        assert box.x0 <= xs.min() / 32 and box.x1 >= (xs.max() + 1) / 32
        assert box.y0 <= ys.min() / 32 and box.y1 >= (ys.max() + 1) / 32
        # no more than one pixel of slack on any side (tightness)
        assert box.x0 > (xs.min() - 1) / 32 and box.x1 < (xs.max() + 2) / 32
        assert box.y0 > (ys.min() - 1) / 32 and box.y1 < (ys.max() + 2) / 32


def test_salbox_threshold_validation():
    with pytest.raises(ValueError):
        extract_salbox(Raster.constant(8, 8, 1), 0.0)


def test_patchify_shapes():
    rng = np.random.default_rng(1)
    img = _rand_raster(rng, 64, 64, 4)
    grid = patchify(img, 8)
    assert (grid.rows, grid.cols, grid.num_patches) == (8, 8, 64)
    assert grid.patches.shape == (64, 8 * 8 * 4)


def test_patchify_constant_image():
    grid = patchify(Raster.constant(32, 32, 4, 0.25), 8)
    assert np.allclose(grid.patches, grid.patches[0])


def test_patchify_indivisible():
    with pytest.raises(ValueError):
        patchify(Raster.constant(30, 32, 4), 8)


def test_patchify_round_trip():
    rng = np.random.default_rng(2)
    img = _rand_raster(rng, 48, 32, 4)
    back = unpatchify(patchify(img, 8), 4)
    assert np.array_equal(back.data, img.data)


def test_patchify_row_major_order():
    # pixel values encode position, so patch 1 must be the patch to the right of patch 0
    arr = np.zeros((16, 16, 1), dtype=np.float32)
    arr[0:8, 8:16] = 1.0
    grid = patchify(Raster(arr), 8)
    assert grid.patches[1].max() == 1.0 and grid.patches[0].max() == 0.0


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    rgb = Raster((rng.integers(0, 256, (20, 24, 3)) / 255.0).astype(np.float32))
    gray = Raster((rng.integers(0, 256, (20, 24, 1)) / 255.0).astype(np.float32))
    save_png(rgb, tmp_path / "c.png")
    save_png(gray, tmp_path / "s.png")
    assert np.allclose(load_png(tmp_path / "c.png").data, rgb.data, atol=1 / 510)
    back = load_png(tmp_path / "s.png")
    assert back.channels == 1
    assert np.allclose(back.data, gray.data, atol=1 / 510)
