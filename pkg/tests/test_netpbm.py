"""PGM/PPM parser and writer."""

import numpy as np
import pytest

from vapl import netpbm
from vapl.netpbm import NetpbmError, read_pnm, write_pnm


def test_pgm_roundtrip_8bit(tmp_path):
    arr = np.random.default_rng(0).integers(0, 256, size=(10, 7), dtype=np.uint8)
    write_pnm(tmp_path / "a.pgm", arr)
    out, maxval = read_pnm(tmp_path / "a.pgm")
    assert maxval == 255 and np.array_equal(out, arr)


def test_pgm_roundtrip_16bit(tmp_path):
    arr = np.random.default_rng(1).integers(0, 65536, size=(5, 5), dtype=np.uint16)
    write_pnm(tmp_path / "a.pgm", arr, maxval=65535)
    out, maxval = read_pnm(tmp_path / "a.pgm")
    assert maxval == 65535 and np.array_equal(out, arr)


def test_ppm_roundtrip(tmp_path):
    arr = np.random.default_rng(2).integers(0, 256, size=(3, 6, 4), dtype=np.uint8)
    write_pnm(tmp_path / "a.ppm", arr)
    out, maxval = read_pnm(tmp_path / "a.ppm")
    assert out.shape == (3, 6, 4) and np.array_equal(out, arr)


def test_comments_in_header(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n2 2\n255\n\x01\x02\x03\x04")
    out, _ = read_pnm(path)
    assert np.array_equal(out, [[1, 2], [3, 4]])


def test_truncated_header_reports_offset(tmp_path):
    path = tmp_path / "t.pgm"
    path.write_bytes(b"P5\n2")
    with pytest.raises(NetpbmError) as e:
        read_pnm(path)
    assert "byte" in str(e.value) and str(path) in str(e.value)


def test_truncated_raster_reports_offset(tmp_path):
    path = tmp_path / "t.pgm"
    path.write_bytes(b"P5\n2 2\n255\n\x01\x02")
    with pytest.raises(NetpbmError, match="truncated raster"):
        read_pnm(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "b.pgm"
    path.write_bytes(b"P2\n2 2\n255\n1 2 3 4\n")
    with pytest.raises(NetpbmError, match="magic"):
        read_pnm(path)


def test_value_range_check():
    with pytest.raises(ValueError):
        netpbm.encode_pnm(np.array([[300]]), maxval=255)


def test_unit_conversion_roundtrip():
    arr = np.random.default_rng(3).integers(0, 256, size=(8, 8), dtype=np.uint8)
    unit = netpbm.image_to_unit(arr, 255)
    assert unit.shape == (1, 8, 8)
    back = netpbm.unit_to_image(unit)
    assert np.array_equal(back, arr)
