import math

import numpy as np

from marcusflow import io


def test_json_roundtrip_with_nonfinite(tmp_path):
    obj = {"a": np.float64(1.5), "b": np.arange(3), "c": [math.nan, math.inf, -math.inf],
           "d": np.bool_(True), "e": np.int64(7)}
    p = io.write_json(str(tmp_path / "x.json"), obj)
    back = io.read_json(p)
    assert back == {"a": 1.5, "b": [0, 1, 2], "c": ["nan", "inf", "-inf"], "d": True, "e": 7}


def test_digest_is_key_order_independent():
    assert io.digest({"x": 1, "y": [1.0, 2.0]}) == io.digest({"y": [1.0, 2.0], "x": 1})
    assert io.digest({"x": 1}) != io.digest({"x": 2})


def test_csv_roundtrip_exact(tmp_path):
    rows = np.random.default_rng(0).standard_normal((5, 3))
    p = io.write_csv(str(tmp_path / "t.csv"), ["a", "b", "c"], rows)
    header, back = io.read_csv(p)
    assert header == ["a", "b", "c"]
    assert np.array_equal(back, rows)


def test_pgm_roundtrip_and_orientation(tmp_path):
    img = np.zeros((4, 6), dtype=np.uint8)
    img[0, :] = 200
    p = io.write_pgm(str(tmp_path / "r.pgm"), img)
    raw = open(p, "rb").read()
    assert raw.startswith(b"P5\n6 4\n255\n")
    # row 0 is the bottom of the image, so it is the last row in the file
    assert raw[-6:] == bytes([200] * 6)
    assert np.array_equal(io.read_pgm(p), img)


def test_file_digest_changes_with_content(tmp_path):
    a = io.write_json(str(tmp_path / "a.json"), {"v": 1})
    d1 = io.file_digest(a)
    io.write_json(a, {"v": 2})
    assert io.file_digest(a) != d1


def test_attain_raster_levels():
    k = np.array([[0, 1, 4], [8, 12, 2]])
    r = io.attain_raster(k)
    assert r.dtype == np.uint8
    assert r.tolist() == [[0, 32, 128], [255, 255, 64]]
