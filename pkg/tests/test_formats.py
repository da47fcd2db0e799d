import json

import numpy as np
import pytest

from fsmean import formats as fm
from fsmean.frenet import ArclengthCurve, FrenetPath
from fsmean.preprocess import EuclideanCurve
from fsmean.so3 import uniform_rotation


def test_curves_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    curves = [EuclideanCurve(np.sort(rng.random(7)), rng.standard_normal((7, 3))) for _ in range(3)]
    fm.write_curves_csv(tmp_path / "c.csv", curves)
    text = (tmp_path / "c.csv").read_bytes()
    assert text.startswith(b"curve_id,t,x,y,z\n") and b"\r" not in text
    back = fm.read_curves_csv(tmp_path / "c.csv")
    for a, b in zip(curves, back):
        assert np.array_equal(a.times, b.times) and np.array_equal(a.points, b.points)


def test_curves_bad_header(tmp_path):
    (tmp_path / "c.csv").write_text("id,t,x,y,z\n0,0,0,0,0\n")
    with pytest.raises(fm.FormatError):
        fm.read_curves_csv(tmp_path / "c.csv")
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(fm.FormatError):
        fm.read_curves_csv(tmp_path / "e.csv")


def test_frames_roundtrip_row_major(tmp_path):
    rng = np.random.default_rng(1)
    paths = [FrenetPath(np.linspace(0, 1, 5), uniform_rotation(rng, 5)) for _ in range(2)]
    fm.write_frames_json(tmp_path / "f.json", paths)
    recs = json.loads((tmp_path / "f.json").read_text())
    assert isinstance(recs, list) and set(recs[0]) == {"curve_id", "s", "Q"}
    assert recs[0]["Q"][1] == paths[0].frames[0][0, 1]
    back = fm.read_frames_json(tmp_path / "f.json")
    for a, b in zip(paths, back):
        assert np.array_equal(a.frames, b.frames)
    (tmp_path / "bad.json").write_text('[{"curve_id": 0, "s": 0, "Q": [1, 2]}]')
    with pytest.raises(fm.FormatError):
        fm.read_frames_json(tmp_path / "bad.json")
    (tmp_path / "obj.json").write_text('{"frames": []}')
    with pytest.raises(fm.FormatError):
        fm.read_frames_json(tmp_path / "obj.json")


def test_truth_and_mean_curve(tmp_path):
    g = np.linspace(0, 1, 6)
    fm.write_truth_csv(tmp_path / "t.csv", g, {"kappa": g, "tau": -g})
    header, arr = fm.read_table(tmp_path / "t.csv")
    assert header == ["s", "kappa", "tau"] and np.array_equal(arr[:, 2], -g)
    fm.write_truth_csv(tmp_path / "k.csv", g, {"kg": g})
    assert fm.read_table(tmp_path / "k.csv")[0] == ["s", "kg"]
    c = ArclengthCurve(g, np.outer(g, [1, 2, 3]))
    fm.write_mean_curve(tmp_path / "m.csv", c)
    back = fm.read_mean_curve(tmp_path / "m.csv")
    assert np.array_equal(back.points, c.points) and np.array_equal(back.grid, g)


def test_manifest_versioning(tmp_path):
    fm.write_manifest(tmp_path / "manifest.json", {"seed": 3})
    m = fm.read_manifest(tmp_path / "manifest.json")
    assert m["format_version"] == fm.FORMAT_VERSION and m["seed"] == 3
    assert fm.find_manifest(tmp_path) == tmp_path / "manifest.json"
    assert fm.find_manifest(tmp_path / "curves.csv") == tmp_path / "manifest.json"
    assert fm.find_manifest(tmp_path / "sub" / "x.csv") is None
    fm.check_version("1.7")
    with pytest.raises(fm.FormatError):
        fm.check_version("2.0")
    with pytest.raises(fm.FormatError):
        fm.check_version(None)
    (tmp_path / "manifest.json").write_text('{"format_version": "3.1"}')
    with pytest.raises(fm.FormatError):
        fm.read_manifest(tmp_path / "manifest.json")


def test_config_hash_stable():
    a = fm.config_hash({"b": 1, "a": [1.0, 2.0]})
    assert a == fm.config_hash({"a": [1.0, 2.0], "b": 1})
    assert a != fm.config_hash({"a": [1.0, 2.0], "b": 2})
    assert len(a) == 64
