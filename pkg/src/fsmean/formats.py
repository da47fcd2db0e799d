"""On-disk formats: curve CSV, frame JSON, ground-truth CSV, manifests.

All text is UTF-8 with LF line endings; floats are written with ``repr`` so
files round-trip exactly and identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .frenet import ArclengthCurve, FrenetPath
from .preprocess import EuclideanCurve

FORMAT_VERSION = "1.0"
CURVE_HEADER = ["curve_id", "t", "x", "y", "z"]


class FormatError(ValueError):
    pass


def _f(x):
    return repr(float(x))


def _open_w(path):
    return open(path, "w", encoding="utf-8", newline="")


def write_rows(path, header, rows):
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else _f(v))
                        for v in r])


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None:
            raise FormatError(f"{path}: empty file")
        return header, [row for row in rd if row]


def write_curves_csv(path, curves):
    """``curves``: EuclideanCurve (``times``) or ArclengthCurve (``grid``) objects."""
    rows = []
    for i, c in enumerate(curves):
        t = getattr(c, "times", None)
        t = c.grid if t is None else t
        for tj, p in zip(t, c.points):
            rows.append([i, tj, p[0], p[1], p[2]])
    write_rows(path, CURVE_HEADER, rows)


def read_curves_csv(path):
    header, rows = read_rows(path)
    if [h.strip() for h in header] != CURVE_HEADER:
        raise FormatError(f"{path}: expected header {','.join(CURVE_HEADER)}")
    groups = {}
    for r in rows:
        groups.setdefault(int(r[0]), []).append([float(v) for v in r[1:]])
    out = []
    for cid in sorted(groups):
        a = np.array(groups[cid])
        out.append(EuclideanCurve(a[:, 0], a[:, 1:]))
    return out


def write_frames_json(path, paths):
    recs = []
    for i, p in enumerate(paths):
        for s, Q in zip(p.grid, p.frames):
            recs.append({"curve_id": i, "s": float(s), "Q": [float(v) for v in Q.reshape(-1)]})
    with _open_w(path) as fh:
        json.dump(recs, fh)
        fh.write("\n")


def read_frames_json(path):
    with open(path, encoding="utf-8") as fh:
        recs = json.load(fh)
    if not isinstance(recs, list):
        raise FormatError(f"{path}: expected a JSON array of frame records")
    groups = {}
    for r in recs:
        if len(r.get("Q", ())) != 9:
            raise FormatError(f"{path}: each record needs 9 row-major entries in Q")
        groups.setdefault(int(r["curve_id"]), []).append((float(r["s"]), r["Q"]))
    out = []
    for cid in sorted(groups):
        g = groups[cid]
        out.append(FrenetPath(np.array([s for s, _ in g]), np.array([q for _, q in g]).reshape(-1, 3, 3)))
    return out


def write_truth_csv(path, grid, truth):
    if "kg" in truth:
        write_rows(path, ["s", "kg"], zip(grid, truth["kg"]))
    else:
        write_rows(path, ["s", "kappa", "tau"], zip(grid, truth["kappa"], truth["tau"]))


def read_table(path):
    """CSV of floats to ``(header, array)``."""
    header, rows = read_rows(path)
    return header, np.array([[float(v) for v in r] for r in rows])


def write_mean_curve(path, curve):
    write_rows(path, CURVE_HEADER, [[0, t, *p] for t, p in zip(curve.grid, curve.points)])


def read_mean_curve(path):
    c = read_curves_csv(path)[0]
    return ArclengthCurve(c.times, c.points)


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_manifest(path, payload):
    payload = {"format_version": FORMAT_VERSION, **payload}
    with _open_w(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    with open(path, encoding="utf-8") as fh:
        m = json.load(fh)
    check_version(m.get("format_version"), path)
    return m


def check_version(version, where=""):
    if version is None:
        raise FormatError(f"{where}: missing format_version")
    major = str(version).split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise FormatError(f"{where}: unsupported format version {version}")


def find_manifest(path):
    """Manifest next to a data file, or inside a directory; ``None`` if absent."""
    p = Path(path)
    cand = p / "manifest.json" if p.is_dir() else p.parent / "manifest.json"
    return cand if cand.exists() else None
