"""
File formats: CSV tables, JSON reports, binary PGM rasters, content digests.
"""

import csv
import hashlib
import json
import os

import numpy as np

__all__ = [
    "to_jsonable", "dumps", "write_json", "read_json", "write_csv", "read_csv", "write_pgm",
    "read_pgm", "file_digest", "digest", "attain_raster", "factor_pair_rows",
    "write_factor_pair", "write_alternate", "write_matrix_path",
]


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if np.isnan(f):
            return "nan"
        if np.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def dumps(obj, **kw):
    return json.dumps(to_jsonable(obj), sort_keys=True, **kw)


def digest(obj):
    """sha256 of the canonical JSON form of obj."""
    return hashlib.sha256(dumps(obj, separators=(",", ":")).encode()).hexdigest()


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _ensure_dir(path):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


def write_json(path, obj):
    _ensure_dir(path)
    with open(path, "w") as fh:
        fh.write(dumps(obj, indent=2))
        fh.write("\n")
    return path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    _ensure_dir(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows)


def write_pgm(path, raster):
    """Binary (P5) 8-bit graymap; row 0 of ``raster`` is the bottom of the image."""
    img = np.asarray(raster)
    if img.ndim != 2:
        raise ValueError("raster must be 2-D")
    img = np.clip(img, 0, 255).astype(np.uint8)[::-1]
    _ensure_dir(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())
    return path


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = (int(v) for v in parts[1].split())
    img = np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)
    return img[::-1].copy()


def attain_raster(first_reached):
    """Gray level 255 * min(k, 8) / 8 for first-reached k, 0 outside."""
    k = np.asarray(first_reached)
    return np.where(k > 0, np.round(255 * np.minimum(k, 8) / 8), 0).astype(np.uint8)


def factor_pair_rows(fp):
    n = fp.eta.shape[-1]
    header = (["t"] + [f"eta_{i}{j}" for i in range(n) for j in range(n)]
              + [f"psi_{i}{j}" for i in range(n) for j in range(n)] + ["det_f4"])
    det = fp.det_f4 if fp.det_f4 is not None else np.full(len(fp.t), np.nan)
    rows = np.column_stack([fp.t, fp.eta.reshape(len(fp.t), -1), fp.psi.reshape(len(fp.t), -1), det])
    return header, rows


def write_factor_pair(prefix, fp):
    """<prefix>.csv with the factor grid and <prefix>.json with the summary."""
    header, rows = factor_pair_rows(fp)
    write_csv(prefix + ".csv", header, rows)
    write_json(prefix + ".json", {"tau": fp.tau, "eps_det": fp.eps_det, "route": fp.route,
                                  "status": fp.status, "crossing": fp.crossing,
                                  "crossing_times": fp.crossing_times, "k": fp.k})
    return [prefix + ".csv", prefix + ".json"]


def write_alternate(prefix, fac):
    """JSON summary plus one CSV per factor pair (sampled psi and eta grids)."""
    files = [write_json(prefix + ".json", fac.summary())]
    n = fac.sampler.n
    for i, pf in enumerate(fac.factors):
        header = ([f"x{j}" for j in range(n)] + [f"psi{j}" for j in range(n)]
                  + [f"a{j}" for j in range(n)] + [f"eta{j}" for j in range(n)] + ["det"])
        rows = np.column_stack([pf.grid_points, pf.psi_values, pf.eta_points, pf.eta_values, pf.det])
        files.append(write_csv(f"{prefix}_factor{i + 1}.csv", header, rows))
    return files


def write_matrix_path(path, t, mats, name="g"):
    mats = np.asarray(mats)
    n, m = mats.shape[-2:]
    header = ["t"] + [f"{name}_{i}{j}" for i in range(n) for j in range(m)]
    return write_csv(path, header, np.column_stack([t, mats.reshape(len(t), -1)]))
