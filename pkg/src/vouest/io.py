"""File formats.

CSV files use RFC 4180 quoting, CRLF line ends and 17 significant digits, so
doubles survive a write/read round trip bit for bit.

Binary path batches (``.vpb``)::

    offset 0   8 bytes   magic b"VOUPATH1"
    offset 8   uint32    little-endian length H of the JSON header
    offset 12  H bytes   UTF-8 JSON header
    then       float64   little-endian values, row-major, shape (n_paths, n + 1)
    then       float64   noise, row-major, shape (n_paths, n_noise), if header["noise"]

The header holds ``kernel`` (kernel JSON object), ``params``, ``seed``,
``scheme``, ``grid_step``, ``n_paths``, ``n``, ``first`` and ``n_noise``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import UsageError
from .kernels import kernel_from_dict
from .simulate import PathBatch, VouParams

MAGIC = b"VOUPATH1"


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty CSV file")
    return rows[0], rows[1:]


def write_path_csv(path, times, values) -> Path:
    return write_csv(path, ["t", "X"], zip(np.asarray(times, float), np.asarray(values, float)))


def read_path_csv(path) -> tuple[np.ndarray, np.ndarray]:
    header, rows = read_csv(path)
    if [h.strip() for h in header[:2]] != ["t", "X"]:
        raise UsageError(f"{path}: expected columns t, X")
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows])
    except (ValueError, IndexError) as exc:
        raise UsageError(f"{path}: malformed row ({exc})") from exc
    if data.shape[0] < 2:
        raise UsageError(f"{path}: a path needs at least two samples")
    return data[:, 0], data[:, 1]


def uniform_step(times: np.ndarray) -> float:
    d = np.diff(times)
    if times[0] != 0.0 or np.any(d <= 0) or np.max(np.abs(d - d[0])) > 1e-9 * d[0]:
        raise UsageError("path times must start at 0 and be uniformly spaced")
    return float((times[-1] - times[0]) / (times.shape[0] - 1))


def write_batch(path, batch: PathBatch) -> Path:
    noise = batch.noise
    header = {
        "kernel": batch.kernel.to_dict(), "params": batch.params.to_dict(), "seed": int(batch.seed),
        "scheme": batch.scheme, "grid_step": float(batch.grid_step), "n_paths": int(batch.n_paths),
        "n": int(batch.n), "first": int(batch.first), "noise": noise is not None,
        "n_noise": int(noise.shape[1]) if noise is not None else 0, "meta": batch.meta,
    }
    raw = json.dumps(header, sort_keys=True, default=float).encode()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(batch.values, dtype="<f8").tobytes())
        if noise is not None:
            fh.write(np.ascontiguousarray(noise, dtype="<f8").tobytes())
    return path


def read_batch(path) -> PathBatch:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise UsageError(f"{path}: not a path batch file")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hlen].decode())
    off = 12 + hlen
    shape = (header["n_paths"], header["n"] + 1)
    count = shape[0] * shape[1]
    values = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).copy()
    noise = None
    if header["noise"]:
        off += 8 * count
        nshape = (header["n_paths"], header["n_noise"])
        noise = np.frombuffer(data, dtype="<f8", count=nshape[0] * nshape[1], offset=off).reshape(nshape).copy()
    p = header["params"]
    params = VouParams(p["b"], p["beta"], p["sigma"], p["x0"], allow_zero_sigma=True)
    return PathBatch(kernel_from_dict(header["kernel"]), params, header["grid_step"], values,
                     header["seed"], header["scheme"], header["first"], noise, header.get("meta", {}))


ESTIMATE_COLUMNS = ["method", "T", "n", "m", "b_hat", "beta_hat", "f_denominator", "seed"]


def write_estimates(path, estimates) -> Path:
    rows = [[getattr(e, c) if getattr(e, c) is not None else "" for c in ESTIMATE_COLUMNS] for e in estimates]
    return write_csv(path, ESTIMATE_COLUMNS, rows)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files, extra: dict | None = None) -> Path:
    out = Path(out_dir)
    entries = sorted({Path(f).resolve() for f in files})
    manifest = {"files": [{"path": str(p.relative_to(out.resolve())), "sha256": sha256(p),
                           "bytes": p.stat().st_size} for p in entries]}
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return path
