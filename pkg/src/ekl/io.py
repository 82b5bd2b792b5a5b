"""Model files and CSV datasets.

Model file layout (all integers little-endian)::

    8 bytes   magic b"EKLMODEL"
    uint32    format version
    uint64    header length in bytes
    header    UTF-8 JSON: scalars plus the name, shape and byte offset of each array
    payload   arrays as contiguous little-endian float64 ('<f8'), C order

Writes go to a temporary file in the target directory and are moved into
place with ``os.replace``, so a failed write never leaves a partial file.
"""
from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from contextlib import contextmanager

import numpy as np

from .features import FeatureMap
from .harness import Dataset
from .ovk import EntangledModel
from .solver import FitResult

MAGIC = b"EKLMODEL"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class ModelFormatError(ValueError):
    pass


@contextmanager
def atomic_write(path, mode="wb"):
    """Open a temporary sibling of ``path`` and rename it over ``path`` on success."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=folder)
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"newline": "", "encoding": "utf-8"})) as fh:
            yield fh
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack(header: dict, arrays: dict) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    header = dict(header, arrays=entries)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + b"".join(chunks)


def _unpack(raw: bytes) -> tuple[dict, dict]:
    if len(raw) < _PREFIX.size:
        raise ModelFormatError("file too short for a model header")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    start = _PREFIX.size + hlen
    if start > len(raw):
        raise ModelFormatError("truncated model header")
    try:
        header = json.loads(raw[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt model header: {exc}") from None
    arrays = {}
    for e in header.pop("arrays"):
        count = int(np.prod(e["shape"], dtype=np.int64))
        lo = start + e["offset"]
        if lo + 8 * count > len(raw):
            raise ModelFormatError(f"truncated array {e['name']!r}")
        arrays[e["name"]] = np.frombuffer(raw, dtype="<f8", count=count, offset=lo).reshape(e["shape"]).astype(float)
    return header, arrays


def save_model(path, fit: FitResult, seed: int | None = None, extra: dict | None = None) -> None:
    """Write an ``ovk`` or ``scalar`` fit (model, training features and coefficients)."""
    if fit.mode not in ("ovk", "scalar") or fit.model is None or fit.model.feature_map is None:
        raise ValueError("only entangled fits with a feature map can be saved")
    em = fit.model
    fm = em.feature_map
    header = {"mode": fit.mode, "p": em.p, "m": em.m, "r": em.r, "gamma": em.gamma,
              "lambda": fit.lam, "seed": seed, "feature_map": fm.to_dict(),
              "feature_params": sorted(fm.params), "extra": extra or {}}
    arrays = {"Q": em.Q, "Phi_train": fit.train, "coefficients": fit.coefficients}
    for name in sorted(fm.params):
        arrays["fm_" + name] = fm.params[name]
    payload = _pack(header, arrays)
    with atomic_write(path) as fh:
        fh.write(payload)


def load_model(path) -> tuple[FitResult, dict]:
    """Read a model file; returns the fit and the JSON header."""
    with open(path, "rb") as fh:
        raw = fh.read()
    header, arrays = _unpack(raw)
    try:
        fm = FeatureMap.from_dict(header["feature_map"],
                                  {k: arrays["fm_" + k] for k in header["feature_params"]})
        em = EntangledModel(arrays["Q"], int(header["p"]), fm, gamma=float(header["gamma"]),
                            lam=float(header["lambda"]))
        fit = FitResult(header["mode"], arrays["coefficients"], float(header["lambda"]), model=em,
                        train=arrays["Phi_train"])
    except KeyError as exc:
        raise ModelFormatError(f"model file is missing {exc}") from None
    return fit, header


# CSV -------------------------------------------------------------------------------


def load_csv(path, p: int, layout: str = "tail", header: bool = False, output_columns=None) -> Dataset:
    """Read a numeric CSV with one sample per row.

    ``layout="tail"`` takes the last ``p`` columns as outputs. ``layout="columns"``
    takes the zero-based ``output_columns`` instead. Remaining columns are inputs.
    """
    try:
        A = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2, encoding="utf-8")
    except ValueError as exc:
        raise ValueError(f"cannot parse {path}: {exc}") from None
    if A.size == 0:
        raise ValueError(f"{path} contains no samples")
    if not np.isfinite(A).all():
        raise ValueError(f"{path} contains non-finite values")
    cols = A.shape[1]
    if layout == "tail":
        if not 1 <= p < cols:
            raise ValueError(f"p = {p} outputs leaves no inputs among {cols} columns")
        out = np.arange(cols - p, cols)
    elif layout == "columns":
        out = np.asarray(output_columns if output_columns is not None else [], dtype=int)
        if out.size != p or len(set(out.tolist())) != p or out.min() < 0 or out.max() >= cols:
            raise ValueError("output_columns must list p distinct valid column indices")
        if p >= cols:
            raise ValueError("no input columns left")
    else:
        raise ValueError(f"unknown layout {layout!r}")
    inp = np.setdiff1d(np.arange(cols), out)
    return Dataset(A[:, inp], A[:, out].T)


def save_csv(path, ds: Dataset, header: bool = False) -> None:
    """Write ``ds`` as rows ``[x_i, y_i]`` (the ``tail`` layout)."""
    A = np.hstack([ds.X, ds.Y.T])
    with atomic_write(path, "w") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{j}" for j in range(ds.d)] + [f"y{s}" for s in range(ds.p)])
        w.writerows([[repr(float(v)) for v in row] for row in A])


def save_matrix_csv(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with atomic_write(path, "w") as fh:
        csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in M])


def load_matrix_csv(path, header: bool = False) -> np.ndarray:
    try:
        M = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2, encoding="utf-8")
    except ValueError as exc:
        raise ValueError(f"cannot parse {path}: {exc}") from None
    if not np.isfinite(M).all():
        raise ValueError(f"{path} contains non-finite values")
    return M


def save_rows(path, rows, columns) -> None:
    """Write result dictionaries as CSV with a fixed column order."""
    with atomic_write(path, "w") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
