"""Config loading, hashing and atomic report/CSV writing."""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import tomli

from .errors import ConfigurationError


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    text = path.read_text()
    try:
        if path.suffix.lower() == ".toml":
            return tomli.loads(text)
        return json.loads(text)
    except (json.JSONDecodeError, tomli.TOMLDecodeError) as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode())


def write_json(path, obj):
    atomic_write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_jsonable(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def histogram_rows(values, bins: int = 60, span: float = 3.0, scale: float = np.sqrt(0.5)):
    """Histogram rows (bin_left, bin_right, count, gaussian_pdf_reference).

    The reference column is the N(0, scale^2) density at the bin centre.
    """
    values = np.asarray(values, dtype=float).ravel()
    edges = np.linspace(-span, span, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    mid = (edges[:-1] + edges[1:]) / 2
    pdf = np.exp(-(mid**2) / (2 * scale**2)) / (scale * np.sqrt(2 * np.pi))
    return [(float(a), float(b), int(c), float(p)) for a, b, c, p in zip(edges[:-1], edges[1:], counts, pdf)]


HISTOGRAM_HEADER = ["bin_left", "bin_right", "count", "gaussian_pdf_reference"]
