"""CSV and JSON artifacts.

Every CSV starts with a ``# config_hash: <sha256>`` comment line followed by
an RFC-4180 header; floats are written with 17 significant digits so that
identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

__all__ = ["config_hash", "write_csv", "read_csv", "write_json"]

FLOAT_FMT = "%.17g"


def config_hash(payload: dict) -> str:
    """SHA-256 of the canonical JSON form of ``payload``."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_default)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    return str(value)


def write_csv(path: Path, columns: dict[str, np.ndarray | list], digest: str) -> Path:
    """Write equal-length ``columns`` (in insertion order) to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    n = {c.shape[0] for c in cols}
    if len(n) > 1:
        raise ValueError("columns must have equal length")
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash: {digest}\r\n")
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(names)
        for row in zip(*cols):
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[str, dict[str, list[str]]]:
    """Return ``(config_hash, columns)`` of a file written by :func:`write_csv`."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        digest = first.split(":", 1)[1].strip() if first.startswith("# config_hash:") else ""
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[str]] = {h: [] for h in header}
        for row in reader:
            for h, v in zip(header, row):
                cols[h].append(v)
    return digest, cols


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_default) + "\n", encoding="utf-8")
    return path
