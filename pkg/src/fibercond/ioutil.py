"""Deterministic, atomic file output.

All CSV values are formatted %.17g with LF line endings and all JSON is dumped
with sorted keys, so identical inputs produce byte-identical files on every
platform. Files are written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Sequence

import numpy as np


def format_value(v: float) -> str:
    return "%.17g" % float(v)


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv_atomic(path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    """Write columns of equal length as CSV with a mandatory header row."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    if len(cols) != len(header):
        raise ValueError("header/column count mismatch")
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(format_value(c[i]) for c in cols))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def write_json_atomic(path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_jsonl_atomic(path, rows: Sequence[dict]) -> None:
    _atomic_write_text(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
