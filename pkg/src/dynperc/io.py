"""Report serialization: JSON and CSV that read back bit-for-bit."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from typing import Any, Sequence

import numpy as np


def _plain(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def _revive(x: Any) -> Any:
    if isinstance(x, dict):
        return {k: _revive(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_revive(v) for v in x]
    if x in ("nan", "inf", "-inf"):
        return float(x)
    return x


def dumps(report: dict) -> str:
    # float repr is the shortest string that parses back to the same double
    return json.dumps(_plain(report), indent=2, sort_keys=True)


def loads(text: str) -> dict:
    return _revive(json.loads(text))


def config_hash(config: dict) -> str:
    blob = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def to_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else _plain(v) for v in row])
    return buf.getvalue()


def from_csv(text: str) -> tuple[list[str], list[list[float]]]:
    r = csv.reader(io.StringIO(text))
    header = next(r)
    return header, [[float(v) for v in row] for row in r]
