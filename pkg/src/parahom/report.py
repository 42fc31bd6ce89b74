"""CSV/JSON serialisation of experiment records.

CSV numbers use 17 significant digits, so every double survives a round trip.
JSON uses the shortest repr of each float, which is exact as well.
"""

from __future__ import annotations

import io
import json
import math
from typing import Optional, Sequence

import numpy as np

from . import __version__


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _rows(records) -> list:
    out = []
    for r in records:
        if hasattr(r, "rows"):
            out.extend(r.rows())
        elif hasattr(r, "to_dict"):
            out.append(r.to_dict())
        else:
            out.append(dict(r))
    return out


def _plain(v):
    """Convert numpy scalars/arrays and tuples into JSON-native values."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if hasattr(v, "to_dict"):
        return _plain(v.to_dict())
    return v


def emit_report(records, fmt: str = "csv", header: Optional[Sequence[str]] = None, meta: Optional[dict] = None) -> bytes:
    """Serialise records (dicts, or objects with rows()/to_dict()).

    csv: one line per row, header from ``header`` or the first row's keys.
    json: {"version", **meta, "records": [...]}.
    """
    records = list(records) if records is not None else []
    if not records:
        raise ValueError("no records to emit")
    if fmt == "csv":
        rows = _rows(records)
        cols = list(header) if header is not None else list(rows[0].keys())
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for r in rows:
            buf.write(",".join(_fmt(r.get(c, "")) for c in cols) + "\n")
        return buf.getvalue().encode()
    if fmt == "json":
        doc = {"version": __version__}
        if meta:
            doc.update(_plain(meta))
        doc["records"] = _plain(_rows(records))
        return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()
    raise ValueError(f"unknown format {fmt!r}")


def parse_report(data: bytes, fmt: str = "json"):
    if fmt == "json":
        return json.loads(data.decode())
    lines = data.decode().splitlines()
    cols = lines[0].split(",")
    return [dict(zip(cols, ln.split(","))) for ln in lines[1:]]
