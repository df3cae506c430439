"""Flat-file emission: CSV with '#' metadata lines and versioned JSON."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

SCHEMA = "rabiknots/1"

__all__ = ["SCHEMA", "to_jsonable", "write_csv", "read_csv", "write_json", "read_json", "atomic_write"]


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ""
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return str(v)


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` through a temporary file and rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(columns, rows, meta: dict = None) -> str:
    """CSV text from dict rows; metadata become '# key: <json>' lines above the header."""
    buf = io.StringIO()
    buf.write(f"# schema: {SCHEMA}\n")
    for key, value in (meta or {}).items():
        buf.write(f"# {key}: {json.dumps(to_jsonable(value), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def read_csv(source):
    """Parse text or a path written by :func:`write_csv` into (meta, rows).

    Rows are dicts of raw strings; empty cells become None.
    """
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = str(source)
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            key, value = key.strip(), value.strip()
            if key == "schema":
                meta[key] = value
            else:
                try:
                    meta[key] = json.loads(value)
                except json.JSONDecodeError:
                    meta[key] = value
        elif line.strip():
            body.append(line)
    rows = []
    reader = csv.DictReader(body)
    for r in reader:
        rows.append({k: (v if v != "" else None) for k, v in r.items()})
    return meta, rows


def write_json(params: dict, data, **extra) -> str:
    doc = {"schema": SCHEMA, "params": to_jsonable(params), "data": to_jsonable(data)}
    doc.update(to_jsonable(extra))
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def read_json(source):
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, encoding="utf-8") as fh:
            return json.load(fh)
    return json.loads(source)
