"""CSV emission with reproducibility headers.

Every file starts with ``# key: value`` comment lines that carry the
command, the seed and a fingerprint of the configuration, followed by a
single header row and comma separated data rows with LF line endings.
Floats are written with ``repr`` so the bytes are a pure function of the
values.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

# fields that must never influence output bytes
VOLATILE_FIELDS = frozenset({"threads", "output_dir"})


def format_value(v) -> str:
    """Deterministic text for one CSV cell."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):
        return format_value(v.item())
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if v is None:
        return ""
    return str(v)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def config_fingerprint(config: Mapping) -> str:
    """sha256 prefix of the canonical config with volatile fields removed."""
    stable = {k: v for k, v in config.items() if k not in VOLATILE_FIELDS}
    return hashlib.sha256(canonical_json(stable).encode()).hexdigest()[:16]


def render_csv(header: Mapping[str, object], columns: Sequence[str],
               rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    for k, v in header.items():
        buf.write(f"# {k}: {format_value(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(x) for x in r])
    return buf.getvalue()


def write_csv(path: Path, header: Mapping[str, object], columns: Sequence[str],
              rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(render_csv(header, columns, rows))
    return path


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2, default=_json_default, allow_nan=True))
        fh.write("\n")
    return path


def read_csv(path: Path) -> tuple[dict, list[str], list[list[str]]]:
    """Inverse of :func:`write_csv` (values stay as text)."""
    header = {}
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    body = []
    for ln in lines:
        if ln.startswith("# "):
            k, _, v = ln[2:].partition(": ")
            header[k] = v
        elif ln:
            body.append(ln)
    rows = list(csv.reader(body))
    return header, rows[0], rows[1:]
