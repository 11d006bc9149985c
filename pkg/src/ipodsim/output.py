"""CSV / JSONL writers with a provenance header and atomic replace."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

SCHEMA_VERSION = 1


def _provenance(seed, config):
    meta = {"schema_version": SCHEMA_VERSION, "master_seed": seed}
    if config:
        meta["config"] = config
    return meta


def render(records, fmt: str, seed=None, config=None, columns=None) -> str:
    """Serialize ``records`` (dicts) to text.

    CSV: one ``#``-prefixed provenance line, the column row, then one row
    per record. JSONL: a provenance object followed by one object per record.
    """
    records = list(records)
    meta = _provenance(seed, config)
    buf = io.StringIO()
    if fmt == "csv":
        if columns is None:
            if not records:
                raise ValueError("columns are required for an empty CSV")
            columns = list(records[0])
        buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for rec in records:
            writer.writerow({k: _fmt(v) for k, v in rec.items()})
    elif fmt == "jsonl":
        buf.write(json.dumps(meta, sort_keys=True) + "\n")
        for rec in records:
            buf.write(json.dumps(rec, sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def emit(records, fmt: str, path, seed=None, config=None, columns=None) -> None:
    """Write atomically: render to a temp file in the target directory, then rename."""
    text = render(records, fmt, seed=seed, config=config, columns=columns)
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    tmp = None
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"could not write {path}: {exc}") from exc
