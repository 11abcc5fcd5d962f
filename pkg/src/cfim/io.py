"""CSV/JSON table encoding and run manifests.

Floats are written with ``repr`` in both formats so a CSV cell and the
matching JSON number parse back to the same double.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os

from . import __version__

SCHEMA_VERSION = 1


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(v) for k, v in row.items()})
    return buf.getvalue()


def rows_to_json(rows: list[dict]) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, "rows": rows}, indent=2) + "\n"


def encode(rows: list[dict], fmt: str) -> str:
    if fmt == "csv":
        return rows_to_csv(rows)
    if fmt == "json":
        return rows_to_json(rows)
    raise ValueError(f"unknown format {fmt!r}")


def _parse_cell(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_csv(text: str) -> list[dict]:
    return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


def read_json(text: str) -> list[dict]:
    return json.loads(text)["rows"]


def same_values(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def timestamp() -> str:
    """UTC now, or ``SOURCE_DATE_EPOCH`` when set (reproducible builds)."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
            else _dt.datetime.now(_dt.timezone.utc))
    return when.isoformat(timespec="seconds")


def manifest(subcommand: str, config: dict, seed, outputs: dict[str, str], args: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "cfim",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "arguments": args,
        "timestamp": timestamp(),
        "outputs": {name: sha256_text(text) for name, text in outputs.items()},
    }


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_manifest(path, data: dict) -> None:
    write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")
