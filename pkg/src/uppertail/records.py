"""Versioned JSON-lines result records.

A run writes a ``header`` line (schema version, config echo, timestamp),
optional ``trial`` lines, a ``summary`` line and a closing ``end`` line.  A
run that is interrupted closes with a ``truncated`` line instead.  Only the
header carries a timestamp, so payload lines of repeated runs compare equal
byte for byte.
"""
from __future__ import annotations

import dataclasses
import json
from datetime import datetime, timezone

import numpy as np

from .errors import SchemaError

SCHEMA_VERSION = "1.0"
KINDS = ("header", "trial", "summary", "end", "truncated")


def _default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return dataclasses.asdict(obj)
    if isinstance(obj, (tuple, set)):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(record: dict) -> str:
    return json.dumps(record, default=_default, sort_keys=True, separators=(",", ":"))


def check_version(version) -> None:
    if not isinstance(version, str) or "." not in version:
        raise SchemaError(f"malformed schema_version {version!r}")
    major = version.split(".")[0]
    if major != SCHEMA_VERSION.split(".")[0]:
        raise SchemaError(f"unsupported schema major version {major} "
                          f"(reader understands {SCHEMA_VERSION})")


def header(config: dict, timestamp: str | None = None) -> dict:
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return {"kind": "header", "schema_version": SCHEMA_VERSION, "config": config,
            "timestamp": timestamp}


class RecordWriter:
    """Single owner of an output stream; flushes each line as it is written."""

    def __init__(self, stream, config: dict, timestamp: str | None = None):
        self.stream = stream
        self.closed = False
        self._write(header(config, timestamp))

    def _write(self, rec):
        self.stream.write(dumps(rec) + "\n")
        self.stream.flush()

    def trial(self, row: dict):
        self._write({"kind": "trial", **row})

    def summary(self, payload: dict):
        self._write({"kind": "summary", "payload": payload})

    def end(self, status: int):
        self._write({"kind": "end", "status": status})
        self.closed = True

    def truncated(self, reason: str, status: int):
        self._write({"kind": "truncated", "reason": reason, "status": status})
        self.closed = True


@dataclasses.dataclass
class ResultRecord:
    schema_version: str
    config: dict
    timestamp: str
    payload: dict | None
    rows: list
    status: int | None
    truncated: bool = False
    reason: str = ""

    def to_lines(self) -> list[str]:
        lines = [dumps({"kind": "header", "schema_version": self.schema_version,
                        "config": self.config, "timestamp": self.timestamp})]
        lines += [dumps({"kind": "trial", **r}) for r in self.rows]
        if self.payload is not None:
            lines.append(dumps({"kind": "summary", "payload": self.payload}))
        if self.status is not None:
            closing = {"kind": "truncated", "reason": self.reason, "status": self.status} \
                if self.truncated else {"kind": "end", "status": self.status}
            lines.append(dumps(closing))
        return lines

    def payload_lines(self) -> list[str]:
        """Every line but the header: the part that must reproduce exactly."""
        return self.to_lines()[1:]


def parse_lines(lines) -> ResultRecord:
    recs = [json.loads(line) for line in lines if line.strip()]
    if not recs or recs[0].get("kind") != "header":
        raise SchemaError("stream does not start with a header record")
    head = recs[0]
    check_version(head.get("schema_version"))
    rows, payload, status, truncated, reason = [], None, None, False, ""
    for rec in recs[1:]:
        kind = rec.pop("kind", None)
        if kind == "trial":
            rows.append(rec)
        elif kind == "summary":
            payload = rec["payload"]
        elif kind in ("end", "truncated"):
            status = rec.get("status")
            truncated = kind == "truncated"
            reason = rec.get("reason", "")
        else:
            raise SchemaError(f"unknown record kind {kind!r}")
    return ResultRecord(head["schema_version"], head["config"], head["timestamp"],
                        payload, rows, status, truncated, reason)


def read_records(path) -> ResultRecord:
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh)
