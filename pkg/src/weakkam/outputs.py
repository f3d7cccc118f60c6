"""Reproducible output files: every file carries the effective config and a content hash.

JSON files get top-level ``config`` and ``content_sha256`` keys; the hash
covers the canonical JSON of everything else.  CSV files start with
``# config: <json>`` and ``# content_sha256: <hex>`` comment lines; the hash
covers the CSV body below them.  The binary value table keeps its fixed
layout, and its hash is recorded in ``solution.json``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def json_document(payload: dict, config: dict) -> str:
    body = dict(payload)
    body["config"] = config
    body["content_sha256"] = sha256(canonical_json({k: v for k, v in body.items() if k != "config"}).encode())
    return json.dumps(body, sort_keys=True, indent=2) + "\n"


def csv_document(body: str, config: dict) -> str:
    head = f"# config: {canonical_json(config)}\n# content_sha256: {sha256(body.encode())}\n"
    return head + body


def write_json(path: Path, payload: dict, config: dict) -> None:
    path.write_text(json_document(payload, config))


def write_csv(path: Path, body: str, config: dict) -> None:
    path.write_text(csv_document(body, config))


def read_csv_body(text: str) -> str:
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def check_csv(text: str) -> bool:
    """True when the embedded content hash matches the body."""
    for line in text.splitlines():
        if line.startswith("# content_sha256: "):
            return line.split(": ", 1)[1].strip() == sha256(read_csv_body(text).encode())
    return False


def check_json(text: str) -> bool:
    doc = json.loads(text)
    claimed = doc.pop("content_sha256", None)
    doc.pop("config", None)
    return claimed == sha256(canonical_json(doc).encode())
