"""Deterministic artifact writers. Every file starts with a config-hash/seed header."""

from __future__ import annotations

import csv
import io
import json
import os


def header_line(config_hash: str, seed) -> str:
    return f"# config_hash={config_hash} seed={seed}"


def write_text(path, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def csv_text(config_hash: str, seed, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(header_line(config_hash, seed) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def jsonl_text(config_hash: str, seed, records) -> str:
    head = {"type": "header", "config_hash": config_hash, "seed": seed}
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in [head, *records])
