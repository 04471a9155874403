"""Deterministic JSONL / hashing helpers used by every stage."""

import hashlib
import json
from pathlib import Path


def dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def write_jsonl(path, rows) -> int:
    """Write rows as UTF-8, LF-terminated JSONL. Returns row count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(dumps(row))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_text(text: str) -> str:
    return sha256_bytes(text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stable_id(*parts: str, length: int = 16) -> str:
    """Content-addressed identifier: hash of the joined parts."""
    return sha256_text("\x1f".join(parts))[:length]


def derive_seed(global_seed: int, *keys: str) -> int:
    """Split a global seed into an independent per-key 64-bit stream seed."""
    h = hashlib.sha256(str(global_seed).encode("utf-8"))
    for key in keys:
        h.update(b"\x1f")
        h.update(key.encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big")
