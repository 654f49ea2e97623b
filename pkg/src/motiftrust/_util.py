"""Small shared helpers: canonical JSON, hashing, validation errors."""

import hashlib
import json


class ValidationError(ValueError):
    """Bad configuration or malformed input data (CLI exit code 3)."""


def canonical_json(obj) -> str:
    # sorted keys + fixed separators so identical content hashes identically
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_tree(root) -> str:
    """Combined content hash of every file under a directory (sorted paths)."""
    import os

    parts = []
    for dirpath, _, filenames in os.walk(root):
        for name in sorted(filenames):
            path = os.path.join(dirpath, name)
            rel = os.path.relpath(path, root)
            parts.append(f"{rel}:{sha256_file(path)}")
    return hashlib.sha256("\n".join(sorted(parts)).encode()).hexdigest()


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(obj, sort_keys=True, indent=2))
        f.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
