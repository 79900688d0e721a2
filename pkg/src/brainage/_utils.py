"""Small shared helpers: seed derivation, stable hashing and JSON output."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np


def derive_seed(master: int, *tokens: Any) -> int:
    """Derive a 32-bit child seed from a master seed and arbitrary tokens.

    The derivation hashes the textual form of the tokens, so the result does
    not depend on process, platform or the order in which jobs are run.
    """
    h = hashlib.sha256(str(int(master)).encode())
    for tok in tokens:
        h.update(b"\x1f")
        h.update(str(tok).encode())
    return int.from_bytes(h.digest()[:4], "little")


def rng_for(master: int, *tokens: Any) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *tokens))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_tree(path: str | Path) -> str:
    """Hash every file below ``path`` (names and contents, sorted)."""
    path = Path(path)
    if path.is_file():
        return sha256_file(path)
    h = hashlib.sha256()
    for p in sorted(q for q in path.rglob("*") if q.is_file()):
        h.update(str(p.relative_to(path)).encode())
        h.update(sha256_file(p).encode())
    return h.hexdigest()


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str | Path) -> Any:
    with open(path) as fh:
        return json.load(fh)


def fmt_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))
