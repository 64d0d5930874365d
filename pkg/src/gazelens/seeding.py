"""Deterministic seed derivation for independent random streams.

A single master seed fans out to named component streams by hashing the
component name into the seed. Adding a new component never shifts the
streams of existing ones.
"""
from __future__ import annotations

import hashlib

_MASK = (1 << 64) - 1


def derive_seed(master: int, *components: str | int) -> int:
    """Derive a 64-bit seed from a master seed and a component path.

    Components are joined into a canonical string such as
    ``"cv/t3/cand7/v2"`` and mixed with the master seed via SHA-256.
    """
    path = "/".join(str(c) for c in components)
    digest = hashlib.sha256(f"{master & _MASK}\x1f{path}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
