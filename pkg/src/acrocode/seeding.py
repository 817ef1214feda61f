"""Deterministic seed derivation for independent random components.

Every randomized component takes its own seed derived from the single
user-facing seed plus a component name, so adding or reordering components
never shifts the random streams of the others.
"""

from __future__ import annotations

import hashlib


def derive_seed(*parts: int | str) -> int:
    """Derive a sub-seed from a base seed and component labels.

    The derivation hashes the string forms of all parts, so it is stable
    across processes and platforms. Returns a non-negative int below 2**63.
    """
    if not parts:
        raise ValueError("derive_seed requires at least one part")
    material = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "big") >> 1
