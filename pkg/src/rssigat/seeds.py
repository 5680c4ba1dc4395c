"""Stable sub-seed derivation so one master seed drives every stage."""
from __future__ import annotations

import hashlib


def derive_seed(*parts) -> int:
    """Hash (master seed, stage name, ...) into a 63-bit generator seed.

    Stable across runs and platforms; any mix of ints and strings works.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
