"""Deterministic derivation of per-context seeds from one global seed."""

from __future__ import annotations

import hashlib


def derive_seed(*parts) -> int:
    """Hash the global seed together with context strings into a u63 seed.

    Stable across runs and platforms; changing any part (stage name,
    comparison, method, layer) decorrelates the stream.
    """
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
