"""Deterministic per-component seed derivation.

All randomness flows from a single root seed; each component derives its
own seed as the first 8 little-endian bytes of SHA-256("<root>:<key>"), so
results do not depend on scheduling or job count.
"""

import hashlib


def derive_seed(root_seed, key):
    digest = hashlib.sha256(f"{root_seed}:{key}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
