"""Stable content digests for artifacts and fingerprints."""

from __future__ import annotations

import hashlib

import numpy as np


def digest_parts(*parts: object) -> str:
    """SHA-256 over a length-prefixed encoding of strings/bytes/ints/arrays.

    Length prefixes keep adjacent parts from running together, so the digest
    is injective over the part sequence.
    """
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            blob = np.ascontiguousarray(part).tobytes()
            kind = b"a" + str(part.dtype).encode() + b":" + str(part.shape).encode()
        elif isinstance(part, bytes):
            blob, kind = part, b"b"
        elif isinstance(part, str):
            blob, kind = part.encode("utf-8"), b"s"
        elif isinstance(part, bool):
            blob, kind = (b"\x01" if part else b"\x00"), b"t"
        elif isinstance(part, int):
            blob, kind = str(part).encode(), b"i"
        elif isinstance(part, float):
            blob, kind = part.hex().encode(), b"f"
        elif part is None:
            blob, kind = b"", b"n"
        else:
            raise TypeError(f"cannot digest part of type {type(part).__name__}")
        h.update(kind)
        h.update(str(len(blob)).encode())
        h.update(b":")
        h.update(blob)
    return h.hexdigest()
