"""Deterministic seed derivation for every random stage in the toolkit.

A single master seed feeds many independent consumers (per-tree samplers,
fold shufflers, split permutations, synthetic draws). Deriving each child
seed by hashing the master seed with a stage label keeps the streams
independent and reproducible without threading generator objects around.
"""
from __future__ import annotations

import hashlib


def derive_seed(seed: int, *labels: object) -> int:
    """Derive a child seed from ``seed`` and a sequence of stage labels.

    Parameters
    ----------
    seed : int
        Master seed.
    *labels : object
        Stage labels, e.g. ``("tree", 3)`` or ``("fold-model", 0)``.
        Converted with ``str`` and hashed.

    Returns
    -------
    int
        A 63-bit non-negative integer, stable across platforms and runs.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "big") >> 1
