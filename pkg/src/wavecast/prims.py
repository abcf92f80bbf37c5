"""Deterministic data-parallel primitives: scan, compact, stable sort-by-key.

Backed by numpy, but the contracts are sequential: outputs must match a
plain loop bit-exactly, and sort_by_key must be stable so equal keys keep
their input order. Everything downstream relies on that determinism.
"""

from __future__ import annotations

import numpy as np


def exclusive_scan(values: np.ndarray) -> tuple[np.ndarray, int]:
    """Exclusive prefix sum. Returns (out, total) with out[i] = sum(values[:i])."""
    values = np.asarray(values)
    totals = np.cumsum(values.astype(np.uint64))
    total = int(totals[-1]) if len(values) else 0
    assert total <= 0xFFFFFFFF, "scan total overflows 32 bits"
    out = np.empty(len(values), dtype=np.uint32)
    if len(values):
        out[0] = 0
        out[1:] = totals[:-1]
    return out, total


def compact(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Keep values[i] where mask[i] is nonzero, preserving order."""
    values = np.asarray(values)
    mask = np.asarray(mask)
    assert values.shape[0] == mask.shape[0], "compact: length mismatch"
    return values[mask.astype(bool)]


def sort_by_key(keys: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stable sort of (keys, values) by ascending key."""
    keys = np.asarray(keys)
    values = np.asarray(values)
    assert keys.shape[0] == values.shape[0], "sort_by_key: length mismatch"
    order = np.argsort(keys, kind="stable")
    return keys[order], values[order]
