"""Slot-addressed LRU cache of decompressed blocks, updated once per pass.

Recency is tracked at pass granularity: every block active in a pass gets
that pass number stamped. Eviction picks the resident block that is not
active this pass with the smallest stamp, breaking ties on the smaller
block ID, so behavior is fully deterministic and a sequential simulator
can reproduce it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import CompressedVolume, decompress_blocks_into


@dataclass(frozen=True)
class CacheUpdateStats:
    new_decompressed: int
    evicted: int
    grown_to: int


class BlockCache:
    def __init__(self, capacity_slots: int):
        capacity_slots = max(1, int(capacity_slots))
        self.capacity_slots = capacity_slots
        self.slot_values = np.zeros((capacity_slots, 64), dtype=np.float32)
        self.block_of_slot = np.full(capacity_slots, -1, dtype=np.int64)
        self.last_used_pass = np.zeros(capacity_slots, dtype=np.int64)
        self.current_pass = 0
        self._slot_of_block: np.ndarray | None = None  # sized on first update

    def _ensure_map(self, block_count: int) -> np.ndarray:
        if self._slot_of_block is None:
            self._slot_of_block = np.full(block_count, -1, dtype=np.int64)
        return self._slot_of_block

    def _grow(self, new_capacity: int) -> None:
        extra = new_capacity - self.capacity_slots
        self.slot_values = np.vstack(
            [self.slot_values, np.zeros((extra, 64), dtype=np.float32)]
        )
        self.block_of_slot = np.concatenate(
            [self.block_of_slot, np.full(extra, -1, dtype=np.int64)]
        )
        self.last_used_pass = np.concatenate(
            [self.last_used_pass, np.zeros(extra, dtype=np.int64)]
        )
        self.capacity_slots = new_capacity

    def lookup(self, block_id: int):
        """Slot index of a resident block, or None. Never touches recency."""
        if self._slot_of_block is None:
            return None
        slot = int(self._slot_of_block[block_id])
        return slot if slot >= 0 else None

    @property
    def resident_blocks(self) -> np.ndarray:
        return np.sort(self.block_of_slot[self.block_of_slot >= 0])

    def ensure_resident(self, active_mask: np.ndarray, cv: CompressedVolume) -> CacheUpdateStats:
        """Make every block flagged in active_mask resident, evicting LRU
        inactive blocks as needed and growing if the active set cannot fit."""
        self.current_pass += 1
        slot_map = self._ensure_map(len(active_mask))
        active_ids = np.nonzero(active_mask)[0].astype(np.int64)
        needed = len(active_ids)

        if needed > self.capacity_slots:
            self._grow(math.ceil(1.5 * needed))

        slots = slot_map[active_ids]
        hit_slots = slots[slots >= 0]
        self.last_used_pass[hit_slots] = self.current_pass
        miss_ids = active_ids[slots < 0]

        evicted = 0
        if len(miss_ids):
            free_slots = np.nonzero(self.block_of_slot < 0)[0]
            n_evict = len(miss_ids) - len(free_slots)
            if n_evict > 0:
                # blocks stamped this pass are active and protected
                candidates = np.nonzero(
                    (self.block_of_slot >= 0) & (self.last_used_pass < self.current_pass)
                )[0]
                order = np.lexsort(
                    (self.block_of_slot[candidates], self.last_used_pass[candidates])
                )
                victims = candidates[order[:n_evict]]
                slot_map[self.block_of_slot[victims]] = -1
                self.block_of_slot[victims] = -1
                evicted = len(victims)
                free_slots = np.concatenate([free_slots, victims])
            target_slots = free_slots[: len(miss_ids)]
            fresh = np.empty((len(miss_ids), 64), dtype=np.float32)
            decompress_blocks_into(cv, miss_ids, fresh)
            self.slot_values[target_slots] = fresh
            self.block_of_slot[target_slots] = miss_ids
            self.last_used_pass[target_slots] = self.current_pass
            slot_map[miss_ids] = target_slots

        return CacheUpdateStats(
            new_decompressed=len(miss_ids),
            evicted=evicted,
            grown_to=self.capacity_slots,
        )


def ensure_resident(cache: BlockCache, active_mask: np.ndarray, cv: CompressedVolume) -> CacheUpdateStats:
    return cache.ensure_resident(active_mask, cv)


def lookup(cache: BlockCache, block_id: int):
    return cache.lookup(block_id)


def initial_capacity(w: int, h: int) -> int:
    """Default cache sizing: twice the expected visible blocks (w*h/64),
    floored at 1024 slots."""
    return max(1024, 2 * (w * h) // 64)
