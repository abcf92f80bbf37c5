"""Two-level value-range grids for empty-space skipping.

The fine grid has one cell per compressed block, the coarse grid groups
4^3 blocks (16^3 voxels) per cell. Each cell's range is the union of its
own blocks' ranges and those of its positive-octant neighbors, because a
cell's dual grid borrows one vertex layer from the +x/y/z side.

Ranges come from the source data but the renderer intersects decoded
data, so every contributing block's range is widened by that block's
quantization error bound before the union. Without this, a value pushed
across the isovalue by quantization could crack the surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import CompressedVolume


@dataclass(frozen=True)
class ValueRange:
    min: float
    max: float

    def contains(self, iso: float) -> bool:
        return self.min <= iso <= self.max


@dataclass(frozen=True)
class MacrocellGrids:
    fine_dims: tuple[int, int, int]
    fine_min: np.ndarray    # float64 per block, neighbor-expanded and widened
    fine_max: np.ndarray
    coarse_dims: tuple[int, int, int]
    coarse_min: np.ndarray  # float64 per coarse cell
    coarse_max: np.ndarray

    def fine_range(self, block_id: int) -> ValueRange:
        return ValueRange(float(self.fine_min[block_id]), float(self.fine_max[block_id]))

    def coarse_range(self, cell_id: int) -> ValueRange:
        return ValueRange(float(self.coarse_min[cell_id]), float(self.coarse_max[cell_id]))


def _octant_union(a: np.ndarray, reduce, fill: float) -> np.ndarray:
    """Per cell, reduce over the 2x2x2 window anchored at the cell."""
    dz, dy, dx = a.shape
    p = np.pad(a, ((0, 1), (0, 1), (0, 1)), constant_values=fill)
    out = np.full_like(a, fill)
    for oz in (0, 1):
        for oy in (0, 1):
            for ox in (0, 1):
                out = reduce(out, p[oz : oz + dz, oy : oy + dy, ox : ox + dx])
    return out


def _group4(a: np.ndarray, reduce_axis, fill: float) -> np.ndarray:
    dz, dy, dx = a.shape
    cz, cy, cx = -(dz // -4), -(dy // -4), -(dx // -4)
    p = np.pad(
        a,
        ((0, cz * 4 - dz), (0, cy * 4 - dy), (0, cx * 4 - dx)),
        constant_values=fill,
    )
    return reduce_axis(p.reshape(cz, 4, cy, 4, cx, 4), axis=(1, 3, 5))


def build_grids(cv: CompressedVolume) -> MacrocellGrids:
    """Build the fine and coarse value-range grids from block metadata."""
    bdx, bdy, bdz = cv.block_dims
    bounds = cv.block_error_bounds.reshape(bdz, bdy, bdx)
    wmin = cv.raw_block_ranges[:, 0].astype(np.float64).reshape(bdz, bdy, bdx) - bounds
    wmax = cv.raw_block_ranges[:, 1].astype(np.float64).reshape(bdz, bdy, bdx) + bounds

    fine_min = _octant_union(wmin, np.minimum, np.inf)
    fine_max = _octant_union(wmax, np.maximum, -np.inf)

    coarse_raw_min = _group4(wmin, np.min, np.inf)
    coarse_raw_max = _group4(wmax, np.max, -np.inf)
    coarse_min = _octant_union(coarse_raw_min, np.minimum, np.inf)
    coarse_max = _octant_union(coarse_raw_max, np.maximum, -np.inf)

    cdz, cdy, cdx = coarse_min.shape
    return MacrocellGrids(
        fine_dims=(bdx, bdy, bdz),
        fine_min=fine_min.reshape(-1),
        fine_max=fine_max.reshape(-1),
        coarse_dims=(cdx, cdy, cdz),
        coarse_min=coarse_min.reshape(-1),
        coarse_max=coarse_max.reshape(-1),
    )
