"""Progressive wavefront isosurface raycasting over block-compressed volumes."""

from .blocktrace import DualGrid, assemble_dual_grid, intersect_cell, raytrace_block, shade
from .cache import BlockCache, CacheUpdateStats
from .codec import CompressedVolume, compress_volume, decompress_block, read_wcz, write_wcz
from .engine import (
    Framebuffer,
    PassBuffers,
    PassStats,
    RenderOptions,
    compute_n_spec,
    render,
    render_passes,
)
from .grids import MacrocellGrids, ValueRange, build_grids
from .oracle import compare_images, decode_full, reference_render
from .traversal import Camera, RaySoA, init_rays, traverse_to_next_blocks
from .volume import Volume, load_raw, save_raw, synthesize

__version__ = "0.1.0"

__all__ = [
    "BlockCache",
    "CacheUpdateStats",
    "Camera",
    "CompressedVolume",
    "DualGrid",
    "Framebuffer",
    "MacrocellGrids",
    "PassBuffers",
    "PassStats",
    "RaySoA",
    "RenderOptions",
    "ValueRange",
    "Volume",
    "assemble_dual_grid",
    "build_grids",
    "compare_images",
    "compress_volume",
    "compute_n_spec",
    "decode_full",
    "decompress_block",
    "init_rays",
    "intersect_cell",
    "load_raw",
    "raytrace_block",
    "read_wcz",
    "reference_render",
    "render",
    "render_passes",
    "save_raw",
    "shade",
    "synthesize",
    "traverse_to_next_blocks",
    "write_wcz",
]
