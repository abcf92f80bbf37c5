"""Brute-force single-pass raycaster used as ground truth in parity tests.

It shares the cell intersection and shading code with the wavefront
renderer but uses no grids, no cache, and no passes: every ray marches
all dual cells of the fully decoded volume in order. Differences against
it therefore isolate traversal, caching, or speculation bugs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .blocktrace import BASE_COLOR, _trace_region
from .codec import CompressedVolume, decompress_blocks_into
from .engine import Framebuffer, _rgb_u8
from .errors import UsageError
from .traversal import Camera, RaySoA
from .volume import Volume


def decode_full(cv: CompressedVolume) -> Volume:
    """Decompress every block and scatter into a dense volume (padding dropped)."""
    nx, ny, nz = cv.dims
    bdx, bdy, bdz = cv.block_dims
    n_blocks = cv.block_count
    flat = np.empty((n_blocks, 64), dtype=np.float32)
    decompress_blocks_into(cv, np.arange(n_blocks, dtype=np.int64), flat)
    grid = (
        flat.reshape(bdz, bdy, bdx, 4, 4, 4)
        .transpose(0, 3, 1, 4, 2, 5)
        .reshape(bdz * 4, bdy * 4, bdx * 4)
    )
    values = np.ascontiguousarray(grid[:nz, :ny, :nx]).reshape(-1)
    return Volume(
        dims=(nx, ny, nz),
        values=values,
        value_range=(float(values.min()), float(values.max())),
    )


@njit(cache=True)
def _reference_kernel(
    values3,
    nx,
    ny,
    nz,
    origin,
    direction,
    t_enter,
    status,
    iso,
    base_r,
    base_g,
    base_b,
    rgba_flat,
    depth_flat,
):
    for r in range(origin.shape[0]):
        if status[r] != 0:  # missed the volume box at init
            continue
        t, cr, cg, cb = _trace_region(
            values3,
            0,
            0,
            0,
            0,
            0,
            0,
            nx - 1,
            ny - 1,
            nz - 1,
            origin[r, 0],
            origin[r, 1],
            origin[r, 2],
            direction[r, 0],
            direction[r, 1],
            direction[r, 2],
            t_enter[r],
            iso,
            base_r,
            base_g,
            base_b,
        )
        if t != np.inf:
            depth_flat[r] = np.float32(t)
            rgba_flat[r, 0] = _rgb_u8(cr)
            rgba_flat[r, 1] = _rgb_u8(cg)
            rgba_flat[r, 2] = _rgb_u8(cb)
            rgba_flat[r, 3] = np.uint8(255)


def reference_render(
    vol: Volume,
    cam: Camera,
    iso: float,
    w: int,
    h: int,
    base_color=BASE_COLOR,
) -> Framebuffer:
    """Render by testing every bracketing dual cell along every ray."""
    rays = RaySoA.from_camera(cam, w, h, vol.dims)
    fb = Framebuffer.blank(w, h)
    nx, ny, nz = vol.dims
    _reference_kernel(
        vol.as_3d(),
        nx,
        ny,
        nz,
        rays.origin,
        rays.direction,
        rays.t_enter,
        rays.status,
        float(iso),
        float(base_color[0]),
        float(base_color[1]),
        float(base_color[2]),
        fb.rgba.reshape(-1, 4),
        fb.depth.reshape(-1),
    )
    fb.completeness = 1.0
    return fb


def compare_images(a: Framebuffer, b: Framebuffer) -> dict:
    """Exhaustive per-pixel diff of two framebuffers."""
    if (a.w, a.h) != (b.w, b.h):
        raise UsageError(f"framebuffer dims differ: {(a.w, a.h)} vs {(b.w, b.h)}")
    hit_a = np.isfinite(a.depth)
    hit_b = np.isfinite(b.depth)
    mism = int(np.count_nonzero(hit_a != hit_b))
    both = hit_a & hit_b
    max_depth = float(np.abs(a.depth[both] - b.depth[both]).max()) if both.any() else 0.0
    max_rgb = int(
        np.abs(a.rgba[..., :3].astype(np.int16) - b.rgba[..., :3].astype(np.int16)).max()
    )
    return {
        "hit_mask_mismatches": mism,
        "max_depth_delta": max_depth,
        "max_rgb_delta": max_rgb,
    }
