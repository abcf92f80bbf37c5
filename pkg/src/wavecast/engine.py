"""Per-pass wavefront orchestration with ray-block speculation.

Each pass: scan the active mask, advance every active ray to its next
candidate blocks, mark visible/active blocks, refresh the LRU cache,
group ray-block work by block, intersect, then depth-composite the
speculated results and terminate finished rays. Speculation only changes
scheduling; the closest hit per ray is invariant, so final images are
bit-identical with speculation on or off.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numba import njit

from .blocktrace import BASE_COLOR, _assemble_dual, _trace_region
from .cache import BlockCache, initial_capacity
from .codec import CompressedVolume
from .grids import MacrocellGrids
from .prims import compact, exclusive_scan, sort_by_key
from .traversal import (
    UINT_MAX,
    Camera,
    RaySoA,
    init_rays,
    traverse_to_next_blocks,
)

BACKGROUND_RGBA = (0, 0, 0, 255)
MAX_SPEC_DEFAULT = 64


@dataclass
class RenderOptions:
    width: int = 1280
    height: int = 720
    speculation: bool = True
    max_spec: int = MAX_SPEC_DEFAULT
    base_color: tuple[float, float, float] = BASE_COLOR
    corrupt_cache: bool = False  # test hook: damages cached data every pass


@dataclass
class Framebuffer:
    w: int
    h: int
    rgba: np.ndarray        # uint8 (h, w, 4)
    depth: np.ndarray       # float32 (h, w), +inf = background
    completeness: float

    @classmethod
    def blank(cls, w: int, h: int) -> "Framebuffer":
        rgba = np.zeros((h, w, 4), dtype=np.uint8)
        rgba[..., :] = BACKGROUND_RGBA
        depth = np.full((h, w), np.inf, dtype=np.float32)
        return cls(w=w, h=h, rgba=rgba, depth=depth, completeness=0.0)

    def snapshot(self) -> "Framebuffer":
        return Framebuffer(self.w, self.h, self.rgba.copy(), self.depth.copy(), self.completeness)


@dataclass(frozen=True)
class PassStats:
    pass_index: int
    n_active_before: int
    n_spec: int
    visible_blocks: int
    active_blocks: int
    new_decompressed: int
    cache_slots: int
    utilization: float
    completeness: float
    duration: float


@dataclass(frozen=True)
class PassBuffers:
    visible_ids: np.ndarray        # compacted visible block IDs, ascending
    rays_per_block: np.ndarray
    block_ray_offsets: np.ndarray
    sorted_ray_ids: np.ndarray     # ray IDs grouped by block, stable order
    sorted_hit_slots: np.ndarray   # matching rgbz slot per ray-block entry
    valid_prefix: np.ndarray       # scan of slot-validity over the full buffer
    n_entries: int


def compute_n_spec(n_act: int, w: int, h: int, max_spec: int = MAX_SPEC_DEFAULT) -> int:
    """Speculation count: free slots shared evenly, clamped to [1, max_spec]."""
    assert n_act >= 1
    return min(max_spec, max(1, (w * h) // n_act))


def mark_blocks(block_slots: np.ndarray, block_dims) -> tuple[np.ndarray, np.ndarray]:
    """Visible = referenced by a slot; active adds each visible block's
    existing positive-octant neighbors (their data feeds the dual grid)."""
    bdx, bdy, bdz = block_dims
    n_blocks = bdx * bdy * bdz
    visible = np.zeros(n_blocks, dtype=bool)
    ids = block_slots[block_slots != UINT_MAX].astype(np.int64)
    visible[ids] = True
    active = visible.copy()
    vis = np.nonzero(visible)[0]
    bx = vis % bdx
    by = (vis // bdx) % bdy
    bz = vis // (bdx * bdy)
    for oz in (0, 1):
        for oy in (0, 1):
            for ox in (0, 1):
                if ox == 0 and oy == 0 and oz == 0:
                    continue
                ok = (bx + ox < bdx) & (by + oy < bdy) & (bz + oz < bdz)
                nid = (bx[ok] + ox) + bdx * ((by[ok] + oy) + bdy * (bz[ok] + oz))
                active[nid] = True
    return visible, active


def build_rt_inputs(
    block_slots: np.ndarray, ray_slots: np.ndarray, visible_mask: np.ndarray
) -> PassBuffers:
    """Group the valid ray-block entries by block via scan/compact/sort."""
    valid = (block_slots != UINT_MAX).astype(np.uint32)
    valid_prefix, n_entries = exclusive_scan(valid)
    blocks = compact(block_slots, valid)
    rids = compact(ray_slots, valid)
    slots = compact(valid_prefix, valid)  # unique index per ray-block entry
    _, sorted_ray_ids = sort_by_key(blocks, rids)
    _, sorted_hit_slots = sort_by_key(blocks, slots)

    n_blocks = len(visible_mask)
    visible_ids = compact(np.arange(n_blocks, dtype=np.uint32), visible_mask)
    block_index, n_vis = exclusive_scan(visible_mask.astype(np.uint32))
    rays_per_block = np.bincount(
        block_index[blocks.astype(np.int64)], minlength=n_vis
    ).astype(np.uint32)
    block_ray_offsets, total = exclusive_scan(rays_per_block)
    assert total == n_entries, "ray-block grouping is inconsistent"
    return PassBuffers(
        visible_ids=visible_ids,
        rays_per_block=rays_per_block,
        block_ray_offsets=block_ray_offsets,
        sorted_ray_ids=sorted_ray_ids,
        sorted_hit_slots=sorted_hit_slots,
        valid_prefix=valid_prefix,
        n_entries=n_entries,
    )


@njit(cache=True)
def _rgb_u8(v):
    if v < 0.0:
        v = 0.0
    elif v > 1.0:
        v = 1.0
    return np.uint8(v * 255.0 + 0.5)


@njit(cache=True)
def _raytrace_visible_kernel(
    visible_ids,
    rays_per_block,
    block_ray_offsets,
    sorted_ray_ids,
    sorted_hit_slots,
    contrib_slots,
    slot_values,
    block_coords,
    block_cells,
    origin,
    direction,
    t_enter,
    iso,
    base_r,
    base_g,
    base_b,
    rgbz_rgb,
    rgbz_z,
):
    dual = np.empty((5, 5, 5), dtype=np.float32)
    for v in range(visible_ids.shape[0]):
        _assemble_dual(slot_values, contrib_slots[v], dual)
        box_x = 4 * block_coords[v, 0]
        box_y = 4 * block_coords[v, 1]
        box_z = 4 * block_coords[v, 2]
        start = block_ray_offsets[v]
        for j in range(start, start + rays_per_block[v]):
            r = np.int64(sorted_ray_ids[j])
            t, cr, cg, cb = _trace_region(
                dual,
                box_x,
                box_y,
                box_z,
                box_x,
                box_y,
                box_z,
                block_cells[v, 0],
                block_cells[v, 1],
                block_cells[v, 2],
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
                s = np.int64(sorted_hit_slots[j])
                rgbz_z[s] = np.float32(t)
                rgbz_rgb[s, 0] = np.float32(cr)
                rgbz_rgb[s, 1] = np.float32(cg)
                rgbz_rgb[s, 2] = np.float32(cb)


@njit(cache=True)
def _composite_kernel(
    status,
    exited,
    active_offsets,
    n_spec,
    block_slots,
    valid_prefix,
    rgbz_rgb,
    rgbz_z,
    rgba_flat,
    depth_flat,
):
    n = status.shape[0]
    for r in range(n):
        if status[r] != 0:
            continue
        base = active_offsets[r] * n_spec
        best = np.inf
        best_slot = -1
        for k in range(n_spec):
            s = base + k
            if block_slots[s] != UINT_MAX:
                slot = np.int64(valid_prefix[s])
                z = rgbz_z[slot]
                if z < best:  # strict: earliest slot wins ties
                    best = z
                    best_slot = slot
        if best_slot >= 0:
            depth_flat[r] = np.float32(best)
            rgba_flat[r, 0] = _rgb_u8(rgbz_rgb[best_slot, 0])
            rgba_flat[r, 1] = _rgb_u8(rgbz_rgb[best_slot, 1])
            rgba_flat[r, 2] = _rgb_u8(rgbz_rgb[best_slot, 2])
            rgba_flat[r, 3] = np.uint8(255)
            status[r] = 1
        elif exited[r] == 1:
            status[r] = 2  # background already present in the framebuffer


def composite(
    rgbz_rgb: np.ndarray,
    rgbz_z: np.ndarray,
    rays: RaySoA,
    n_spec: int,
    active_offsets: np.ndarray,
    valid_prefix: np.ndarray,
    fb: Framebuffer,
) -> None:
    """Pick each active ray's closest speculated hit; terminate finished rays."""
    _composite_kernel(
        rays.status,
        rays.exited,
        np.ascontiguousarray(active_offsets, dtype=np.int64),
        int(n_spec),
        rays.block_slots,
        valid_prefix,
        rgbz_rgb,
        rgbz_z,
        fb.rgba.reshape(-1, 4),
        fb.depth.reshape(-1),
    )
    fb.completeness = float(rays.n - rays.n_active) / rays.n


def _contributor_table(cv: CompressedVolume, cache: BlockCache, visible_ids: np.ndarray):
    """(n_vis, 8) cache slots of each visible block and its +octant neighbors."""
    bdx, bdy, bdz = cv.block_dims
    vis = visible_ids.astype(np.int64)
    bx = vis % bdx
    by = (vis // bdx) % bdy
    bz = vis // (bdx * bdy)
    slot_map = cache._slot_of_block
    out = np.full((len(vis), 8), -1, dtype=np.int64)
    for oz in (0, 1):
        for oy in (0, 1):
            for ox in (0, 1):
                idx = ox + 2 * oy + 4 * oz
                ok = (bx + ox < bdx) & (by + oy < bdy) & (bz + oz < bdz)
                nid = (bx[ok] + ox) + bdx * ((by[ok] + oy) + bdy * (bz[ok] + oz))
                out[ok, idx] = slot_map[nid]
    assert (out[:, 0] >= 0).all(), "visible block not resident"
    coords = np.stack([bx, by, bz], axis=1)
    cells = np.clip(np.asarray(cv.dims, dtype=np.int64)[None, :] - 1 - 4 * coords, 0, 4)
    return out, coords, cells


def render_passes(
    cv: CompressedVolume,
    grids: MacrocellGrids,
    cam: Camera,
    iso: float,
    opts: RenderOptions,
) -> Iterator[tuple[Framebuffer, PassStats]]:
    """Run the wavefront loop, yielding a framebuffer snapshot per pass."""
    w, h = opts.width, opts.height
    rays = init_rays(cam, w, h, cv.dims)
    n = rays.n
    fb = Framebuffer.blank(w, h)
    cache = BlockCache(initial_capacity(w, h))
    rgbz_rgb = np.zeros((n, 3), dtype=np.float32)
    rgbz_z = np.full(n, np.inf, dtype=np.float32)
    base_r, base_g, base_b = (float(c) for c in opts.base_color)

    pass_index = 0
    while True:
        n_act = rays.n_active
        if n_act == 0:
            break
        t_start = time.perf_counter()
        active_offsets, total_act = exclusive_scan(rays.active_mask.astype(np.uint32))
        assert total_act == n_act
        n_spec = compute_n_spec(n_act, w, h, opts.max_spec) if opts.speculation else 1

        traverse_to_next_blocks(rays, grids, iso, n_spec, active_offsets)
        visible_mask, active_mask = mark_blocks(rays.block_slots, cv.block_dims)
        cache_stats = cache.ensure_resident(active_mask, cv)
        if opts.corrupt_cache:
            cache.slot_values.fill(0.0)
        pb = build_rt_inputs(rays.block_slots, rays.ray_slots, visible_mask)
        assert pb.n_entries <= n, "slot budget exceeded"

        rgbz_z.fill(np.inf)
        rgbz_rgb.fill(0.0)
        if len(pb.visible_ids):
            contrib, coords, cells = _contributor_table(cv, cache, pb.visible_ids)
            _raytrace_visible_kernel(
                pb.visible_ids,
                pb.rays_per_block,
                pb.block_ray_offsets,
                pb.sorted_ray_ids,
                pb.sorted_hit_slots,
                contrib,
                cache.slot_values,
                coords,
                cells,
                rays.origin,
                rays.direction,
                rays.t_enter,
                float(iso),
                base_r,
                base_g,
                base_b,
                rgbz_rgb,
                rgbz_z,
            )
        composite(rgbz_rgb, rgbz_z, rays, n_spec, active_offsets, pb.valid_prefix, fb)

        stats = PassStats(
            pass_index=pass_index,
            n_active_before=n_act,
            n_spec=n_spec,
            visible_blocks=int(np.count_nonzero(visible_mask)),
            active_blocks=int(np.count_nonzero(active_mask)),
            new_decompressed=cache_stats.new_decompressed,
            cache_slots=cache_stats.grown_to,
            utilization=pb.n_entries / float(n),
            completeness=fb.completeness,
            duration=time.perf_counter() - t_start,
        )
        yield fb.snapshot(), stats
        pass_index += 1


def render(
    cv: CompressedVolume,
    grids: MacrocellGrids,
    cam: Camera,
    iso: float,
    opts: RenderOptions,
) -> tuple[Framebuffer, list[PassStats]]:
    """Render to completion; returns the final framebuffer and per-pass stats."""
    fb = None
    stats: list[PassStats] = []
    for snapshot, ps in render_passes(cv, grids, cam, iso, opts):
        fb = snapshot
        stats.append(ps)
    if fb is None:  # camera missed the volume on every pixel
        fb = Framebuffer.blank(opts.width, opts.height)
        fb.completeness = 1.0
    return fb, stats
