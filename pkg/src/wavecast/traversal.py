"""Camera rays and resumable two-level grid traversal.

Geometry conventions used across the renderer:
  - voxel values sit at integer coordinates, the volume spans [0, dims-1]^3
  - 1 voxel = 1 world unit, so ray t values are in voxel units
  - fine grid cells are 4 voxels wide (one per block), coarse cells 16

Each ray carries saved iterator state for both grid levels so traversal
can stop after emitting a bounded number of candidate blocks per pass and
resume exactly where it left off on the next pass. A fine iterator of
DONE means the ray is between fine runs and the coarse grid steps next.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import UsageError
from .grids import MacrocellGrids

UINT_MAX = 0xFFFFFFFF
STATUS_ACTIVE = 0
STATUS_HIT = 1
STATUS_MISS = 2

# Initial cells are sampled at t_enter + ENTRY_EPS so the entry point never
# lands exactly on a cell face (1e-4 of the fine cell size of 4 voxels).
ENTRY_EPS = 4e-4

FINE_CELL = 4.0
COARSE_CELL = 16.0


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; look_dir and up must be unit length."""

    eye: tuple[float, float, float]
    look_dir: tuple[float, float, float]
    up: tuple[float, float, float]
    fov_y: float

    def __post_init__(self):
        ld = np.asarray(self.look_dir, dtype=np.float64)
        if abs(np.linalg.norm(ld) - 1.0) > 1e-6:
            raise UsageError("camera look_dir must be unit length")
        up = np.asarray(self.up, dtype=np.float64)
        if np.linalg.norm(np.cross(ld, up)) < 1e-9:
            raise UsageError("camera up is parallel to look_dir")

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 1.0, 0.0), fov_y=45.0) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        ld = np.asarray(target, dtype=np.float64) - eye
        n = np.linalg.norm(ld)
        if n < 1e-12:
            raise UsageError("camera eye coincides with look-at target")
        ld = ld / n
        return cls(tuple(eye), tuple(ld), tuple(np.asarray(up, dtype=np.float64)), float(fov_y))

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        look = np.asarray(self.look_dir, dtype=np.float64)
        right = np.cross(look, np.asarray(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        up_v = np.cross(right, look)
        return look, right, up_v


class RaySoA:
    """Image-sized per-ray state buffers (structure of arrays)."""

    def __init__(self, n: int, w: int, h: int):
        self.w = w
        self.h = h
        self.origin = np.zeros((n, 3), dtype=np.float64)
        self.direction = np.zeros((n, 3), dtype=np.float64)
        self.t_enter = np.zeros(n, dtype=np.float64)
        self.t_exit = np.zeros(n, dtype=np.float64)
        self.status = np.zeros(n, dtype=np.uint8)
        self.exited = np.zeros(n, dtype=np.uint8)
        self.coarse_cell = np.full(n, UINT_MAX, dtype=np.uint32)
        self.coarse_tmax = np.zeros((n, 3), dtype=np.float64)
        self.fine_cell = np.full(n, UINT_MAX, dtype=np.uint32)
        self.fine_tmax = np.zeros((n, 3), dtype=np.float64)
        # per-pass slot buffers: candidate block per slot plus owning ray
        self.block_slots = np.full(n, UINT_MAX, dtype=np.uint32)
        self.ray_slots = np.full(n, UINT_MAX, dtype=np.uint32)

    @property
    def n(self) -> int:
        return self.origin.shape[0]

    @property
    def active_mask(self) -> np.ndarray:
        return self.status == STATUS_ACTIVE

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.status == STATUS_ACTIVE))

    @classmethod
    def from_camera(cls, cam: Camera, w: int, h: int, dims) -> "RaySoA":
        """Pinhole rays through pixel centers, row-major (ray = y*w + x)."""
        if w < 1 or h < 1:
            raise UsageError(f"image size must be at least 1x1, got {w}x{h}")
        look, right, up_v = cam.basis()
        tan_half = math.tan(math.radians(cam.fov_y) * 0.5)
        aspect = w / h
        xs = (2.0 * (np.arange(w, dtype=np.float64) + 0.5) / w - 1.0) * tan_half * aspect
        ys = (1.0 - 2.0 * (np.arange(h, dtype=np.float64) + 0.5) / h) * tan_half
        px, py = np.meshgrid(xs, ys)
        dirs = look[None, None, :] + px[..., None] * right[None, None, :] + py[..., None] * up_v[None, None, :]
        dirs = dirs.reshape(-1, 3)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        origins = np.broadcast_to(np.asarray(cam.eye, dtype=np.float64), dirs.shape)
        return cls.from_rays(origins, dirs, dims, w=w, h=h)

    @classmethod
    def from_rays(cls, origins, dirs, dims, w: int | None = None, h: int | None = None) -> "RaySoA":
        """Clip arbitrary rays against the volume box and seed iterators."""
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        n = origins.shape[0]
        rays = cls(n, w if w is not None else n, h if h is not None else 1)
        rays.origin[:] = origins
        rays.direction[:] = dirs

        hi = np.asarray(dims, dtype=np.float64) - 1.0
        near = np.full((n, 3), -np.inf)
        far = np.full((n, 3), np.inf)
        for a in range(3):
            da = dirs[:, a]
            oa = origins[:, a]
            moving = da != 0.0
            with np.errstate(divide="ignore"):
                t1 = (0.0 - oa[moving]) / da[moving]
                t2 = (hi[a] - oa[moving]) / da[moving]
            near[moving, a] = np.minimum(t1, t2)
            far[moving, a] = np.maximum(t1, t2)
            still = ~moving
            outside = still & ((oa < 0.0) | (oa > hi[a]))
            near[outside, a] = np.inf
            far[outside, a] = -np.inf
        t_near = near.max(axis=1)
        t_far = far.min(axis=1)
        hit = (t_near <= t_far) & (t_far >= 0.0)

        rays.t_enter[:] = np.maximum(t_near, 0.0)
        rays.t_exit[:] = t_far
        rays.status[:] = np.where(hit, STATUS_ACTIVE, STATUS_MISS)

        fd = _fine_dims(dims)
        if np.any(hit):
            p0 = origins[hit] + dirs[hit] * (rays.t_enter[hit] + ENTRY_EPS)[:, None]
            fc = np.clip(
                np.floor(p0 / FINE_CELL).astype(np.int64),
                0,
                np.asarray(fd, dtype=np.int64) - 1,
            )
            cc = fc // 4
            rays.fine_cell[hit] = (fc[:, 0] + fd[0] * (fc[:, 1] + fd[1] * fc[:, 2])).astype(np.uint32)
            cd = _coarse_dims(dims)
            rays.coarse_cell[hit] = (cc[:, 0] + cd[0] * (cc[:, 1] + cd[1] * cc[:, 2])).astype(np.uint32)
            rays.fine_tmax[hit] = _tmax_init(origins[hit], dirs[hit], fc, FINE_CELL)
            rays.coarse_tmax[hit] = _tmax_init(origins[hit], dirs[hit], cc, COARSE_CELL)
        return rays


def _fine_dims(dims) -> tuple[int, int, int]:
    return tuple(-(int(d) // -4) for d in dims)


def _coarse_dims(dims) -> tuple[int, int, int]:
    return tuple(-(f // -4) for f in _fine_dims(dims))


def _tmax_init(o, d, cells, size) -> np.ndarray:
    """Per-axis t of the next cell-boundary crossing from inside `cells`."""
    lo = cells * size
    target = np.where(d > 0, lo + size, lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (target - o) / d
    return np.where(d == 0.0, np.inf, t)


def init_rays(cam: Camera, w: int, h: int, dims) -> RaySoA:
    """Build the per-pixel wavefront for a camera view of the volume box."""
    return RaySoA.from_camera(cam, w, h, dims)


def dda_step(cell, tmax, direction, grid_dims, cell_size):
    """One Amanatides-Woo step. Returns (cell, tmax, t_cross, done).

    Ties on the crossing parameter step the lowest axis first (x, y, z).
    done becomes True when the new cell lies outside the grid.
    """
    cell = list(int(c) for c in cell)
    tmax = list(float(t) for t in tmax)
    d = [float(v) for v in direction]
    if tmax[0] <= tmax[1] and tmax[0] <= tmax[2]:
        axis = 0
    elif tmax[1] <= tmax[2]:
        axis = 1
    else:
        axis = 2
    t_cross = tmax[axis]
    cell[axis] += 1 if d[axis] > 0 else -1
    tmax[axis] += cell_size / abs(d[axis]) if d[axis] != 0.0 else math.inf
    done = not all(0 <= cell[a] < grid_dims[a] for a in range(3))
    return tuple(cell), tuple(tmax), t_cross, done


@njit(cache=True)
def _traverse_kernel(
    origin,
    direction,
    t_exit,
    status,
    exited,
    coarse_cell,
    coarse_tmax,
    fine_cell,
    fine_tmax,
    block_slots,
    ray_slots,
    active_offsets,
    fine_min,
    fine_max,
    coarse_min,
    coarse_max,
    fdx,
    fdy,
    fdz,
    cdx,
    cdy,
    cdz,
    iso,
    n_spec,
):
    done_id = np.int64(UINT_MAX)
    n = origin.shape[0]
    for r in range(n):
        if status[r] != 0:
            continue
        ox = origin[r, 0]
        oy = origin[r, 1]
        oz = origin[r, 2]
        dx = direction[r, 0]
        dy = direction[r, 1]
        dz = direction[r, 2]
        te = t_exit[r]

        sx = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
        sy = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
        sz = 1 if dz > 0.0 else (-1 if dz < 0.0 else 0)
        fdel_x = 4.0 / abs(dx) if dx != 0.0 else np.inf
        fdel_y = 4.0 / abs(dy) if dy != 0.0 else np.inf
        fdel_z = 4.0 / abs(dz) if dz != 0.0 else np.inf
        cdel_x = 16.0 / abs(dx) if dx != 0.0 else np.inf
        cdel_y = 16.0 / abs(dy) if dy != 0.0 else np.inf
        cdel_z = 16.0 / abs(dz) if dz != 0.0 else np.inf

        cc = np.int64(coarse_cell[r])
        ccx = cc % cdx
        ccy = (cc // cdx) % cdy
        ccz = cc // (cdx * cdy)
        ctx = coarse_tmax[r, 0]
        cty = coarse_tmax[r, 1]
        ctz = coarse_tmax[r, 2]

        fc = np.int64(fine_cell[r])
        in_fine_run = fc != done_id
        if in_fine_run:
            fcx = fc % fdx
            fcy = (fc // fdx) % fdy
            fcz = fc // (fdx * fdy)
        else:
            fcx = 0
            fcy = 0
            fcz = 0
        ftx = fine_tmax[r, 0]
        fty = fine_tmax[r, 1]
        ftz = fine_tmax[r, 2]

        base = active_offsets[r] * n_spec
        emitted = 0
        ray_done = False

        while True:
            if in_fine_run:
                while True:
                    f_lin = fcx + fdx * (fcy + fdy * fcz)
                    emit = fine_min[f_lin] <= iso and iso <= fine_max[f_lin]
                    if emit:
                        block_slots[base + emitted] = np.uint32(f_lin)
                        ray_slots[base + emitted] = np.uint32(r)
                        emitted += 1
                    # advance one fine step (ties step the lowest axis)
                    if ftx <= fty and ftx <= ftz:
                        t_cross = ftx
                        fcx += sx
                        ftx += fdel_x
                    elif fty <= ftz:
                        t_cross = fty
                        fcy += sy
                        fty += fdel_y
                    else:
                        t_cross = ftz
                        fcz += sz
                        ftz += fdel_z
                    if (
                        t_cross > te
                        or fcx < 0
                        or fcx >= fdx
                        or fcy < 0
                        or fcy >= fdy
                        or fcz < 0
                        or fcz >= fdz
                    ):
                        in_fine_run = False
                        ray_done = True
                    elif (fcx >> 2) != ccx or (fcy >> 2) != ccy or (fcz >> 2) != ccz:
                        in_fine_run = False
                    if emitted == n_spec or not in_fine_run:
                        break
                if emitted == n_spec or ray_done:
                    break
            # step the coarse grid
            if ctx <= cty and ctx <= ctz:
                t_cross = ctx
                ccx += sx
                ctx += cdel_x
            elif cty <= ctz:
                t_cross = cty
                ccy += sy
                cty += cdel_y
            else:
                t_cross = ctz
                ccz += sz
                ctz += cdel_z
            if (
                t_cross > te
                or ccx < 0
                or ccx >= cdx
                or ccy < 0
                or ccy >= cdy
                or ccz < 0
                or ccz >= cdz
            ):
                ray_done = True
                break
            c_lin = ccx + cdx * (ccy + cdy * ccz)
            if coarse_min[c_lin] <= iso and iso <= coarse_max[c_lin]:
                # descend: seed the fine iterator at the coarse-cell entry
                px = ox + dx * t_cross
                py = oy + dy * t_cross
                pz = oz + dz * t_cross
                lo_x = 4 * ccx
                lo_y = 4 * ccy
                lo_z = 4 * ccz
                hi_x = min(lo_x + 3, fdx - 1)
                hi_y = min(lo_y + 3, fdy - 1)
                hi_z = min(lo_z + 3, fdz - 1)
                fcx = np.int64(math.floor(px / 4.0))
                fcy = np.int64(math.floor(py / 4.0))
                fcz = np.int64(math.floor(pz / 4.0))
                if fcx < lo_x:
                    fcx = lo_x
                elif fcx > hi_x:
                    fcx = hi_x
                if fcy < lo_y:
                    fcy = lo_y
                elif fcy > hi_y:
                    fcy = hi_y
                if fcz < lo_z:
                    fcz = lo_z
                elif fcz > hi_z:
                    fcz = hi_z
                ftx = ((fcx + 1) * 4.0 - ox) / dx if dx > 0.0 else ((fcx * 4.0 - ox) / dx if dx < 0.0 else np.inf)
                fty = ((fcy + 1) * 4.0 - oy) / dy if dy > 0.0 else ((fcy * 4.0 - oy) / dy if dy < 0.0 else np.inf)
                ftz = ((fcz + 1) * 4.0 - oz) / dz if dz > 0.0 else ((fcz * 4.0 - oz) / dz if dz < 0.0 else np.inf)
                in_fine_run = True

        if ray_done:
            exited[r] = 1
            coarse_cell[r] = np.uint32(UINT_MAX)
            fine_cell[r] = np.uint32(UINT_MAX)
        else:
            coarse_cell[r] = np.uint32(ccx + cdx * (ccy + cdy * ccz))
            if in_fine_run:
                fine_cell[r] = np.uint32(fcx + fdx * (fcy + fdy * fcz))
            else:
                fine_cell[r] = np.uint32(UINT_MAX)
        coarse_tmax[r, 0] = ctx
        coarse_tmax[r, 1] = cty
        coarse_tmax[r, 2] = ctz
        fine_tmax[r, 0] = ftx
        fine_tmax[r, 1] = fty
        fine_tmax[r, 2] = ftz


def traverse_to_next_blocks(
    rays: RaySoA,
    grids: MacrocellGrids,
    iso: float,
    n_spec: int,
    active_offsets: np.ndarray,
) -> None:
    """Advance every active ray to its next up-to-n_spec candidate blocks.

    Candidate block IDs land in rays.block_slots (owning ray in
    rays.ray_slots) at offset active_offsets[ray] * n_spec; unfilled slots
    stay UINT_MAX. Iterator state is saved pointing past the last emitted
    block; rays that run out of volume get their exited flag set.
    """
    assert n_spec >= 1
    n_act = rays.n_active
    assert n_act * n_spec <= rays.n, "slot budget exceeded"
    rays.block_slots.fill(UINT_MAX)
    rays.ray_slots.fill(UINT_MAX)
    fdx, fdy, fdz = grids.fine_dims
    cdx, cdy, cdz = grids.coarse_dims
    _traverse_kernel(
        rays.origin,
        rays.direction,
        rays.t_exit,
        rays.status,
        rays.exited,
        rays.coarse_cell,
        rays.coarse_tmax,
        rays.fine_cell,
        rays.fine_tmax,
        rays.block_slots,
        rays.ray_slots,
        np.ascontiguousarray(active_offsets, dtype=np.int64),
        grids.fine_min,
        grids.fine_max,
        grids.coarse_min,
        grids.coarse_max,
        fdx,
        fdy,
        fdz,
        cdx,
        cdy,
        cdz,
        float(iso),
        int(n_spec),
    )
