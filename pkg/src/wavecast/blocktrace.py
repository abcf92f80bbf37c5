"""Per-block isosurface intersection against the 5^3 dual grid.

The trilinear field along a ray is cubic in t. Cell intersection isolates
monotone spans by splitting at the real roots of the derivative quadratic,
takes the first span whose endpoints bracket the isovalue, and refines it
by repeated linear interpolation with bisection fallback, iterated until
the bracket collapses.

The region tracer below is shared by the wavefront renderer (tracing a
block's 4^3 dual cells) and the reference oracle (tracing the full
volume): one code path means one set of floating-point results, so the
two renderers can be compared for exact hit parity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .cache import BlockCache
from .codec import CompressedVolume

AMBIENT = 0.2
BASE_COLOR = (0.85, 0.85, 0.85)

# Region entry points are nudged inside by this fraction of the clipped
# span so the first cell lookup never lands exactly on a face.
_ENTRY_NUDGE = 1e-7


@dataclass(frozen=True)
class DualGrid:
    """A block's local 4^3 values plus one vertex layer from +x/y/z neighbors."""

    values: np.ndarray            # float32 (5,5,5) indexed [z,y,x]
    cells_per_axis: tuple[int, int, int]
    block_origin: tuple[int, int, int]


def dual_cells_per_axis(dims, block_coords) -> tuple[int, int, int]:
    return tuple(
        int(np.clip(dims[a] - 1 - 4 * block_coords[a], 0, 4)) for a in range(3)
    )


@njit(cache=True)
def _assemble_dual(slot_values, contrib_slots, out):
    """Fill the 5^3 dual grid from the 8 contributing cache slots.

    contrib_slots[ox + 2*oy + 4*oz] is the cache slot of the neighbor at
    that positive-octant offset, or -1 when the neighbor does not exist
    (those lanes are left zeroed and excluded via cells_per_axis).
    """
    for z in range(5):
        for y in range(5):
            for x in range(5):
                out[z, y, x] = np.float32(0.0)
    s = contrib_slots[0]
    for k in range(4):
        for j in range(4):
            for i in range(4):
                out[k, j, i] = slot_values[s, i + 4 * j + 16 * k]
    if contrib_slots[1] >= 0:  # +x face
        s = contrib_slots[1]
        for k in range(4):
            for j in range(4):
                out[k, j, 4] = slot_values[s, 4 * j + 16 * k]
    if contrib_slots[2] >= 0:  # +y face
        s = contrib_slots[2]
        for k in range(4):
            for i in range(4):
                out[k, 4, i] = slot_values[s, i + 16 * k]
    if contrib_slots[3] >= 0:  # +xy edge
        s = contrib_slots[3]
        for k in range(4):
            out[k, 4, 4] = slot_values[s, 16 * k]
    if contrib_slots[4] >= 0:  # +z face
        s = contrib_slots[4]
        for j in range(4):
            for i in range(4):
                out[4, j, i] = slot_values[s, i + 4 * j]
    if contrib_slots[5] >= 0:  # +xz edge
        s = contrib_slots[5]
        for j in range(4):
            out[4, j, 4] = slot_values[s, 4 * j]
    if contrib_slots[6] >= 0:  # +yz edge
        s = contrib_slots[6]
        for i in range(4):
            out[4, 4, i] = slot_values[s, i]
    if contrib_slots[7] >= 0:  # +xyz corner
        out[4, 4, 4] = slot_values[contrib_slots[7], 0]


def contributor_slots(cache: BlockCache, cv: CompressedVolume, block_id: int) -> np.ndarray:
    """Cache slots of a block and its 7 positive-octant neighbors (-1 if absent)."""
    bdx, bdy, bdz = cv.block_dims
    bx, by, bz = cv.block_coords(block_id)
    slots = np.full(8, -1, dtype=np.int64)
    for oz in (0, 1):
        for oy in (0, 1):
            for ox in (0, 1):
                nx, ny, nz = bx + ox, by + oy, bz + oz
                if nx < bdx and ny < bdy and nz < bdz:
                    slot = cache.lookup(nx + bdx * (ny + bdy * nz))
                    assert slot is not None, "required neighbor block not resident"
                    slots[ox + 2 * oy + 4 * oz] = slot
    return slots


def assemble_dual_grid(cache: BlockCache, cv: CompressedVolume, block_id: int) -> DualGrid:
    """Gather a resident block's dual grid from the cache."""
    slots = contributor_slots(cache, cv, block_id)
    out = np.zeros((5, 5, 5), dtype=np.float32)
    _assemble_dual(cache.slot_values, slots, out)
    coords = cv.block_coords(block_id)
    return DualGrid(
        values=out,
        cells_per_axis=dual_cells_per_axis(cv.dims, coords),
        block_origin=tuple(4 * c for c in coords),
    )


@njit(cache=True)
def _cell_overlap(ox, oy, oz, dx, dy, dz, cx, cy, cz):
    """Ray overlap [t0, t1] with the unit cell at integer corner (cx,cy,cz)."""
    t0 = -np.inf
    t1 = np.inf
    if dx != 0.0:
        ta = (cx - ox) / dx
        tb = (cx + 1.0 - ox) / dx
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    elif ox < cx or ox > cx + 1.0:
        return np.inf, -np.inf
    if dy != 0.0:
        ta = (cy - oy) / dy
        tb = (cy + 1.0 - oy) / dy
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    elif oy < cy or oy > cy + 1.0:
        return np.inf, -np.inf
    if dz != 0.0:
        ta = (cz - oz) / dz
        tb = (cz + 1.0 - oz) / dz
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    elif oz < cz or oz > cz + 1.0:
        return np.inf, -np.inf
    return t0, t1


@njit(cache=True)
def _cubic_coeffs(c, ox, oy, oz, dx, dy, dz, cx, cy, cz):
    """Coefficients (A,B,C,D) of the trilinear field along the ray, f(t) =
    A t^3 + B t^2 + C t + D, for corners c[i + 2j + 4k] of the unit cell."""
    ax1 = ox - cx
    ay1 = oy - cy
    az1 = oz - cz
    ax0 = 1.0 - ax1
    ay0 = 1.0 - ay1
    az0 = 1.0 - az1
    A = 0.0
    B = 0.0
    C = 0.0
    D = 0.0
    for idx in range(8):
        i = idx & 1
        j = (idx >> 1) & 1
        k = (idx >> 2) & 1
        axa = ax1 if i else ax0
        axb = dx if i else -dx
        aya = ay1 if j else ay0
        ayb = dy if j else -dy
        aza = az1 if k else az0
        azb = dz if k else -dz
        w = np.float64(c[idx])
        A += w * (axb * ayb * azb)
        B += w * (axa * ayb * azb + axb * aya * azb + axb * ayb * aza)
        C += w * (axa * aya * azb + axa * ayb * aza + axb * aya * aza)
        D += w * (axa * aya * aza)
    return A, B, C, D


@njit(cache=True)
def _poly_eval(A, B, C, D, t):
    return ((A * t + B) * t + C) * t + D


@njit(cache=True)
def _refine_root(A, B, C, D, lo, hi, g_lo, g_hi):
    """Repeated linear interpolation inside the bracketing span [lo, hi].

    Illinois-style endpoint damping plus a bisection fallback keep the
    bracket shrinking even when one endpoint sits at a near-zero extremum
    (plain regula falsi stalls there and can miss the root by a large
    fraction of the span).
    """
    tol = 1e-9 * (hi - lo)
    side = 0
    tm = 0.5 * (lo + hi)
    for _ in range(64):
        denom = g_lo - g_hi
        if denom != 0.0:
            tm = lo + (hi - lo) * (g_lo / denom)
        else:
            tm = 0.5 * (lo + hi)
        if tm <= lo or tm >= hi:
            tm = 0.5 * (lo + hi)
        gm = _poly_eval(A, B, C, D, tm)
        if gm == 0.0 or hi - lo < tol:
            return tm
        if (gm < 0.0) == (g_lo < 0.0):
            lo = tm
            g_lo = gm
            if side == -1:
                g_hi *= 0.5
            side = -1
        else:
            hi = tm
            g_hi = gm
            if side == 1:
                g_lo *= 0.5
            side = 1
    return tm


@njit(cache=True)
def _intersect_cubic(c, ox, oy, oz, dx, dy, dz, cx, cy, cz, t0, t1, iso):
    """Smallest root of the trilinear field minus iso in [t0, t1], or inf."""
    A, B, C, D = _cubic_coeffs(c, ox, oy, oz, dx, dy, dz, cx, cy, cz)
    D -= iso
    # span boundaries: t0, interior extrema, t1
    bounds = np.empty(4, dtype=np.float64)
    bounds[0] = t0
    nb = 1
    qa = 3.0 * A
    qb = 2.0 * B
    if qa != 0.0:
        disc = qb * qb - 4.0 * qa * C
        if disc > 0.0:
            sq = math.sqrt(disc)
            q = -0.5 * (qb + sq) if qb >= 0.0 else -0.5 * (qb - sq)
            r1 = q / qa
            r2 = C / q if q != 0.0 else r1
            if r1 > r2:
                r1, r2 = r2, r1
            if t0 < r1 < t1:
                bounds[nb] = r1
                nb += 1
            if t0 < r2 < t1 and r2 != r1:
                bounds[nb] = r2
                nb += 1
    elif qb != 0.0:
        r1 = -C / qb
        if t0 < r1 < t1:
            bounds[nb] = r1
            nb += 1
    bounds[nb] = t1
    nb += 1

    g_prev = _poly_eval(A, B, C, D, bounds[0])
    if g_prev == 0.0:
        return bounds[0]
    for i in range(1, nb):
        g_here = _poly_eval(A, B, C, D, bounds[i])
        if g_here == 0.0:
            return bounds[i]
        if (g_prev < 0.0) != (g_here < 0.0):
            return _refine_root(A, B, C, D, bounds[i - 1], bounds[i], g_prev, g_here)
        g_prev = g_here
    return np.inf


@njit(cache=True)
def _grad_at(c, ux, uy, uz):
    gx = (
        (c[1] - c[0]) * (1.0 - uy) * (1.0 - uz)
        + (c[3] - c[2]) * uy * (1.0 - uz)
        + (c[5] - c[4]) * (1.0 - uy) * uz
        + (c[7] - c[6]) * uy * uz
    )
    gy = (
        (c[2] - c[0]) * (1.0 - ux) * (1.0 - uz)
        + (c[3] - c[1]) * ux * (1.0 - uz)
        + (c[6] - c[4]) * (1.0 - ux) * uz
        + (c[7] - c[5]) * ux * uz
    )
    gz = (
        (c[4] - c[0]) * (1.0 - ux) * (1.0 - uy)
        + (c[5] - c[1]) * ux * (1.0 - uy)
        + (c[6] - c[2]) * (1.0 - ux) * uy
        + (c[7] - c[3]) * ux * uy
    )
    return gx, gy, gz


@njit(cache=True)
def _shade(gx, gy, gz, dx, dy, dz, base_r, base_g, base_b):
    gl = math.sqrt(gx * gx + gy * gy + gz * gz)
    if gl == 0.0:
        inten = AMBIENT
    else:
        cos_t = abs(gx * dx + gy * dy + gz * dz) / gl
        inten = cos_t if cos_t > AMBIENT else AMBIENT
    return base_r * inten, base_g * inten, base_b * inten


@njit(cache=True)
def _trace_region(
    field,
    fox,
    foy,
    foz,
    lo_x,
    lo_y,
    lo_z,
    n_x,
    n_y,
    n_z,
    ox,
    oy,
    oz,
    dx,
    dy,
    dz,
    ray_t_enter,
    iso,
    base_r,
    base_g,
    base_b,
):
    """March the dual cells [lo, lo+n) of `field` along a ray; first hit wins.

    field is indexed [z - foz, y - foy, x - fox]. Returns (t, r, g, b)
    with t = inf when nothing is hit.
    """
    if n_x <= 0 or n_y <= 0 or n_z <= 0:
        return np.inf, 0.0, 0.0, 0.0
    # clip the ray to the region box
    t0 = ray_t_enter
    t1 = np.inf
    if dx != 0.0:
        ta = (lo_x - ox) / dx
        tb = (lo_x + n_x - ox) / dx
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    elif ox < lo_x or ox > lo_x + n_x:
        return np.inf, 0.0, 0.0, 0.0
    if dy != 0.0:
        ta = (lo_y - oy) / dy
        tb = (lo_y + n_y - oy) / dy
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    elif oy < lo_y or oy > lo_y + n_y:
        return np.inf, 0.0, 0.0, 0.0
    if dz != 0.0:
        ta = (lo_z - oz) / dz
        tb = (lo_z + n_z - oz) / dz
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    elif oz < lo_z or oz > lo_z + n_z:
        return np.inf, 0.0, 0.0, 0.0
    if t0 > t1:
        return np.inf, 0.0, 0.0, 0.0

    ts = t0 + _ENTRY_NUDGE * max(1.0, t1 - t0)
    cx = np.int64(math.floor(ox + dx * ts))
    cy = np.int64(math.floor(oy + dy * ts))
    cz = np.int64(math.floor(oz + dz * ts))
    cx = min(max(cx, lo_x), lo_x + n_x - 1)
    cy = min(max(cy, lo_y), lo_y + n_y - 1)
    cz = min(max(cz, lo_z), lo_z + n_z - 1)

    sx = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
    sy = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
    sz = 1 if dz > 0.0 else (-1 if dz < 0.0 else 0)
    del_x = 1.0 / abs(dx) if dx != 0.0 else np.inf
    del_y = 1.0 / abs(dy) if dy != 0.0 else np.inf
    del_z = 1.0 / abs(dz) if dz != 0.0 else np.inf
    tmx = ((cx + 1 - ox) / dx) if dx > 0.0 else (((cx - ox) / dx) if dx < 0.0 else np.inf)
    tmy = ((cy + 1 - oy) / dy) if dy > 0.0 else (((cy - oy) / dy) if dy < 0.0 else np.inf)
    tmz = ((cz + 1 - oz) / dz) if dz > 0.0 else (((cz - oz) / dz) if dz < 0.0 else np.inf)

    corners = np.empty(8, dtype=np.float32)
    while True:
        lx = cx - fox
        ly = cy - foy
        lz = cz - foz
        corners[0] = field[lz, ly, lx]
        corners[1] = field[lz, ly, lx + 1]
        corners[2] = field[lz, ly + 1, lx]
        corners[3] = field[lz, ly + 1, lx + 1]
        corners[4] = field[lz + 1, ly, lx]
        corners[5] = field[lz + 1, ly, lx + 1]
        corners[6] = field[lz + 1, ly + 1, lx]
        corners[7] = field[lz + 1, ly + 1, lx + 1]
        cmin = corners[0]
        cmax = corners[0]
        for q in range(1, 8):
            if corners[q] < cmin:
                cmin = corners[q]
            if corners[q] > cmax:
                cmax = corners[q]
        if cmin <= iso and iso <= cmax:
            ct0, ct1 = _cell_overlap(ox, oy, oz, dx, dy, dz, cx, cy, cz)
            if ct0 < ray_t_enter:
                ct0 = ray_t_enter
            if ct0 <= ct1:
                th = _intersect_cubic(
                    corners, ox, oy, oz, dx, dy, dz, cx, cy, cz, ct0, ct1, iso
                )
                if th != np.inf:
                    ux = min(max(ox + dx * th - cx, 0.0), 1.0)
                    uy = min(max(oy + dy * th - cy, 0.0), 1.0)
                    uz = min(max(oz + dz * th - cz, 0.0), 1.0)
                    gx, gy, gz = _grad_at(corners, ux, uy, uz)
                    r, g, b = _shade(gx, gy, gz, dx, dy, dz, base_r, base_g, base_b)
                    return th, r, g, b
        # advance to the next cell; ties step the lowest axis
        if tmx <= tmy and tmx <= tmz:
            cx += sx
            tmx += del_x
            if cx < lo_x or cx >= lo_x + n_x:
                return np.inf, 0.0, 0.0, 0.0
        elif tmy <= tmz:
            cy += sy
            tmy += del_y
            if cy < lo_y or cy >= lo_y + n_y:
                return np.inf, 0.0, 0.0, 0.0
        else:
            cz += sz
            tmz += del_z
            if cz < lo_z or cz >= lo_z + n_z:
                return np.inf, 0.0, 0.0, 0.0


def intersect_cell(corners, origin, direction, cell, t0, t1, iso):
    """Smallest ray parameter where the trilinear field in the unit cell at
    integer corner `cell` equals iso within [t0, t1], or None."""
    c = np.ascontiguousarray(corners, dtype=np.float32)
    assert c.shape == (8,)
    t = _intersect_cubic(
        c,
        float(origin[0]),
        float(origin[1]),
        float(origin[2]),
        float(direction[0]),
        float(direction[1]),
        float(direction[2]),
        float(cell[0]),
        float(cell[1]),
        float(cell[2]),
        float(t0),
        float(t1),
        float(iso),
    )
    return None if t == np.inf else float(t)


def shade(grad, direction, base_color=BASE_COLOR):
    """Two-sided headlight Lambertian with an ambient floor."""
    r, g, b = _shade(
        float(grad[0]),
        float(grad[1]),
        float(grad[2]),
        float(direction[0]),
        float(direction[1]),
        float(direction[2]),
        float(base_color[0]),
        float(base_color[1]),
        float(base_color[2]),
    )
    return r, g, b


def raytrace_block(
    dg: DualGrid,
    ray_ids: np.ndarray,
    rays,
    iso: float,
    rgbz_rgb: np.ndarray,
    rgbz_z: np.ndarray,
    hit_slots: np.ndarray,
    base_color=BASE_COLOR,
) -> None:
    """Intersect the given rays against one block's dual cells.

    Hit color and depth for ray_ids[j] are written to rgbz slot
    hit_slots[j]; misses leave the slot untouched (z stays +inf).
    """
    ox_, oy_, oz_ = dg.block_origin
    nx_, ny_, nz_ = dg.cells_per_axis
    for j in range(len(ray_ids)):
        r = int(ray_ids[j])
        t, cr, cg, cb = _trace_region(
            dg.values,
            ox_,
            oy_,
            oz_,
            ox_,
            oy_,
            oz_,
            nx_,
            ny_,
            nz_,
            rays.origin[r, 0],
            rays.origin[r, 1],
            rays.origin[r, 2],
            rays.direction[r, 0],
            rays.direction[r, 1],
            rays.direction[r, 2],
            rays.t_enter[r],
            float(iso),
            base_color[0],
            base_color[1],
            base_color[2],
        )
        if t != np.inf:
            s = int(hit_slots[j])
            rgbz_z[s] = t
            rgbz_rgb[s, 0] = cr
            rgbz_rgb[s, 1] = cg
            rgbz_rgb[s, 2] = cb
