import numpy as np
import pytest

from wavecast import build_grids, compress_volume, decode_full, synthesize
from wavecast.codec import quant_scale
from wavecast.grids import ValueRange
from wavecast.volume import Volume


def _volume_from(values3):
    values3 = np.asarray(values3, dtype=np.float32)
    nz, ny, nx = values3.shape
    flat = values3.reshape(-1)
    return Volume((nx, ny, nz), flat, (float(flat.min()), float(flat.max())))


def test_value_range_contains():
    vr = ValueRange(1.0, 3.0)
    assert vr.contains(1.0) and vr.contains(3.0) and vr.contains(2.0)
    assert not vr.contains(0.999) and not vr.contains(3.001)


def test_grid_dims_16_cubed():
    cv = compress_volume(synthesize("sphere", (16, 16, 16)), 16)
    grids = build_grids(cv)
    assert grids.fine_dims == (4, 4, 4)
    assert grids.coarse_dims == (1, 1, 1)


def test_constant_volume_ranges_are_widened_constant():
    vol = _volume_from(np.full((16, 16, 16), 5.0))
    cv = compress_volume(vol, 16)
    grids = build_grids(cv)
    # m = 5 -> e = 3, bound = 2^3 / (2S)
    eps = 2.0**3 / (2.0 * quant_scale(16))
    assert np.all(grids.fine_min == 5.0 - eps)
    assert np.all(grids.fine_max == 5.0 + eps)
    assert np.all(grids.coarse_min == 5.0 - eps)
    assert np.all(grids.coarse_max == 5.0 + eps)


def test_sphere_fine_range_brackets_dual_support():
    vol = synthesize("sphere", (64, 64, 64))
    cv = compress_volume(vol, 16)
    grids = build_grids(cv)
    src = vol.as_3d().astype(np.float64)
    for coords in [(4, 4, 4), (7, 8, 9), (2, 10, 5)]:
        b = cv.block_id(*coords)
        bx, by, bz = coords
        support = src[4 * bz : 4 * bz + 5, 4 * by : 4 * by + 5, 4 * bx : 4 * bx + 5]
        # conservative: the dual support must be inside the fine range
        assert grids.fine_min[b] <= support.min()
        assert grids.fine_max[b] >= support.max()
        # and not wider than the full positive-octant union plus widening
        region = src[4 * bz : 4 * bz + 8, 4 * by : 4 * by + 8, 4 * bx : 4 * bx + 8]
        wb = cv.block_error_bounds.max()
        assert grids.fine_min[b] >= region.min() - wb - 1e-9
        assert grids.fine_max[b] <= region.max() + wb + 1e-9


def _dual_cell_minmax(dec3):
    """8-corner min/max of every dual cell of a decoded volume."""
    v = dec3
    stacks_min = None
    stacks_max = None
    for oz in (0, 1):
        for oy in (0, 1):
            for ox in (0, 1):
                s = v[oz : v.shape[0] - 1 + oz, oy : v.shape[1] - 1 + oy, ox : v.shape[2] - 1 + ox]
                stacks_min = s if stacks_min is None else np.minimum(stacks_min, s)
                stacks_max = s if stacks_max is None else np.maximum(stacks_max, s)
    return stacks_min, stacks_max


@pytest.mark.parametrize("kind,qbits", [("sphere", 8), ("value_noise", 8), ("value_noise", 16)])
def test_no_false_negatives_exhaustive_32(kind, qbits):
    vol = synthesize(kind, (32, 32, 32), seed=13)
    cv = compress_volume(vol, qbits)
    grids = build_grids(cv)
    dec = decode_full(cv).as_3d().astype(np.float64)
    cmin, cmax = _dual_cell_minmax(dec)

    nz, ny, nx = (d - 1 for d in dec.shape)
    bdx, bdy, bdz = cv.block_dims
    zz, yy, xx = np.meshgrid(
        np.arange(nz) // 4, np.arange(ny) // 4, np.arange(nx) // 4, indexing="ij"
    )
    owner = (xx + bdx * (yy + bdy * zz)).reshape(-1)
    cmin = cmin.reshape(-1)
    cmax = cmax.reshape(-1)

    fats = grids.fine_min[owner], grids.fine_max[owner]
    coarse_owner_x = (xx // 4).reshape(-1)
    coarse_owner_y = (yy // 4).reshape(-1)
    coarse_owner_z = (zz // 4).reshape(-1)
    cdx, cdy, _ = grids.coarse_dims
    cowner = coarse_owner_x + cdx * (coarse_owner_y + cdy * coarse_owner_z)
    coarse = grids.coarse_min[cowner], grids.coarse_max[cowner]

    rng = np.random.default_rng(17)
    lo, hi = float(dec.min()), float(dec.max())
    for iso in rng.uniform(lo, hi, 50):
        bracketing = (cmin <= iso) & (iso <= cmax)
        fine_ok = (fats[0] <= iso) & (iso <= fats[1])
        assert not np.any(bracketing & ~fine_ok), f"fine false negative at iso={iso}"
        coarse_ok = (coarse[0] <= iso) & (iso <= coarse[1])
        assert not np.any(bracketing & ~coarse_ok), f"coarse false negative at iso={iso}"


def test_fine_ranges_subset_of_coarse():
    # with both levels widened per contributing block, fine[b] stays inside
    # coarse[owner(b)], which is what lets the coarse level prune safely
    vol = synthesize("value_noise", (48, 33, 40), seed=21)
    cv = compress_volume(vol, 8)
    grids = build_grids(cv)
    bdx, bdy, bdz = cv.block_dims
    cdx, cdy, _ = grids.coarse_dims
    for b in range(cv.block_count):
        bx = b % bdx
        by = (b // bdx) % bdy
        bz = b // (bdx * bdy)
        c = (bx // 4) + cdx * ((by // 4) + cdy * (bz // 4))
        assert grids.coarse_min[c] <= grids.fine_min[b]
        assert grids.coarse_max[c] >= grids.fine_max[b]
