import numpy as np
import pytest

from wavecast import (
    Camera,
    RenderOptions,
    compare_images,
    compute_n_spec,
    reference_render,
    render,
    render_passes,
)
from wavecast.engine import Framebuffer, build_rt_inputs, composite, mark_blocks
from wavecast.prims import exclusive_scan
from wavecast.traversal import STATUS_ACTIVE, STATUS_HIT, STATUS_MISS, UINT_MAX, RaySoA

from reference_impl import group_by_block


def _orbit_cam(dims, frac=0.0):
    center = tuple((d - 1) / 2 for d in dims)
    dist = 1.8 * max(dims)
    ang = 2 * np.pi * frac
    eye = (center[0] + dist * np.sin(ang), center[1], center[2] + dist * np.cos(ang))
    return Camera.look_at(eye, center)


def test_compute_n_spec():
    assert compute_n_spec(1280 * 720, 1280, 720) == 1
    assert compute_n_spec(2, 3, 2) == 3  # w*h = 6, two active rays
    assert compute_n_spec(100, 1280, 720) == 64  # clamped
    assert compute_n_spec(100, 1280, 720, max_spec=128) == 128
    assert compute_n_spec(5, 2, 2) == 1  # floor(4/5) -> minimum 1


def test_mark_blocks_interior_and_corner():
    bd = (4, 4, 4)
    slots = np.full(16, UINT_MAX, dtype=np.uint32)
    slots[3] = 1 + 4 * (1 + 4 * 1)  # block (1,1,1)
    vis, act = mark_blocks(slots, bd)
    assert vis.sum() == 1 and act.sum() == 8
    assert act[1 + 4 * (1 + 4 * 1)] and act[2 + 4 * (2 + 4 * 2)]

    slots = np.full(16, UINT_MAX, dtype=np.uint32)
    slots[0] = 3 + 4 * (3 + 4 * 3)  # +x/+y/+z corner block
    vis, act = mark_blocks(slots, bd)
    assert vis.sum() == 1 and act.sum() == 1

    slots = np.full(16, UINT_MAX, dtype=np.uint32)
    vis, act = mark_blocks(slots, bd)
    assert vis.sum() == 0 and act.sum() == 0


def test_build_rt_inputs_worked_example():
    n_blocks = 8
    slots = np.array([5, 2, 5, UINT_MAX], dtype=np.uint32)
    rays = np.array([0, 1, 2, 0], dtype=np.uint32)
    vis, _ = mark_blocks(slots, (2, 2, 2))
    pb = build_rt_inputs(slots, rays, vis)
    assert pb.visible_ids.tolist() == [2, 5]
    assert pb.rays_per_block.tolist() == [1, 2]
    assert pb.block_ray_offsets.tolist() == [0, 1]
    assert pb.sorted_ray_ids.tolist() == [1, 0, 2]
    assert pb.sorted_hit_slots.tolist() == [1, 0, 2]
    assert pb.n_entries == 3


def test_build_rt_inputs_empty():
    slots = np.full(6, UINT_MAX, dtype=np.uint32)
    vis, _ = mark_blocks(slots, (2, 2, 2))
    pb = build_rt_inputs(slots, np.zeros(6, dtype=np.uint32), vis)
    assert pb.n_entries == 0
    assert len(pb.visible_ids) == 0
    assert len(pb.sorted_ray_ids) == 0


def test_build_rt_inputs_matches_group_by_oracle():
    rng = np.random.default_rng(67)
    n_blocks = 64
    for _ in range(20):
        n = int(rng.integers(1, 200))
        slots = rng.integers(0, n_blocks, n).astype(np.uint32)
        invalid = rng.random(n) < 0.4
        slots[invalid] = UINT_MAX
        rays = rng.integers(0, 1000, n).astype(np.uint32)
        vis, _ = mark_blocks(slots, (4, 4, 4))
        pb = build_rt_inputs(slots, rays, vis)
        ref = group_by_block(slots, rays)
        assert pb.visible_ids.tolist() == ref["visible"]
        assert pb.rays_per_block.tolist() == ref["counts"]
        assert pb.sorted_ray_ids.tolist() == ref["sorted_rays"]
        # hit slots must be the compacted entry index, in the same order
        valid_idx = [i for i in range(n) if slots[i] != UINT_MAX]
        compact_of = {orig: k for k, orig in enumerate(valid_idx)}
        assert pb.sorted_hit_slots.tolist() == [
            compact_of[i] for i in ref["sorted_entry_index"]
        ]


def _composite_fixture(n_spec, zs, exited):
    n = 4
    rays = RaySoA(n, n, 1)
    rays.status[:] = STATUS_MISS
    rays.status[0] = STATUS_ACTIVE
    rays.exited[0] = 1 if exited else 0
    rays.block_slots[:] = UINT_MAX
    for k, z in enumerate(zs):
        if z is not None:
            rays.block_slots[k] = 7  # any valid block id
    offsets, _ = exclusive_scan((rays.status == STATUS_ACTIVE).astype(np.uint32))
    valid_prefix, n_valid = exclusive_scan((rays.block_slots != UINT_MAX).astype(np.uint32))
    rgbz_z = np.full(n, np.inf, dtype=np.float32)
    rgbz_rgb = np.zeros((n, 3), dtype=np.float32)
    j = 0
    for z in zs:
        if z is not None:
            rgbz_z[j] = z
            rgbz_rgb[j] = (0.5, 0.5, 0.5)
            j += 1
    fb = Framebuffer.blank(n, 1)
    composite(rgbz_rgb, rgbz_z, rays, n_spec, offsets, valid_prefix, fb)
    return rays, fb


def test_composite_min_depth_wins():
    rays, fb = _composite_fixture(3, [np.inf, 3.2, 5.0], exited=False)
    assert rays.status[0] == STATUS_HIT
    assert fb.depth[0, 0] == np.float32(3.2)
    assert fb.rgba[0, 0, 3] == 255


def test_composite_exited_writes_background():
    rays, fb = _composite_fixture(3, [np.inf, np.inf, np.inf], exited=True)
    assert rays.status[0] == STATUS_MISS
    assert fb.depth[0, 0] == np.inf
    assert tuple(fb.rgba[0, 0]) == (0, 0, 0, 255)


def test_composite_unfinished_stays_active():
    rays, fb = _composite_fixture(3, [None, None, None], exited=False)
    assert rays.status[0] == STATUS_ACTIVE
    assert fb.depth[0, 0] == np.inf


def test_render_iso_outside_range_single_pass(sphere64):
    _, cv, grids, _ = sphere64
    cam = _orbit_cam(cv.dims)
    fb, stats = render(cv, grids, cam, 1000.0, RenderOptions(width=32, height=32))
    assert len(stats) == 1
    assert fb.completeness == 1.0
    assert not np.isfinite(fb.depth).any()
    assert (fb.rgba[..., :3] == 0).all()


def test_render_parity_with_reference(sphere64):
    _, cv, grids, dec = sphere64
    cam = _orbit_cam(cv.dims, 0.13)
    fb, stats = render(cv, grids, cam, 20.0, RenderOptions(width=96, height=96))
    ref = reference_render(dec, cam, 20.0, 96, 96)
    diff = compare_images(fb, ref)
    assert diff["hit_mask_mismatches"] == 0
    assert diff["max_depth_delta"] <= 1e-3
    assert diff["max_rgb_delta"] == 0


def test_speculation_invariance_and_pass_reduction(noise64):
    _, cv, grids, dec = noise64
    lo, hi = dec.value_range
    iso = 0.5 * (lo + hi)
    cam = _orbit_cam(cv.dims, 0.4)
    on, s_on = render(cv, grids, cam, iso, RenderOptions(width=64, height=64, speculation=True))
    off, s_off = render(cv, grids, cam, iso, RenderOptions(width=64, height=64, speculation=False))
    assert np.array_equal(on.rgba, off.rgba)
    assert np.array_equal(on.depth, off.depth)
    assert len(s_on) <= len(s_off)
    assert all(s.n_spec == 1 for s in s_off)


def test_progressive_monotone_and_budget(sphere64):
    _, cv, grids, _ = sphere64
    cam = _orbit_cam(cv.dims, 0.7)
    opts = RenderOptions(width=64, height=64)
    prev_completeness = 0.0
    prev_rgba = None
    prev_written = None
    for snap, stats in render_passes(cv, grids, cam, 20.0, opts):
        assert stats.completeness >= prev_completeness
        prev_completeness = stats.completeness
        assert 0.0 <= stats.utilization <= 1.0
        assert stats.active_blocks <= 8 * stats.visible_blocks or stats.visible_blocks == 0
        written = np.isfinite(snap.depth)
        if prev_rgba is not None:
            # pixels, once written, never change
            assert np.array_equal(snap.rgba[prev_written], prev_rgba[prev_written])
        prev_rgba = snap.rgba
        prev_written = written
    assert prev_completeness == 1.0


def test_render_camera_missing_volume_entirely(sphere64):
    _, cv, grids, _ = sphere64
    cam = Camera((31.5, 31.5, 200.0), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0), 45.0)
    fb, stats = render(cv, grids, cam, 20.0, RenderOptions(width=16, height=16))
    assert stats == []
    assert fb.completeness == 1.0
