"""Command-line entry points: compress, render, bench, oracle-check, serve.

Exit codes: 0 ok, 1 check failure, 2 usage error, 3 I/O or data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import codec, engine, oracle, ppm
from .errors import DataError, UsageError
from .grids import build_grids
from .traversal import Camera
from .volume import load_raw

REPORT_VERSION = 1


def _vec3(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"expected three comma-separated numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _ivec3(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"expected three comma-separated integers, got {text!r}")
    return tuple(int(p) for p in parts)


def _load_wcz(path: str):
    cv = codec.read_wcz(path)
    return cv, build_grids(cv)


def volume_center(dims) -> tuple[float, float, float]:
    return tuple((d - 1) / 2.0 for d in dims)


def orbit_camera(dims, step: int, steps: int, fov_y: float = 45.0) -> Camera:
    """Equal-angle azimuth orbit in the y=center plane, looking at the center."""
    center = volume_center(dims)
    dist = 1.8 * max(dims)
    angle = 2.0 * np.pi * step / steps
    eye = (
        center[0] + dist * np.sin(angle),
        center[1],
        center[2] + dist * np.cos(angle),
    )
    return Camera.look_at(eye, center, fov_y=fov_y)


def _camera_from_args(args, dims) -> Camera:
    if args.eye is None:
        return orbit_camera(dims, 0, 1, fov_y=args.fov)
    target = args.look_at if args.look_at is not None else volume_center(dims)
    up = args.up if args.up is not None else (0.0, 1.0, 0.0)
    return Camera.look_at(args.eye, target, up=up, fov_y=args.fov)


def _add_camera_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eye", type=_vec3, default=None, help="camera position x,y,z")
    p.add_argument("--look-at", type=_vec3, default=None, help="target point x,y,z")
    p.add_argument("--up", type=_vec3, default=None, help="up vector x,y,z")
    p.add_argument("--fov", type=float, default=45.0, help="vertical field of view, degrees")


def cmd_compress(args) -> int:
    if not (codec.QBITS_MIN <= args.qbits <= codec.QBITS_MAX):
        raise UsageError(
            f"qbits must be in [{codec.QBITS_MIN}, {codec.QBITS_MAX}], got {args.qbits}"
        )
    vol = load_raw(args.input, args.dims, args.dtype)
    cv = codec.compress_volume(vol, args.qbits)
    codec.write_wcz(cv, args.output)
    print(f"wrote {args.output}: {cv.block_count} blocks, stride {cv.block_stride_bytes} B")
    return 0


def _stats_json(stats) -> list[dict]:
    return [dataclasses.asdict(s) for s in stats]


def cmd_render(args) -> int:
    cv, grids = _load_wcz(args.volume)
    cam = _camera_from_args(args, cv.dims)
    opts = engine.RenderOptions(
        width=args.width,
        height=args.height,
        speculation=args.speculation == "on",
        max_spec=args.max_spec,
    )
    passes_dir = Path(args.passes_dir) if args.passes_dir else None
    if passes_dir:
        passes_dir.mkdir(parents=True, exist_ok=True)
    fb = None
    stats = []
    for snapshot, ps in engine.render_passes(cv, grids, cam, args.iso, opts):
        fb = snapshot
        stats.append(ps)
        if passes_dir:
            ppm.write_ppm(passes_dir / f"pass_{ps.pass_index:03d}.ppm", snapshot.rgba)
    if fb is None:
        fb = engine.Framebuffer.blank(args.width, args.height)
        fb.completeness = 1.0
    if args.out:
        ppm.write_ppm(args.out, fb.rgba)
    if args.stats:
        Path(args.stats).write_text(json.dumps(_stats_json(stats), indent=2))
    print(f"rendered {args.width}x{args.height} in {len(stats)} passes")
    return 0


def _bench_scenes(cv, dec_range, args):
    lo, hi = dec_range
    if args.iso_range is not None:
        iso_lo, iso_hi = args.iso_range
    else:
        span = hi - lo
        iso_lo, iso_hi = lo + 0.05 * span, hi - 0.05 * span
    rng = np.random.default_rng(args.seed)
    isovalues = rng.uniform(iso_lo, iso_hi, args.isovalues)
    for iso in isovalues:
        for k in range(args.orbit_steps):
            yield float(iso), orbit_camera(cv.dims, k, args.orbit_steps)


def cmd_bench(args) -> int:
    cv, grids = _load_wcz(args.volume)
    dec = oracle.decode_full(cv)
    opts = engine.RenderOptions(
        width=args.width, height=args.height, speculation=args.speculation == "on"
    )
    pass_counts = []
    visible_fracs = []
    spec_counts = []
    utilizations = []
    completeness_curves = []
    new_per_pass = []
    max_slots = 0
    for iso, cam in _bench_scenes(cv, dec.value_range, args):
        _, stats = engine.render(cv, grids, cam, iso, opts)
        pass_counts.append(len(stats))
        if stats:
            visible_fracs.append(
                float(np.mean([s.visible_blocks for s in stats])) / cv.block_count
            )
            spec_counts.extend(s.n_spec for s in stats)
            utilizations.extend(s.utilization for s in stats)
            new_per_pass.extend(s.new_decompressed for s in stats)
            max_slots = max(max_slots, max(s.cache_slots for s in stats))
            completeness_curves.append([s.completeness for s in stats])
    max_passes = max((len(c) for c in completeness_curves), default=0)
    mean_completeness = [
        float(np.mean([c[i] if i < len(c) else 1.0 for c in completeness_curves]))
        for i in range(max_passes)
    ]
    report = {
        "report_version": REPORT_VERSION,
        "config": {
            "volume": str(args.volume),
            "qbits": cv.qbits,
            "isovalues": args.isovalues,
            "orbit_steps": args.orbit_steps,
            "seed": args.seed,
            "width": args.width,
            "height": args.height,
            "speculation": args.speculation,
            "iso_range": list(args.iso_range) if args.iso_range else None,
        },
        "n_renders": len(pass_counts),
        "median_passes": float(np.median(pass_counts)) if pass_counts else 0.0,
        "avg_visible_fraction": float(np.mean(visible_fracs)) if visible_fracs else 0.0,
        "median_spec_count": float(np.median(spec_counts)) if spec_counts else 0.0,
        "avg_utilization": float(np.mean(utilizations)) if utilizations else 0.0,
        "mean_completeness_by_pass": mean_completeness,
        "cache": {
            "mean_new_decompressed_per_pass": float(np.mean(new_per_pass)) if new_per_pass else 0.0,
            "max_cache_slots": int(max_slots),
        },
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.report:
        Path(args.report).write_text(text)
    else:
        print(text)
    return 0


def cmd_oracle_check(args) -> int:
    cv, grids = _load_wcz(args.volume)
    cam = _camera_from_args(args, cv.dims)
    opts = engine.RenderOptions(
        width=args.width,
        height=args.height,
        speculation=True,
        corrupt_cache=args.corrupt_cache,
    )
    fb, _ = engine.render(cv, grids, cam, args.iso, opts)
    dec = oracle.decode_full(cv)
    ref = oracle.reference_render(dec, cam, args.iso, args.width, args.height)
    diff = oracle.compare_images(fb, ref)
    print(json.dumps(diff, indent=2))
    if diff["hit_mask_mismatches"] > 0:
        mism = np.nonzero(np.isfinite(fb.depth) != np.isfinite(ref.depth))
        for y, x in list(zip(*mism))[:10]:
            print(
                f"  pixel ({x},{y}): wavefront depth {fb.depth[y, x]}, "
                f"reference depth {ref.depth[y, x]}",
                file=sys.stderr,
            )
        return 1
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cv, grids = _load_wcz(args.volume)
    app = create_app(cv, grids, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="wavecast",
        description="Progressive wavefront isosurface raycaster over block-compressed volumes",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a raw volume into a .wcz container")
    p.add_argument("--input", required=True)
    p.add_argument("--dims", type=_ivec3, required=True, help="voxels per axis X,Y,Z")
    p.add_argument("--dtype", choices=["u8", "u16", "f32"], required=True)
    p.add_argument("--qbits", type=int, default=16, help="quantization bits per value")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("render", help="render one isosurface view to a PPM image")
    p.add_argument("--volume", required=True, help=".wcz file")
    p.add_argument("--iso", type=float, required=True)
    _add_camera_args(p)
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=720)
    p.add_argument("--speculation", choices=["on", "off"], default="on")
    p.add_argument("--max-spec", type=int, default=engine.MAX_SPEC_DEFAULT)
    p.add_argument("--out", default=None, help="final image path (PPM)")
    p.add_argument("--passes-dir", default=None, help="write per-pass snapshots here")
    p.add_argument("--stats", default=None, help="write per-pass stats JSON here")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench", help="benchmark over random isovalues and a camera orbit")
    p.add_argument("--volume", required=True)
    p.add_argument("--isovalues", type=int, default=100)
    p.add_argument("--orbit-steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=720)
    p.add_argument("--speculation", choices=["on", "off"], default="on")
    p.add_argument("--iso-range", type=_vec3_pair, default=None, metavar="LO,HI",
                   help="override the isovalue sampling range")
    p.add_argument("--report", default=None, help="write the report JSON here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle-check", help="compare the wavefront renderer to the brute-force oracle")
    p.add_argument("--volume", required=True)
    p.add_argument("--iso", type=float, required=True)
    _add_camera_args(p)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--corrupt-cache", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("serve", help="run the progressive streaming service")
    p.add_argument("--volume", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8790)
    p.add_argument("--ui", default=None, help="static viewer directory to serve at /")
    p.set_defaults(func=cmd_serve)
    return top


def _vec3_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"expected LO,HI, got {text!r}")
    return float(parts[0]), float(parts[1])


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
