"""Raw scalar volume loading and deterministic test-volume synthesis.

All dense arrays in this package use the same linear layout: x varies
fastest, then y, then z, so the flat index of voxel (x, y, z) is
``x + nx * (y + ny * z)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError

_DTYPES = {
    "u8": np.dtype("<u1"),
    "u16": np.dtype("<u2"),
    "f32": np.dtype("<f4"),
}

# Marschner-Lobb test signal parameters (the standard choice).
_ML_FREQ = 6.0
_ML_ALPHA = 0.25


@dataclass(frozen=True)
class Volume:
    """Dense single-precision scalar field with x-fastest layout."""

    dims: tuple[int, int, int]
    values: np.ndarray
    value_range: tuple[float, float]

    def __post_init__(self):
        nx, ny, nz = self.dims
        assert self.values.dtype == np.float32
        assert self.values.shape == (nx * ny * nz,)

    def as_3d(self) -> np.ndarray:
        """View of the values as a (z, y, x) indexed array."""
        nx, ny, nz = self.dims
        return self.values.reshape(nz, ny, nx)


def _make_volume(dims, values: np.ndarray) -> Volume:
    values = np.ascontiguousarray(values.reshape(-1), dtype=np.float32)
    return Volume(
        dims=tuple(int(d) for d in dims),
        values=values,
        value_range=(float(values.min()), float(values.max())),
    )


def load_raw(path: str | os.PathLike, dims, dtype: str) -> Volume:
    """Load a headerless little-endian raw volume.

    Integer samples are cast directly to float32 with no normalization,
    so isovalues keep the units of the source data.
    """
    if dtype not in _DTYPES:
        raise UsageError(f"unknown dtype {dtype!r}; expected one of {sorted(_DTYPES)}")
    nx, ny, nz = (int(d) for d in dims)
    if min(nx, ny, nz) < 1:
        raise UsageError(f"dims must be positive, got {(nx, ny, nz)}")
    nd = _DTYPES[dtype]
    expected = nx * ny * nz * nd.itemsize
    actual = os.path.getsize(path)
    if actual != expected:
        raise DataError(
            f"{path}: expected {expected} bytes for dims {(nx, ny, nz)} "
            f"dtype {dtype}, file has {actual} bytes"
        )
    raw = np.fromfile(path, dtype=nd)
    return _make_volume((nx, ny, nz), raw.astype(np.float32))


def save_raw(volume: Volume, path: str | os.PathLike) -> None:
    """Write the volume as little-endian f32, inverse of load_raw(dtype='f32')."""
    volume.values.astype("<f4").tofile(path)


def synthesize(kind: str, dims, seed: int = 0) -> Volume:
    """Generate a deterministic test volume.

    kinds: ``sphere`` (distance from the volume center in voxel units),
    ``marschner_lobb`` (classic frequency-sweep test signal on [-1,1]^3),
    ``value_noise`` (seeded multi-octave value noise).
    """
    nx, ny, nz = (int(d) for d in dims)
    if nx < 8 or ny < 8 or nz < 8:
        raise UsageError(f"synthesized dims must be at least (8,8,8), got {(nx, ny, nz)}")
    if kind == "sphere":
        vals = _sphere(nx, ny, nz)
    elif kind == "marschner_lobb":
        vals = _marschner_lobb(nx, ny, nz)
    elif kind == "value_noise":
        vals = _value_noise(nx, ny, nz, np.uint64(seed))
    else:
        raise UsageError(f"unknown volume kind {kind!r}")
    return _make_volume((nx, ny, nz), vals)


def _grid_coords(nx, ny, nz):
    z, y, x = np.meshgrid(
        np.arange(nz, dtype=np.float64),
        np.arange(ny, dtype=np.float64),
        np.arange(nx, dtype=np.float64),
        indexing="ij",
    )
    return x, y, z


def _sphere(nx, ny, nz) -> np.ndarray:
    x, y, z = _grid_coords(nx, ny, nz)
    cx, cy, cz = (nx - 1) / 2.0, (ny - 1) / 2.0, (nz - 1) / 2.0
    d = np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2)
    return d.astype(np.float32)


def _marschner_lobb(nx, ny, nz) -> np.ndarray:
    x, y, z = _grid_coords(nx, ny, nz)
    x = 2.0 * x / (nx - 1) - 1.0
    y = 2.0 * y / (ny - 1) - 1.0
    z = 2.0 * z / (nz - 1) - 1.0
    r = np.sqrt(x * x + y * y)
    rho_r = np.cos(2.0 * np.pi * _ML_FREQ * np.cos(np.pi * r / 2.0))
    v = (1.0 - np.sin(np.pi * z / 2.0) + _ML_ALPHA * (1.0 + rho_r)) / (2.0 * (1.0 + _ML_ALPHA))
    return v.astype(np.float32)


_MASK64 = (1 << 64) - 1


def _mix64(h: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps mod 2**64.
    with np.errstate(over="ignore"):
        h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return h ^ (h >> np.uint64(31))


def _mix64_int(h: int) -> int:
    h &= _MASK64
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
    return h ^ (h >> 31)


def _lattice01(ix: np.ndarray, iy: np.ndarray, iz: np.ndarray, salt: np.uint64) -> np.ndarray:
    h = (
        ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        ^ iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
        ^ iz.astype(np.uint64) * np.uint64(0x165667B19E3779F9)
        ^ salt
    )
    return (_mix64(h) >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)


def _value_noise(nx, ny, nz, seed: np.uint64) -> np.ndarray:
    x, y, z = _grid_coords(nx, ny, nz)
    out = np.zeros((nz, ny, nx), dtype=np.float64)
    amp = 1.0
    total = 0.0
    for octave in range(4):
        spacing = 16.0 / (1 << octave)
        salt = np.uint64(_mix64_int(int(seed) + octave + 1))
        fx, fy, fz = x / spacing, y / spacing, z / spacing
        ix, iy, iz = np.floor(fx), np.floor(fy), np.floor(fz)
        tx, ty, tz = fx - ix, fy - iy, fz - iz
        # smoothstep fade keeps the field C1 across lattice cells
        tx = tx * tx * (3.0 - 2.0 * tx)
        ty = ty * ty * (3.0 - 2.0 * ty)
        tz = tz * tz * (3.0 - 2.0 * tz)
        acc = np.zeros_like(out)
        for oz in (0.0, 1.0):
            wz = tz if oz else 1.0 - tz
            for oy in (0.0, 1.0):
                wy = ty if oy else 1.0 - ty
                for ox in (0.0, 1.0):
                    wx = tx if ox else 1.0 - tx
                    corner = _lattice01(ix + ox, iy + oy, iz + oz, salt)
                    acc += corner * (wx * wy * wz)
        out += amp * acc
        total += amp
        amp *= 0.5
    return (out / total).astype(np.float32)
