"""Fixed-rate block-floating-point compression of volumes into 4^3 blocks.

Every block compresses to the same byte count so block b starts at byte
``b * block_stride_bytes`` and can be decoded independently, in any order.

Per-block bit layout (LSB-first within a little-endian byte stream):
  bits [0, 16)                  exponent e as signed 16-bit, or the
                                sentinel 0x8000 for an all-zero block
  bits [16 + i*qbits, ...)      value i as a signed qbits-bit integer
                                q_i = round(v_i * 2^-e * S), S = 2^(qbits-1) - 1
The stride is padded up to a whole number of 32-bit words.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DataError, UsageError
from .volume import Volume

QBITS_MIN = 4
QBITS_MAX = 26
ZERO_EXPONENT_SENTINEL = 0x8000

_WCZ_MAGIC = b"WCZ1"
_WCZ_VERSION = 1


@dataclass(frozen=True)
class CompressedVolume:
    """A volume compressed as independently decodable fixed-rate 4^3 blocks."""

    dims: tuple[int, int, int]
    block_dims: tuple[int, int, int]
    qbits: int
    block_stride_bytes: int
    payload: np.ndarray                 # uint8, block_count * block_stride_bytes
    raw_block_ranges: np.ndarray        # float32 (block_count, 2), (min, max) of valid voxels
    # 2^e/(2S) per block, 0 for all-zero blocks; derived from the payload.
    block_error_bounds: np.ndarray = field(repr=False)

    @property
    def block_count(self) -> int:
        bx, by, bz = self.block_dims
        return bx * by * bz

    def block_id(self, bx: int, by: int, bz: int) -> int:
        bdx, bdy, bdz = self.block_dims
        if not (0 <= bx < bdx and 0 <= by < bdy and 0 <= bz < bdz):
            raise IndexError(f"block coords {(bx, by, bz)} out of range {self.block_dims}")
        return bx + bdx * (by + bdy * bz)

    def block_coords(self, block_id: int) -> tuple[int, int, int]:
        bdx, bdy, bdz = self.block_dims
        if not (0 <= block_id < self.block_count):
            raise IndexError(f"block id {block_id} out of range {self.block_count}")
        bx = block_id % bdx
        by = (block_id // bdx) % bdy
        bz = block_id // (bdx * bdy)
        return bx, by, bz


def block_stride_bytes(qbits: int) -> int:
    return -((16 + 64 * qbits) // -32) * 4


def quant_scale(qbits: int) -> int:
    return (1 << (qbits - 1)) - 1


def _check_qbits(qbits: int) -> None:
    if not (QBITS_MIN <= qbits <= QBITS_MAX):
        raise UsageError(f"qbits must be in [{QBITS_MIN}, {QBITS_MAX}], got {qbits}")


def _gather_blocks(vol: Volume) -> tuple[np.ndarray, np.ndarray]:
    """Return (blocks, ranges): edge-replicated 4^3 blocks plus per-block
    (min,max) over valid voxels only."""
    nx, ny, nz = vol.dims
    bdx, bdy, bdz = -(nx // -4), -(ny // -4), -(nz // -4)
    v3 = vol.as_3d()
    pad = ((0, bdz * 4 - nz), (0, bdy * 4 - ny), (0, bdx * 4 - nx))
    padded = np.pad(v3, pad, mode="edge")
    tiled = padded.reshape(bdz, 4, bdy, 4, bdx, 4).transpose(0, 2, 4, 1, 3, 5)
    blocks = np.ascontiguousarray(tiled.reshape(bdz * bdy * bdx, 64))

    nanpad = np.pad(v3.astype(np.float64), pad, mode="constant", constant_values=np.nan)
    ntiled = nanpad.reshape(bdz, 4, bdy, 4, bdx, 4)
    mins = np.nanmin(ntiled, axis=(1, 3, 5)).reshape(-1)
    maxs = np.nanmax(ntiled, axis=(1, 3, 5)).reshape(-1)
    ranges = np.stack([mins, maxs], axis=1).astype(np.float32)
    return blocks, ranges


def _block_exponents(blocks: np.ndarray) -> np.ndarray:
    """Smallest e with max|v| <= 2^e per block; sentinel for all-zero blocks."""
    m = np.abs(blocks).max(axis=1).astype(np.float64)
    mant, ex = np.frexp(m)
    e = ex - (mant == 0.5)
    return np.where(m == 0.0, np.int32(np.int16(-(2**15))), e.astype(np.int32))


def error_bound(e: int, qbits: int) -> float:
    """Worst-case reconstruction error 2^e / (2S) of a block with exponent e."""
    return math.ldexp(1.0, int(e)) / (2.0 * quant_scale(qbits))


def _bounds_from_exponents(exponents: np.ndarray, qbits: int) -> np.ndarray:
    s = float(quant_scale(qbits))
    zero = exponents == np.int16(-(2**15))
    safe_e = np.where(zero, 0, exponents).astype(np.float64)
    return np.where(zero, 0.0, 2.0**safe_e / (2.0 * s))


@njit(cache=True)
def _pack_blocks(quants, exponents, qbits, stride, out):
    n_blocks = quants.shape[0]
    mask = (np.int64(1) << qbits) - 1
    for b in range(n_blocks):
        base = b * stride
        e = exponents[b]
        eu = np.uint16(e)
        out[base] = np.uint8(eu & 0xFF)
        out[base + 1] = np.uint8((eu >> 8) & 0xFF)
        if e == np.int32(-(2**15)):
            continue
        for i in range(64):
            q = np.int64(quants[b, i]) & mask
            bitpos = 16 + i * qbits
            byte = base + (bitpos >> 3)
            shift = bitpos & 7
            acc = q << shift
            nbytes = (shift + qbits + 7) >> 3
            for k in range(nbytes):
                out[byte + k] |= np.uint8((acc >> (8 * k)) & 0xFF)


@njit(cache=True)
def _unpack_block(payload, block_id, qbits, stride, out):
    """Decode one block's 64 values into out (float32[64])."""
    base = block_id * stride
    eu = np.uint16(payload[base]) | (np.uint16(payload[base + 1]) << 8)
    if eu == 0x8000:
        for i in range(64):
            out[i] = np.float32(0.0)
        return
    e = np.int64(np.int16(eu))
    s = np.float64((np.int64(1) << (qbits - 1)) - 1)
    scale = np.float64(2.0) ** np.float64(e)
    mask = (np.int64(1) << qbits) - 1
    sign_bit = np.int64(1) << (qbits - 1)
    for i in range(64):
        bitpos = 16 + i * qbits
        byte = base + (bitpos >> 3)
        shift = bitpos & 7
        nbytes = (shift + qbits + 7) >> 3
        acc = np.int64(0)
        for k in range(nbytes):
            acc |= np.int64(payload[byte + k]) << (8 * k)
        q = (acc >> shift) & mask
        if q & sign_bit:
            q -= np.int64(1) << qbits
        out[i] = np.float32(np.float64(q) / s * scale)


@njit(cache=True)
def _unpack_many(payload, block_ids, qbits, stride, out):
    for j in range(block_ids.shape[0]):
        _unpack_block(payload, np.int64(block_ids[j]), qbits, stride, out[j])


def compress_volume(vol: Volume, qbits: int) -> CompressedVolume:
    """Compress a volume at the given quantization depth."""
    _check_qbits(qbits)
    blocks, ranges = _gather_blocks(vol)
    exponents = _block_exponents(blocks)
    s = float(quant_scale(qbits))
    zero = exponents == np.int16(-(2**15))
    scale = np.where(zero, 0.0, 2.0 ** -np.where(zero, 0, exponents).astype(np.float64))
    quants = np.rint(blocks.astype(np.float64) * scale[:, None] * s).astype(np.int32)
    stride = block_stride_bytes(qbits)
    payload = np.zeros(blocks.shape[0] * stride, dtype=np.uint8)
    _pack_blocks(quants, exponents, qbits, stride, payload)
    nx, ny, nz = vol.dims
    return CompressedVolume(
        dims=vol.dims,
        block_dims=(-(nx // -4), -(ny // -4), -(nz // -4)),
        qbits=qbits,
        block_stride_bytes=stride,
        payload=payload,
        raw_block_ranges=ranges,
        block_error_bounds=_bounds_from_exponents(exponents, qbits),
    )


def decompress_block(cv: CompressedVolume, block_id: int) -> np.ndarray:
    """Decode one block to its 64 float32 values (x-fastest within the block)."""
    assert 0 <= block_id < cv.block_count, f"block id {block_id} out of range"
    out = np.empty(64, dtype=np.float32)
    _unpack_block(cv.payload, np.int64(block_id), cv.qbits, cv.block_stride_bytes, out)
    return out


def decompress_blocks_into(cv: CompressedVolume, block_ids: np.ndarray, out: np.ndarray) -> None:
    """Decode many blocks at once; out has shape (len(block_ids), 64)."""
    _unpack_many(
        cv.payload,
        np.ascontiguousarray(block_ids, dtype=np.int64),
        cv.qbits,
        cv.block_stride_bytes,
        out,
    )


def _payload_exponents(payload: np.ndarray, block_count: int, stride: int) -> np.ndarray:
    per_block = payload.reshape(block_count, stride)
    eu = per_block[:, 0].astype(np.uint16) | (per_block[:, 1].astype(np.uint16) << 8)
    return eu.view(np.int16).astype(np.int32)


def write_wcz(cv: CompressedVolume, path) -> None:
    """Serialize to the .wcz container (all fields little-endian)."""
    header = _WCZ_MAGIC + struct.pack(
        "<IIIIII",
        _WCZ_VERSION,
        cv.dims[0],
        cv.dims[1],
        cv.dims[2],
        cv.qbits,
        cv.block_stride_bytes,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(cv.raw_block_ranges.astype("<f4").tobytes())
        f.write(cv.payload.tobytes())


def read_wcz(path) -> CompressedVolume:
    """Load a .wcz container written by write_wcz."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 28 or data[:4] != _WCZ_MAGIC:
        raise DataError(f"{path}: not a WCZ1 container")
    version, nx, ny, nz, qbits, stride = struct.unpack_from("<IIIIII", data, 4)
    if version != _WCZ_VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    _check_qbits(qbits)
    if stride != block_stride_bytes(qbits):
        raise DataError(f"{path}: stride {stride} inconsistent with qbits {qbits}")
    bdx, bdy, bdz = -(nx // -4), -(ny // -4), -(nz // -4)
    n_blocks = bdx * bdy * bdz
    ranges_bytes = 8 * n_blocks
    expected = 28 + ranges_bytes + n_blocks * stride
    if len(data) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(data)}")
    ranges = np.frombuffer(data, dtype="<f4", count=2 * n_blocks, offset=28)
    ranges = ranges.reshape(n_blocks, 2).copy()
    payload = np.frombuffer(data, dtype=np.uint8, offset=28 + ranges_bytes).copy()
    exponents = _payload_exponents(payload, n_blocks, stride)
    return CompressedVolume(
        dims=(nx, ny, nz),
        block_dims=(bdx, bdy, bdz),
        qbits=int(qbits),
        block_stride_bytes=int(stride),
        payload=payload,
        raw_block_ranges=ranges,
        block_error_bounds=_bounds_from_exponents(exponents, int(qbits)),
    )
