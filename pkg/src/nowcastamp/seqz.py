"""SEQZ: a tiny fixed-layout binary tensor container.

Layout (all little-endian): 4-byte magic "SEQZ", u16 format version, u8
dtype code (0 = binary32), u8 rank, rank u64 extents, then the row-major
payload. Round-trips are bit-exact and the bytes parse identically on any
platform. External tools can emit one file per event (T, H, W) to feed the
training pipeline without touching HDF5.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import (
    ContractViolation,
    SeqzBadDtype,
    SeqzBadMagic,
    SeqzBadVersion,
    SeqzFormatError,
    SeqzTruncated,
)

MAGIC = b"SEQZ"
VERSION = 1
DTYPE_F32 = 0
MAX_RANK = 5


def write_seqz(path, arr: np.ndarray) -> None:
    """Write a binary32 tensor of rank 1..5."""
    arr = np.asarray(arr)
    if arr.dtype != np.float32:
        raise ContractViolation(f"seqz stores binary32 tensors, got {arr.dtype}")
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ContractViolation(f"seqz rank must be 1..{MAX_RANK}, got {arr.ndim}")
    header = MAGIC + struct.pack("<HBB", VERSION, DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = np.ascontiguousarray(arr).astype("<f4", copy=False).tobytes()
    Path(path).write_bytes(header + payload)


def read_seqz(path) -> np.ndarray:
    """Read a SEQZ file back into a binary32 array, validating the header."""
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise SeqzTruncated(f"{path}: file shorter than the 8-byte fixed header")
    if blob[:4] != MAGIC:
        raise SeqzBadMagic(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, dtype_code, rank = struct.unpack("<HBB", blob[4:8])
    if version != VERSION:
        raise SeqzBadVersion(f"{path}: unsupported version {version}, expected {VERSION}")
    if dtype_code != DTYPE_F32:
        raise SeqzBadDtype(f"{path}: unsupported dtype code {dtype_code}")
    if not 1 <= rank <= MAX_RANK:
        raise SeqzFormatError(f"{path}: rank {rank} outside 1..{MAX_RANK}")
    ext_end = 8 + 8 * rank
    if len(blob) < ext_end:
        raise SeqzTruncated(f"{path}: header cut off inside the extents block")
    shape = struct.unpack(f"<{rank}Q", blob[8:ext_end])
    expected = 4 * int(np.prod(shape, dtype=np.int64))
    actual = len(blob) - ext_end
    if actual != expected:
        raise SeqzTruncated(
            f"{path}: payload is {actual} bytes, expected {expected} for shape {shape}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=ext_end).astype(np.float32, copy=True)
    return data.reshape(shape)
