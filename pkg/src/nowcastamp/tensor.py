"""Tensors and the mixed-precision multiply-accumulate primitive.

A Tensor is a thin validated wrapper over a C-contiguous numpy array with
one of three element types. Image batches are stored channels-second
(N, C, H, W) so per-channel convolution inner loops run over contiguous
memory; channels-last data is transposed at file-format boundaries only.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ContractViolation


class Dtype(Enum):
    """Supported element types with their storage width in bytes."""

    F16 = ("f16", 2, np.float16)
    F32 = ("f32", 4, np.float32)
    F64 = ("f64", 8, np.float64)

    def __init__(self, tag, size_bytes, np_dtype):
        self.tag = tag
        self.size_bytes = size_bytes
        self.np = np_dtype

    @classmethod
    def from_numpy(cls, dt) -> "Dtype":
        for member in cls:
            if np.dtype(member.np) == np.dtype(dt):
                return member
        raise ContractViolation(f"unsupported element type {dt!r}")


MAX_RANK = 5


@dataclass(frozen=True)
class Tensor:
    """Rank 1-5 row-major numeric array with an explicit Dtype tag."""

    data: np.ndarray
    dtype: Dtype

    def __post_init__(self):
        if not 1 <= self.data.ndim <= MAX_RANK:
            raise ContractViolation(
                f"tensor rank must be 1..{MAX_RANK}, got {self.data.ndim}"
            )
        if np.dtype(self.dtype.np) != self.data.dtype:
            raise ContractViolation(
                f"dtype tag {self.dtype.tag} does not match buffer {self.data.dtype}"
            )
        if not self.data.flags.c_contiguous:
            raise ContractViolation("tensor buffer must be C-contiguous (row-major)")

    @classmethod
    def from_numpy(cls, arr: np.ndarray) -> "Tensor":
        arr = np.ascontiguousarray(arr)
        return cls(arr, Dtype.from_numpy(arr.dtype))

    @classmethod
    def zeros(cls, shape, dtype: Dtype = Dtype.F32) -> "Tensor":
        return cls(np.zeros(shape, dtype=dtype.np), dtype)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def ravel(self) -> np.ndarray:
        """Flat view in linear-index order: ((n*C + c)*H + h)*W + w."""
        return self.data.reshape(-1)


def mixed_mac(a, b):
    """Dot product of two binary16 vectors with binary32 accumulation.

    Each product is exact in binary32 (binary16 operands carry at most 11
    significand bits), and partial sums are accumulated strictly left to
    right in binary32. The fixed order makes the result bit-identical
    across runs and thread counts; no pairwise or tree reduction is used.
    """
    a = np.asarray(a, dtype=np.float16)
    b = np.asarray(b, dtype=np.float16)
    if a.ndim != 1 or b.ndim != 1:
        raise ContractViolation("mixed_mac expects rank-1 inputs")
    if a.shape != b.shape:
        raise ContractViolation(
            f"mixed_mac length mismatch: {a.shape[0]} vs {b.shape[0]}"
        )
    products = a.astype(np.float32) * b.astype(np.float32)
    acc = np.float32(0.0)
    for p in products:
        acc = np.float32(acc + p)
    return acc
