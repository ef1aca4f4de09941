"""IEEE 754 binary16 conversions.

All half-precision arithmetic in this package is emulated in software so
results are bit-identical on any CPU. numpy's float16 implements the IEEE
binary16 interchange format (1 sign, 5 exponent, 10 significand bits) with
round-to-nearest-ties-to-even conversions, subnormal support, and overflow
to infinity at magnitude 65520 and above, which is exactly the contract
cast_down promises. The test suite checks every conversion against an
independent bit-level reference converter.
"""

import numpy as np

# Largest finite binary16 value; magnitudes >= 65520 round to infinity.
F16_MAX = 65504.0
F16_OVERFLOW_THRESHOLD = 65520.0


def cast_down(x):
    """Convert binary32 value(s) to binary16 with round-to-nearest-even.

    Total function: +-inf and NaN pass through, magnitudes >= 65520 become
    +-inf. Accepts scalars or arrays; returns np.float16 of matching shape.
    """
    with np.errstate(over="ignore"):
        return np.asarray(x, dtype=np.float32).astype(np.float16)[()]


def cast_up(x):
    """Widen binary16 value(s) to binary32. Exact for every bit pattern."""
    return np.asarray(x, dtype=np.float16).astype(np.float32)[()]


def f16_bits(x) -> int:
    """Bit pattern of a binary16 scalar as an unsigned 16-bit int."""
    return int(np.float16(x).view(np.uint16))


def f16_from_bits(bits: int):
    """binary16 scalar from a 16-bit pattern."""
    return np.uint16(bits).view(np.float16)
