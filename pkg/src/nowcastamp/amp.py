"""Automatic mixed precision policy and dynamic loss scaling.

Under AMP, convolution-type operations quantize their inputs and weights
to binary16 and accumulate in binary32, while normalization, pooling,
activations, and the loss stay in binary32; master weights are always kept
in binary32 and weight updates are applied to that copy. The loss is
multiplied by a power-of-two scale before backpropagation so small
gradients survive binary16; gradients are divided by the same scale
(exactly) before the optimizer sees them, and the scale adapts to overflow.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolation, LossScaleUnderflowError
from .tensor import Dtype

# Op-kind classification used by the layer implementations.
F16_OPS = frozenset({"conv2d", "conv_transpose2d", "final_conv"})
F32_OPS = frozenset({"batch_norm", "max_pool2", "relu", "concat", "loss"})


@dataclass(frozen=True)
class PrecisionPolicy:
    """Which ops quantize to binary16 and which dtype accumulations use."""

    mode: str  # "fp32" or "amp"
    compute_dtype: Dtype = Dtype.F32
    master_dtype: Dtype = Dtype.F32
    f16_ops: frozenset = F16_OPS
    f32_ops: frozenset = F32_OPS

    @classmethod
    def fp32(cls) -> "PrecisionPolicy":
        return cls(mode="fp32", compute_dtype=Dtype.F32)

    @classmethod
    def amp(cls) -> "PrecisionPolicy":
        return cls(mode="amp", compute_dtype=Dtype.F16)

    @classmethod
    def check64(cls) -> "PrecisionPolicy":
        """Full binary64 mode used by the finite-difference gradient checker."""
        return cls(mode="fp32", compute_dtype=Dtype.F64, master_dtype=Dtype.F64)

    @classmethod
    def from_mode(cls, mode: str) -> "PrecisionPolicy":
        if mode == "fp32":
            return cls.fp32()
        if mode == "amp":
            return cls.amp()
        raise ContractViolation(f"unknown precision mode {mode!r}")

    def without_f16_ops(self) -> "PrecisionPolicy":
        """Degenerate AMP policy: nothing quantizes; bit-identical to fp32."""
        return replace(self, f16_ops=frozenset())

    @property
    def acc_np(self):
        """Accumulation dtype: binary32, widened to binary64 in checking mode."""
        return np.float64 if self.master_dtype is Dtype.F64 else np.float32

    def runs_in_f16(self, op_kind: str) -> bool:
        return self.mode == "amp" and op_kind in self.f16_ops

    def quantize(self, op_kind: str, arr: np.ndarray) -> np.ndarray:
        """Round-trip an array through binary16 when the op runs in f16."""
        if self.runs_in_f16(op_kind):
            with np.errstate(over="ignore"):
                return arr.astype(np.float16)
        return arr

    def cast_output(self, op_kind: str, acc: np.ndarray) -> np.ndarray:
        """Binary16 ops emit binary16 activations; this is where overflow bites."""
        if self.runs_in_f16(op_kind):
            with np.errstate(over="ignore"):
                return acc.astype(np.float16)
        return acc


DEFAULT_INIT_SCALE = 2.0**15
GROWTH_FACTOR = 2.0
BACKOFF_FACTOR = 0.5
GROWTH_INTERVAL = 2000
MIN_SCALE = 2.0**-20


@dataclass
class LossScaler:
    """Dynamic power-of-two loss scale with overflow backoff and slow growth."""

    scale: float = DEFAULT_INIT_SCALE
    growth_factor: float = GROWTH_FACTOR
    backoff_factor: float = BACKOFF_FACTOR
    growth_interval: int = GROWTH_INTERVAL
    good_step_counter: int = 0
    skipped_steps: int = field(default=0)

    def __post_init__(self):
        if self.scale <= 0 or (np.log2(self.scale) % 1.0) != 0.0:
            raise ContractViolation(f"loss scale must be a power of two, got {self.scale}")


def scale_loss(loss, scaler: LossScaler):
    """Multiply the loss by the current scale (exact power-of-two product)."""
    return np.float32(loss) * np.float32(scaler.scale)


def unscale_and_check(grads: dict, scaler: LossScaler):
    """Divide every gradient by the scale; report whether all entries are finite.

    Division by a power of two is exact, so unscaling never perturbs bits.
    Non-finite values pass through unchanged; overflow is a reported state,
    not an error.
    """
    inv = 1.0 / scaler.scale
    finite = True
    out = {}
    for name, g in grads.items():
        g = g * g.dtype.type(inv)
        if not np.isfinite(g).all():
            finite = False
        out[name] = g
    return out, finite


def update_scale(scaler: LossScaler, finite: bool) -> bool:
    """Adapt the scale after one step; returns True when the step must be skipped.

    Overflow halves the scale and resets the growth counter; 2000 consecutive
    clean steps double it. A scale below 2^-20 means training diverged.
    """
    if not finite:
        scaler.scale *= scaler.backoff_factor
        scaler.good_step_counter = 0
        scaler.skipped_steps += 1
        if scaler.scale < MIN_SCALE:
            raise LossScaleUnderflowError(
                f"loss scale fell below {MIN_SCALE}; training diverged"
            )
        return True
    scaler.good_step_counter += 1
    if scaler.good_step_counter >= scaler.growth_interval:
        scaler.scale *= scaler.growth_factor
        scaler.good_step_counter = 0
    return False
