"""Forward and backward passes for every layer the nowcast U-Net uses.

Convolution-type layers honor the mixed-precision multiply-accumulate
contract: operands are quantized to the policy compute dtype, every product
is formed after exact widening to the accumulation dtype, and partial sums
are added in a fixed row-major term order. Per output element that is
exactly a left-to-right binary32 MAC over the receptive-field patch, so
forward results are bit-identical across runs and thread counts.

Parameter gradients of binary16 ops are quantized through binary16 (the
emulated kernel output) and stored widened, which is what lets dynamic loss
scaling observe overflow. Weight-gradient contractions use BLAS matmuls;
they carry no fixed-order guarantee, only per-process determinism.
"""

import numpy as np

from .amp import PrecisionPolicy
from .errors import ContractViolation
from .tensor import Dtype


def _check_image_batch(x, c_expected, what):
    if x.ndim != 4:
        raise ContractViolation(f"{what} expects an (N, C, H, W) batch, got rank {x.ndim}")
    if x.shape[1] != c_expected:
        raise ContractViolation(
            f"{what} expects {c_expected} input channels, got {x.shape[1]}"
        )


def _store_grad(policy: PrecisionPolicy, kind: str, g: np.ndarray) -> np.ndarray:
    """Quantize f16-op kernel outputs, then widen for binary32/64 storage."""
    g = policy.quantize(kind, g)
    return g.astype(policy.acc_np, copy=False)


def _pad_same(x, p, acc):
    if p == 0:
        return x
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=acc)
    xp[:, :, p : p + h, p : p + w] = x
    return xp


class Conv2D:
    """k x k convolution, stride 1, zero same-padding (odd k only)."""

    def __init__(self, c_in, c_out, k=3, dtype=Dtype.F32, kind="conv2d"):
        if k % 2 == 0 or k < 1:
            raise ContractViolation(f"same-padding convolution needs an odd kernel, got {k}")
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.kind = kind
        self.params = {
            "weight": np.zeros((c_out, c_in, k, k), dtype=dtype.np),
            "bias": np.zeros(c_out, dtype=dtype.np),
        }
        self.buffers = {}

    def forward(self, x, mode, policy):
        _check_image_batch(x, self.c_in, self.kind)
        qx = policy.quantize(self.kind, x)
        qw = policy.quantize(self.kind, self.params["weight"])
        qb = policy.quantize(self.kind, self.params["bias"])
        acc = policy.acc_np
        n, _, h, w = x.shape
        k, p = self.k, self.k // 2
        xp = _pad_same(qx.astype(acc, copy=False), p, acc)
        ww = qw.astype(acc, copy=False)
        y = np.zeros((n, self.c_out, h, w), dtype=acc)
        # Fixed (ci, kh, kw) term order == left-to-right MAC over the patch.
        for ci in range(self.c_in):
            for kh in range(k):
                for kw in range(k):
                    y += (
                        xp[:, ci, kh : kh + h, kw : kw + w][:, None]
                        * ww[:, ci, kh, kw][None, :, None, None]
                    )
        y += qb.astype(acc, copy=False)[None, :, None, None]
        return policy.cast_output(self.kind, y), (qx, qw)

    def backward(self, cache, dy, policy):
        if cache is None:
            raise ContractViolation(f"{self.kind} backward called without a forward cache")
        qx, qw = cache
        qdy = policy.quantize(self.kind, dy)
        acc = policy.acc_np
        dyw = qdy.astype(acc, copy=False)
        xw = qx.astype(acc, copy=False)
        ww = qw.astype(acc, copy=False)
        n, _, h, w = xw.shape
        k, p = self.k, self.k // 2
        xp = _pad_same(xw, p, acc)

        dxp = np.zeros_like(xp)
        for co in range(self.c_out):
            for kh in range(k):
                for kw in range(k):
                    dxp[:, :, kh : kh + h, kw : kw + w] += (
                        dyw[:, co][:, None] * ww[co, :, kh, kw][None, :, None, None]
                    )
        dx = np.ascontiguousarray(dxp[:, :, p : p + h, p : p + w]) if p else dxp

        dw = np.empty((self.c_out, self.c_in, k, k), dtype=acc)
        dyf = dyw.transpose(1, 0, 2, 3).reshape(self.c_out, -1)
        for kh in range(k):
            for kw in range(k):
                xs = xp[:, :, kh : kh + h, kw : kw + w]
                dw[:, :, kh, kw] = dyf @ xs.transpose(1, 0, 2, 3).reshape(self.c_in, -1).T
        db = dyw.sum(axis=(0, 2, 3))

        grads = {
            "weight": _store_grad(policy, self.kind, dw),
            "bias": _store_grad(policy, self.kind, db),
        }
        return policy.cast_output(self.kind, dx), grads


class ConvTranspose2D:
    """2 x 2 transposed convolution with stride 2: exact spatial doubling."""

    kind = "conv_transpose2d"
    k = 2

    def __init__(self, c_in, c_out, dtype=Dtype.F32):
        self.c_in, self.c_out = c_in, c_out
        self.params = {
            "weight": np.zeros((c_in, c_out, 2, 2), dtype=dtype.np),
            "bias": np.zeros(c_out, dtype=dtype.np),
        }
        self.buffers = {}

    def forward(self, x, mode, policy):
        _check_image_batch(x, self.c_in, self.kind)
        qx = policy.quantize(self.kind, x)
        qw = policy.quantize(self.kind, self.params["weight"])
        qb = policy.quantize(self.kind, self.params["bias"])
        acc = policy.acc_np
        n, _, h, w = x.shape
        xw = qx.astype(acc, copy=False)
        ww = qw.astype(acc, copy=False)
        y = np.zeros((n, self.c_out, 2 * h, 2 * w), dtype=acc)
        # Each output pixel owns exactly one (kh, kw) tap; accumulate over ci.
        for ci in range(self.c_in):
            for kh in range(2):
                for kw in range(2):
                    y[:, :, kh::2, kw::2] += (
                        xw[:, ci][:, None] * ww[ci, :, kh, kw][None, :, None, None]
                    )
        y += qb.astype(acc, copy=False)[None, :, None, None]
        return policy.cast_output(self.kind, y), (qx, qw)

    def backward(self, cache, dy, policy):
        if cache is None:
            raise ContractViolation("conv_transpose2d backward called without a forward cache")
        qx, qw = cache
        qdy = policy.quantize(self.kind, dy)
        acc = policy.acc_np
        dyw = qdy.astype(acc, copy=False)
        xw = qx.astype(acc, copy=False)
        ww = qw.astype(acc, copy=False)
        n, _, h, w = xw.shape

        dx = np.zeros((n, self.c_in, h, w), dtype=acc)
        for co in range(self.c_out):
            for kh in range(2):
                for kw in range(2):
                    dx += (
                        dyw[:, co, kh::2, kw::2][:, None]
                        * ww[:, co, kh, kw][None, :, None, None]
                    )

        dw = np.empty((self.c_in, self.c_out, 2, 2), dtype=acc)
        xf = xw.transpose(1, 0, 2, 3).reshape(self.c_in, -1)
        for kh in range(2):
            for kw in range(2):
                ds = dyw[:, :, kh::2, kw::2]
                dw[:, :, kh, kw] = xf @ ds.transpose(1, 0, 2, 3).reshape(self.c_out, -1).T
        db = dyw.sum(axis=(0, 2, 3))

        grads = {
            "weight": _store_grad(policy, self.kind, dw),
            "bias": _store_grad(policy, self.kind, db),
        }
        return policy.cast_output(self.kind, dx), grads


class BatchNorm:
    """Per-channel batch normalization over (N, H, W); always binary32+."""

    kind = "batch_norm"

    def __init__(self, channels, dtype=Dtype.F32, eps=1e-5, momentum=0.99):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum  # retention factor for running statistics
        self.params = {
            "gamma": np.ones(channels, dtype=dtype.np),
            "beta": np.zeros(channels, dtype=dtype.np),
        }
        self.buffers = {
            "running_mean": np.zeros(channels, dtype=dtype.np),
            "running_var": np.ones(channels, dtype=dtype.np),
        }

    def forward(self, x, mode, policy):
        _check_image_batch(x, self.channels, self.kind)
        acc = policy.acc_np
        xw = x.astype(acc, copy=False)
        if mode == "train":
            mu = xw.mean(axis=(0, 2, 3))
            var = xw.var(axis=(0, 2, 3))  # biased, same variance used to normalize
            m = self.momentum
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            rm[...] = (m * rm.astype(acc) + (1.0 - m) * mu).astype(rm.dtype)
            rv[...] = (m * rv.astype(acc) + (1.0 - m) * var).astype(rv.dtype)
        elif mode == "eval":
            mu = self.buffers["running_mean"].astype(acc)
            var = self.buffers["running_var"].astype(acc)
        else:
            raise ContractViolation(f"batch_norm mode must be train or eval, got {mode!r}")
        inv = 1.0 / np.sqrt(var + acc(self.eps))
        xhat = (xw - mu[None, :, None, None]) * inv[None, :, None, None]
        g = self.params["gamma"].astype(acc, copy=False)
        b = self.params["beta"].astype(acc, copy=False)
        y = g[None, :, None, None] * xhat + b[None, :, None, None]
        return y, (xhat, inv, mode)

    def backward(self, cache, dy, policy):
        if cache is None:
            raise ContractViolation("batch_norm backward called without a forward cache")
        xhat, inv, mode = cache
        acc = policy.acc_np
        dyw = dy.astype(acc, copy=False)
        g = self.params["gamma"].astype(acc, copy=False)
        dgamma = (dyw * xhat).sum(axis=(0, 2, 3))
        dbeta = dyw.sum(axis=(0, 2, 3))
        dxhat = dyw * g[None, :, None, None]
        if mode == "train":
            # Batch statistics couple every sample in the channel.
            n, _, h, w = dyw.shape
            m = n * h * w
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            dx = (inv[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)
        else:
            dx = dxhat * inv[None, :, None, None]
        grads = {
            "gamma": _store_grad(policy, self.kind, dgamma),
            "beta": _store_grad(policy, self.kind, dbeta),
        }
        return dx, grads


class ReLU:
    kind = "relu"

    def __init__(self):
        self.params = {}
        self.buffers = {}

    def forward(self, x, mode, policy):
        return np.maximum(x, x.dtype.type(0)), x > 0

    def backward(self, cache, dy, policy):
        if cache is None:
            raise ContractViolation("relu backward called without a forward cache")
        return dy * cache, {}


# Row-major scan order of the 2x2 pooling window; argmax ties resolve to the
# first position in this list.
_POOL_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))


class MaxPool2:
    """2 x 2 max pooling with stride 2; requires even spatial dims."""

    kind = "max_pool2"

    def __init__(self):
        self.params = {}
        self.buffers = {}

    def forward(self, x, mode, policy):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ContractViolation(f"max_pool2 needs even H and W, got {h}x{w}")
        windows = np.stack([x[:, :, oh::2, ow::2] for oh, ow in _POOL_OFFSETS])
        idx = np.argmax(windows, axis=0)  # first max wins on ties
        y = np.take_along_axis(windows, idx[None], axis=0)[0]
        return y, (idx, x.shape)

    def backward(self, cache, dy, policy):
        if cache is None:
            raise ContractViolation("max_pool2 backward called without a forward cache")
        idx, in_shape = cache
        dx = np.zeros(in_shape, dtype=dy.dtype)
        for j, (oh, ow) in enumerate(_POOL_OFFSETS):
            view = dx[:, :, oh::2, ow::2]
            sel = idx == j
            view[sel] = dy[sel]
        return dx, {}


class Concat:
    """Channel-axis concatenation of [skip, upsampled]; order is fixed."""

    kind = "concat"

    def __init__(self):
        self.params = {}
        self.buffers = {}

    def forward(self, skip, up, policy):
        if skip.shape[0] != up.shape[0] or skip.shape[2:] != up.shape[2:]:
            raise ContractViolation(
                f"concat shape mismatch: skip {skip.shape} vs upsampled {up.shape}"
            )
        acc = policy.acc_np
        y = np.concatenate(
            [skip.astype(acc, copy=False), up.astype(acc, copy=False)], axis=1
        )
        return y, skip.shape[1]

    def backward(self, cache, dy, policy):
        if cache is None:
            raise ContractViolation("concat backward called without a forward cache")
        c_skip = cache
        return dy[:, :c_skip], dy[:, c_skip:]


def mse_loss(pred, target, policy):
    """Mean squared error over all output pixels, plus d(loss)/d(pred).

    Runs in the accumulation dtype (binary32, or binary64 in checking mode)
    regardless of the prediction's storage dtype.
    """
    acc = policy.acc_np
    p = pred.astype(acc, copy=False)
    t = target.astype(acc, copy=False)
    if p.shape != t.shape:
        raise ContractViolation(f"loss shape mismatch: {p.shape} vs {t.shape}")
    d = p - t
    loss = (d * d).mean()
    dpred = (acc(2.0) / acc(d.size)) * d
    return loss, dpred


class SequentialNet:
    """Straight chain of single-input layers; used for per-layer testing."""

    def __init__(self, layers, master_dtype=Dtype.F32):
        self.layer_list = list(layers)
        self.master_dtype = master_dtype
        self._names = [f"l{i}" for i in range(len(self.layer_list))]

    def layers(self):
        return list(self.layer_list)

    def named_params(self):
        out = {}
        for name, layer in zip(self._names, self.layer_list):
            for pname, arr in layer.params.items():
                out[f"{name}.{pname}"] = arr
        return out

    def named_buffers(self):
        out = {}
        for name, layer in zip(self._names, self.layer_list):
            for bname, arr in layer.buffers.items():
                out[f"{name}.{bname}"] = arr
        return out

    def forward(self, x, mode, policy):
        caches = []
        for layer in self.layer_list:
            x, cache = layer.forward(x, mode, policy)
            caches.append(cache)
        return x, caches

    def backward(self, caches, dy, policy):
        if len(caches) != len(self.layer_list):
            raise ContractViolation("cache does not match this net's layer list")
        grads = {}
        for name, layer, cache in zip(
            reversed(self._names), reversed(self.layer_list), reversed(caches)
        ):
            dy, layer_grads = layer.backward(cache, dy, policy)
            for pname, g in layer_grads.items():
                grads[f"{name}.{pname}"] = g
        return dy, grads
