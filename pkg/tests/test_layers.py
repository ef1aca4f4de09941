import numpy as np
import pytest

from nowcastamp.amp import PrecisionPolicy
from nowcastamp.errors import ContractViolation
from nowcastamp.gradcheck import grad_check
from nowcastamp.layers import (
    BatchNorm,
    Concat,
    Conv2D,
    ConvTranspose2D,
    MaxPool2,
    ReLU,
    SequentialNet,
    mse_loss,
)
from nowcastamp.tensor import Dtype, mixed_mac

FP32 = PrecisionPolicy.fp32()
AMP = PrecisionPolicy.amp()

rng = np.random.default_rng(2024)


def _rand_layer(layer):
    for arr in layer.params.values():
        arr[...] = rng.standard_normal(arr.shape)
    return layer


# -- forward behavior --------------------------------------------------------


def test_conv_identity_kernel():
    conv = Conv2D(1, 1, 1)
    conv.params["weight"][...] = 1.0
    x = rng.random((2, 1, 5, 5)).astype(np.float32)
    y, _ = conv.forward(x, "train", FP32)
    np.testing.assert_array_equal(y, x)


def test_conv_same_padding_preserves_shape():
    conv = _rand_layer(Conv2D(3, 7, 5))
    x = rng.random((2, 3, 8, 8)).astype(np.float32)
    y, _ = conv.forward(x, "train", FP32)
    assert y.shape == (2, 7, 8, 8)


def test_conv_rejects_even_kernel():
    with pytest.raises(ContractViolation):
        Conv2D(1, 1, 2)


def test_conv_rejects_wrong_channels():
    conv = Conv2D(3, 4, 3)
    with pytest.raises(ContractViolation):
        conv.forward(np.zeros((1, 2, 4, 4), np.float32), "train", FP32)


def test_conv_forward_is_mixed_mac_per_pixel_under_amp():
    # Each AMP output pixel must equal a left-to-right binary32 MAC over
    # the row-major (ci, kh, kw) patch, cast back down to binary16.
    conv = Conv2D(3, 2, 3)
    conv.params["weight"][...] = rng.standard_normal((2, 3, 3, 3))
    x = rng.standard_normal((1, 3, 4, 4)).astype(np.float32)
    y, _ = conv.forward(x, "train", AMP)
    assert y.dtype == np.float16

    x16 = x.astype(np.float16)
    w16 = conv.params["weight"].astype(np.float16)
    xp = np.zeros((1, 3, 6, 6), np.float16)
    xp[:, :, 1:5, 1:5] = x16
    for co in range(2):
        for h in range(4):
            for w in range(4):
                patch = xp[0, :, h : h + 3, w : w + 3].reshape(-1)
                acc = mixed_mac(patch, w16[co].reshape(-1))
                want = np.float16(np.float32(acc) + np.float32(0.0))
                assert y[0, co, h, w] == want


def test_maxpool_basic():
    pool = MaxPool2()
    x = np.array([[[[1, 2], [3, 4]]]], dtype=np.float32)
    y, _ = pool.forward(x, "train", FP32)
    np.testing.assert_array_equal(y, [[[[4.0]]]])


def test_maxpool_rejects_odd_dims():
    pool = MaxPool2()
    with pytest.raises(ContractViolation):
        pool.forward(np.zeros((1, 1, 3, 4), np.float32), "train", FP32)


def test_maxpool_backward_routing_and_conservation():
    pool = MaxPool2()
    x = rng.random((3, 4, 8, 8)).astype(np.float32)
    y, cache = pool.forward(x, "train", FP32)
    dy = rng.random(y.shape).astype(np.float32)
    dx, _ = pool.backward(cache, dy, FP32)
    # each upstream element lands on exactly one input position
    assert np.count_nonzero(dx) <= dy.size
    np.testing.assert_allclose(dx.sum(), dy.sum(), rtol=1e-6)


def test_maxpool_tie_breaks_to_first_in_scan_order():
    pool = MaxPool2()
    x = np.full((1, 1, 2, 2), 7.0, dtype=np.float32)
    _, cache = pool.forward(x, "train", FP32)
    dy = np.ones((1, 1, 1, 1), np.float32)
    dx, _ = pool.backward(cache, dy, FP32)
    np.testing.assert_array_equal(dx, [[[[1, 0], [0, 0]]]])


def test_batchnorm_constant_batch_outputs_beta():
    bn = BatchNorm(3)
    bn.params["beta"][...] = [1.5, -2.0, 0.25]
    x = np.full((4, 3, 5, 5), 9.0, dtype=np.float32)
    y, _ = bn.forward(x, "train", FP32)
    for c, beta in enumerate([1.5, -2.0, 0.25]):
        np.testing.assert_allclose(y[:, c], beta, atol=1e-5)


def test_batchnorm_eval_uses_running_stats():
    bn = BatchNorm(2)
    bn.buffers["running_mean"][...] = [1.0, -1.0]
    bn.buffers["running_var"][...] = [4.0, 0.25]
    x = np.zeros((1, 2, 2, 2), np.float32)
    y, _ = bn.forward(x, "eval", FP32)
    np.testing.assert_allclose(y[0, 0], (0 - 1.0) / np.sqrt(4.0 + 1e-5), rtol=1e-5)
    np.testing.assert_allclose(y[0, 1], (0 + 1.0) / np.sqrt(0.25 + 1e-5), rtol=1e-5)


def test_relu_and_concat():
    relu = ReLU()
    x = np.array([[-1.0, 2.0]], np.float32).reshape(1, 1, 1, 2)
    y, cache = relu.forward(x, "train", FP32)
    np.testing.assert_array_equal(y.reshape(-1), [0.0, 2.0])
    dx, _ = relu.backward(cache, np.ones_like(y), FP32)
    np.testing.assert_array_equal(dx.reshape(-1), [0.0, 1.0])

    cat = Concat()
    a = np.ones((1, 2, 2, 2), np.float32)
    b = np.zeros((1, 3, 2, 2), np.float32)
    y, cache = cat.forward(a, b, FP32)
    assert y.shape == (1, 5, 2, 2)
    da, db = cat.backward(cache, y.copy(), FP32)
    np.testing.assert_array_equal(da, a)
    np.testing.assert_array_equal(db, b)


def test_backward_without_cache_is_contract_violation():
    conv = Conv2D(1, 1, 3)
    with pytest.raises(ContractViolation):
        conv.backward(None, np.zeros((1, 1, 2, 2), np.float32), FP32)


def test_eval_forward_batch_size_independent():
    net = SequentialNet([_rand_layer(Conv2D(2, 3, 3)), BatchNorm(3), ReLU()])
    x = rng.random((4, 2, 6, 6)).astype(np.float32)
    full, _ = net.forward(x, "eval", FP32)
    for i in range(4):
        single, _ = net.forward(x[i : i + 1], "eval", FP32)
        np.testing.assert_array_equal(full[i : i + 1], single)


# -- gradients ----------------------------------------------------------------


def _check(layers, in_shape, out_shape, n=1):
    net = SequentialNet(layers, master_dtype=Dtype.F64)
    x = rng.standard_normal((n, *in_shape))
    t = rng.standard_normal((n, *out_shape))
    return grad_check(net, x, t, step=1e-5)


def _rand64(layer):
    for arr in layer.params.values():
        arr[...] = rng.standard_normal(arr.shape)
    return layer


def test_grad_conv2d():
    err = _check([_rand64(Conv2D(2, 3, 3, dtype=Dtype.F64))], (2, 6, 6), (3, 6, 6))
    assert err <= 1e-6


def test_grad_conv_transpose():
    err = _check([_rand64(ConvTranspose2D(2, 3, dtype=Dtype.F64))], (2, 4, 4), (3, 8, 8))
    assert err <= 1e-6


def test_grad_batchnorm_train_mode():
    bn = BatchNorm(3, dtype=Dtype.F64)
    bn.params["gamma"][...] = rng.uniform(0.5, 1.5, 3)
    bn.params["beta"][...] = rng.standard_normal(3)
    err = _check([bn], (3, 4, 4), (3, 4, 4), n=3)
    assert err <= 1e-6


def test_grad_relu_maxpool_chain():
    layers = [_rand64(Conv2D(2, 4, 3, dtype=Dtype.F64)), ReLU(), MaxPool2()]
    err = _check(layers, (2, 6, 6), (4, 3, 3))
    assert err <= 1e-6


def test_grad_final_conv():
    err = _check(
        [_rand64(Conv2D(4, 12, 1, dtype=Dtype.F64, kind="final_conv"))],
        (4, 5, 5),
        (12, 5, 5),
    )
    assert err <= 1e-8  # single linear layer: essentially exact


class _ConcatChain:
    """conv -> channel split -> concat(swapped) net exercising Concat backward."""

    def __init__(self):
        self.conv = Conv2D(2, 4, 3, dtype=Dtype.F64)
        self.conv.params["weight"][...] = rng.standard_normal((4, 2, 3, 3))
        self.conv.params["bias"][...] = rng.standard_normal(4)
        self.concat = Concat()

    def named_params(self):
        return {f"conv.{k}": v for k, v in self.conv.params.items()}

    def forward(self, x, mode, policy):
        h, c1 = self.conv.forward(x, mode, policy)
        a, b = h[:, :1], h[:, 1:]
        y, c2 = self.concat.forward(b, a, policy)
        return y, (c1, c2)

    def backward(self, caches, dy, policy):
        c1, c2 = caches
        db, da = self.concat.backward(c2, dy, policy)
        dh = np.concatenate([da, db], axis=1)
        dx, grads = self.conv.backward(c1, dh, policy)
        return dx, {f"conv.{k}": v for k, v in grads.items()}


def test_grad_concat():
    net = _ConcatChain()
    x = rng.standard_normal((2, 2, 4, 4))
    t = rng.standard_normal((2, 4, 4, 4))
    assert grad_check(net, x, t, step=1e-5) <= 1e-6


def test_grad_zero_input_zero_target_bias_free():
    conv = Conv2D(2, 3, 3, dtype=Dtype.F64)
    conv.params["weight"][...] = rng.standard_normal((3, 2, 3, 3))
    net = SequentialNet([conv], master_dtype=Dtype.F64)
    x = np.zeros((1, 2, 4, 4))
    t = np.zeros((1, 3, 4, 4))
    assert grad_check(net, x, t) == 0.0


def test_mse_loss_shape_mismatch():
    with pytest.raises(ContractViolation):
        mse_loss(np.zeros((1, 2)), np.zeros((1, 3)), FP32)
