"""Central finite-difference verification of analytic gradients.

Runs the whole network in binary64 so the comparison is limited by the
differencing step, not by storage precision. Works on anything exposing the
net protocol (named_params / forward / backward): SequentialNet chains and
full U-Net graphs alike.
"""

import numpy as np

from .amp import PrecisionPolicy
from .errors import ContractViolation
from .layers import mse_loss


def loss_and_grads(net, x, target, policy, mode="train", loss_scale=None):
    """Forward, MSE loss, and backward in one call.

    When loss_scale is given the loss gradient is multiplied by it before
    backpropagation and the returned gradients are the raw scaled values;
    the caller is expected to unscale them. Overflow to inf/NaN is a
    legitimate AMP outcome handled by the loss-scaler skip logic, so the
    numpy warnings for it are suppressed here.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        y, caches = net.forward(x, mode, policy)
        loss, dpred = mse_loss(y, target, policy)
        if loss_scale is not None:
            dpred = dpred * dpred.dtype.type(loss_scale)
        _, grads = net.backward(caches, dpred, policy)
    return loss, grads


def loss_only(net, x, target, policy, mode="train"):
    y, _ = net.forward(x, mode, policy)
    loss, _ = mse_loss(y, target, policy)
    return loss


def grad_check(net, x, target, step=1e-5, mode="train", zero_atol=1e-5):
    """Max relative error between analytic and central-difference gradients.

    The net's parameters must be binary64; every parameter element is
    perturbed by +-step. Relative error uses
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).

    Elements where both sides fall below zero_atol count as agreeing. The
    differenced value carries absolute noise around eps * loss / step
    (~5e-12 for these nets), so magnitudes below ~1e-5 cannot be resolved
    to 1e-6 relative no matter how exact the analytic side is; worse,
    convolution biases feeding a BatchNorm have structurally zero gradients
    (mean subtraction cancels any per-channel shift), making both sides
    pure cancellation noise there. The guard only fires when analytic and
    numeric agree that the element is negligible at scale zero_atol; a
    genuinely wrong gradient on one side still fails.
    """
    policy = PrecisionPolicy.check64()
    params = net.named_params()
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ContractViolation(
                f"grad_check requires binary64 parameters; {name} is {p.dtype}"
            )
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)

    loss, grads = loss_and_grads(net, x, target, policy, mode=mode)
    if not np.isfinite(loss):
        raise ContractViolation(f"non-finite loss {loss} in grad_check")

    worst = 0.0
    for name, p in params.items():
        analytic = grads[name].reshape(-1)
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_only(net, x, target, policy, mode=mode)
            flat[i] = orig - step
            lm = loss_only(net, x, target, policy, mode=mode)
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * step)
            if abs(analytic[i]) < zero_atol and abs(numeric) < zero_atol:
                continue
            denom = max(abs(analytic[i]), abs(numeric), 1e-12)
            worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
