"""U-Net family builder, graph execution, and analytical cost model.

A "U{d}-{f}" network has d encoder blocks (two Conv-BN-ReLU sequences
followed by 2x2 max pooling, with the skip tap taken before pooling) and d
mirrored decoder blocks (2x2 transposed convolution up to the parallel
encoder block's filter count, concat with the skip, then two Conv-BN-ReLU
sequences), closed by a 1x1 linear convolution to the output channels.
Filter counts double per encoder block starting from f. There is no extra
bottleneck block: the pool/transpose pairing already restores spatial size.

The analytical cost model (parameter, FLOP, and memory counts) is written
as closed-form sums over that block structure, independently of the
builder, so the two can cross-check each other.
"""

import re
from dataclasses import dataclass

from .errors import ContractViolation, ModelNameError
from .layers import BatchNorm, Concat, Conv2D, ConvTranspose2D, MaxPool2, ReLU
from .tensor import Dtype

_NAME_RE = re.compile(r"^U([1-9][0-9]*)-([1-9][0-9]*)$")


@dataclass(frozen=True)
class UNetConfig:
    """Architecture hyperparameters; name round-trips as U{depth}-{filters}."""

    depth: int
    base_filters: int
    kernel: int = 3
    in_channels: int = 13
    out_channels: int = 12
    height: int = 384
    width: int = 384

    def __post_init__(self):
        if self.depth < 1 or self.base_filters < 1:
            raise ContractViolation("depth and base_filters must be >= 1")
        if self.kernel % 2 == 0:
            raise ContractViolation(f"kernel must be odd, got {self.kernel}")

    @property
    def name(self) -> str:
        return f"U{self.depth}-{self.base_filters}"

    @property
    def encoder_filters(self) -> list:
        return [self.base_filters * 2**i for i in range(self.depth)]


def parse_name(s: str, **overrides) -> UNetConfig:
    """Parse a U{depth}-{filters} model name into a config."""
    m = _NAME_RE.match(s.strip())
    if not m:
        raise ModelNameError(
            f"model name must look like U4-32, got {s!r}"
        )
    return UNetConfig(depth=int(m.group(1)), base_filters=int(m.group(2)), **overrides)


class _EncoderBlock:
    def __init__(self, c_in, f, k, dtype):
        self.conv1 = Conv2D(c_in, f, k, dtype=dtype)
        self.bn1 = BatchNorm(f, dtype=dtype)
        self.relu1 = ReLU()
        self.conv2 = Conv2D(f, f, k, dtype=dtype)
        self.bn2 = BatchNorm(f, dtype=dtype)
        self.relu2 = ReLU()
        self.pool = MaxPool2()

    def layers(self):
        return [self.conv1, self.bn1, self.relu1, self.conv2, self.bn2, self.relu2, self.pool]


class _DecoderBlock:
    def __init__(self, c_prev, f, k, dtype):
        self.upconv = ConvTranspose2D(c_prev, f, dtype=dtype)
        self.concat = Concat()
        self.conv1 = Conv2D(2 * f, f, k, dtype=dtype)
        self.bn1 = BatchNorm(f, dtype=dtype)
        self.relu1 = ReLU()
        self.conv2 = Conv2D(f, f, k, dtype=dtype)
        self.bn2 = BatchNorm(f, dtype=dtype)
        self.relu2 = ReLU()

    def layers(self):
        return [
            self.upconv, self.concat, self.conv1, self.bn1, self.relu1,
            self.conv2, self.bn2, self.relu2,
        ]


class UNetGraph:
    """Instantiated layer DAG for one UNetConfig.

    One graph instance is not safe to mutate from two threads; data-parallel
    training gives each worker its own replica.
    """

    def __init__(self, config: UNetConfig, master_dtype: Dtype = Dtype.F32):
        _check_divisible(config)
        self.config = config
        self.master_dtype = master_dtype
        k = config.kernel
        filters = config.encoder_filters

        self.encoders = []
        c_prev = config.in_channels
        for f in filters:
            self.encoders.append(_EncoderBlock(c_prev, f, k, master_dtype))
            c_prev = f

        self.decoders = []
        up_in = filters[-1]
        for f in reversed(filters):
            self.decoders.append(_DecoderBlock(up_in, f, k, master_dtype))
            up_in = f

        self.final = Conv2D(filters[0], config.out_channels, 1,
                            dtype=master_dtype, kind="final_conv")

    # -- structure ---------------------------------------------------------

    def layers(self):
        out = []
        for blk in self.encoders:
            out.extend(blk.layers())
        for blk in self.decoders:
            out.extend(blk.layers())
        out.append(self.final)
        return out

    def named_layers(self):
        for i, blk in enumerate(self.encoders, start=1):
            for attr in ("conv1", "bn1", "conv2", "bn2"):
                yield f"enc{i}.{attr}", getattr(blk, attr)
        for j, blk in enumerate(self.decoders, start=1):
            for attr in ("upconv", "conv1", "bn1", "conv2", "bn2"):
                yield f"dec{j}.{attr}", getattr(blk, attr)
        yield "final", self.final

    def named_params(self) -> dict:
        out = {}
        for lname, layer in self.named_layers():
            for pname, arr in layer.params.items():
                out[f"{lname}.{pname}"] = arr
        return out

    def named_buffers(self) -> dict:
        out = {}
        for lname, layer in self.named_layers():
            for bname, arr in layer.buffers.items():
                out[f"{lname}.{bname}"] = arr
        return out

    def param_count(self):
        """(trainable, total) enumerated from the instantiated tensors."""
        trainable = sum(p.size for p in self.named_params().values())
        buffers = sum(b.size for b in self.named_buffers().values())
        return trainable, trainable + buffers

    # -- execution ---------------------------------------------------------

    def forward(self, x, mode, policy):
        enc_caches, skips = [], []
        for blk in self.encoders:
            c = {}
            x, c["conv1"] = blk.conv1.forward(x, mode, policy)
            x, c["bn1"] = blk.bn1.forward(x, mode, policy)
            x, c["relu1"] = blk.relu1.forward(x, mode, policy)
            x, c["conv2"] = blk.conv2.forward(x, mode, policy)
            x, c["bn2"] = blk.bn2.forward(x, mode, policy)
            x, c["relu2"] = blk.relu2.forward(x, mode, policy)
            skips.append(x)
            x, c["pool"] = blk.pool.forward(x, mode, policy)
            enc_caches.append(c)

        dec_caches = []
        for blk, skip in zip(self.decoders, reversed(skips)):
            c = {}
            up, c["upconv"] = blk.upconv.forward(x, mode, policy)
            x, c["concat"] = blk.concat.forward(skip, up, policy)
            x, c["conv1"] = blk.conv1.forward(x, mode, policy)
            x, c["bn1"] = blk.bn1.forward(x, mode, policy)
            x, c["relu1"] = blk.relu1.forward(x, mode, policy)
            x, c["conv2"] = blk.conv2.forward(x, mode, policy)
            x, c["bn2"] = blk.bn2.forward(x, mode, policy)
            x, c["relu2"] = blk.relu2.forward(x, mode, policy)
            dec_caches.append(c)

        y, final_cache = self.final.forward(x, mode, policy)
        return y, {"enc": enc_caches, "dec": dec_caches, "final": final_cache}

    def backward(self, caches, dy, policy):
        if caches is None or "final" not in caches:
            raise ContractViolation("graph backward called without a forward cache")
        grads = {}

        def take(prefix, layer_grads):
            for pname, g in layer_grads.items():
                grads[f"{prefix}.{pname}"] = g

        dy, g = self.final.backward(caches["final"], dy, policy)
        take("final", g)

        d = len(self.decoders)
        dskips = [None] * d
        for j in reversed(range(d)):
            blk, c = self.decoders[j], caches["dec"][j]
            name = f"dec{j + 1}"
            dy, g = blk.relu2.backward(c["relu2"], dy, policy)
            dy, g = blk.bn2.backward(c["bn2"], dy, policy)
            take(f"{name}.bn2", g)
            dy, g = blk.conv2.backward(c["conv2"], dy, policy)
            take(f"{name}.conv2", g)
            dy, g = blk.relu1.backward(c["relu1"], dy, policy)
            dy, g = blk.bn1.backward(c["bn1"], dy, policy)
            take(f"{name}.bn1", g)
            dy, g = blk.conv1.backward(c["conv1"], dy, policy)
            take(f"{name}.conv1", g)
            dskip, dup = blk.concat.backward(c["concat"], dy, policy)
            dskips[d - 1 - j] = dskip  # routed to the parallel encoder block
            dy, g = blk.upconv.backward(c["upconv"], dup, policy)
            take(f"{name}.upconv", g)

        for i in reversed(range(d)):
            blk, c = self.encoders[i], caches["enc"][i]
            name = f"enc{i + 1}"
            dy, _ = blk.pool.backward(c["pool"], dy, policy)
            dy = dy + dskips[i]  # skip gradient rejoins at the pre-pool tap
            dy, g = blk.relu2.backward(c["relu2"], dy, policy)
            dy, g = blk.bn2.backward(c["bn2"], dy, policy)
            take(f"{name}.bn2", g)
            dy, g = blk.conv2.backward(c["conv2"], dy, policy)
            take(f"{name}.conv2", g)
            dy, g = blk.relu1.backward(c["relu1"], dy, policy)
            dy, g = blk.bn1.backward(c["bn1"], dy, policy)
            take(f"{name}.bn1", g)
            dy, g = blk.conv1.backward(c["conv1"], dy, policy)
            take(f"{name}.conv1", g)

        return dy, grads


def build(config: UNetConfig, master_dtype: Dtype = Dtype.F32) -> UNetGraph:
    """Instantiate the layer graph for a config (parameters zero-filled)."""
    return UNetGraph(config, master_dtype=master_dtype)


# -- analytical cost model (independent of the builder) ---------------------


def count_params(config: UNetConfig):
    """(trainable, total) parameter counts from the closed-form block sums.

    Per conv: k^2*c_in*c_out + c_out. Per 2x2 transposed conv:
    4*c_in*c_out + c_out. Per BatchNorm: 2c trainable plus 2c running
    statistics. Final 1x1 conv: c_in*out_channels + out_channels.
    """
    k2 = config.kernel**2
    filters = config.encoder_filters
    trainable = 0
    buffers = 0

    c_prev = config.in_channels
    for f in filters:
        trainable += k2 * c_prev * f + f
        trainable += k2 * f * f + f
        trainable += 4 * f  # two BatchNorms, gamma+beta each
        buffers += 4 * f
        c_prev = f

    up_in = filters[-1]
    for f in reversed(filters):
        trainable += 4 * up_in * f + f
        trainable += k2 * (2 * f) * f + f
        trainable += k2 * f * f + f
        trainable += 4 * f
        buffers += 4 * f
        up_in = f

    trainable += filters[0] * config.out_channels + config.out_channels
    return trainable, trainable + buffers


def _check_divisible(config: UNetConfig):
    div = 2**config.depth
    if config.height % div or config.width % div:
        raise ContractViolation(
            f"input {config.height}x{config.width} must be divisible by "
            f"{div} for depth {config.depth}"
        )


def count_flops(config: UNetConfig) -> int:
    """Forward FLOPs per sample: 2*k^2*c_in*c_out*H_out*W_out per convolution
    (the stride-2 transposed conv touches each output once, which equals the
    same product taken at its input resolution); pooling, BatchNorm, and ReLU
    count one op per output element; concat counts nothing.
    """
    _check_divisible(config)
    k2 = config.kernel**2
    filters = config.encoder_filters
    h, w = config.height, config.width
    flops = 0

    c_prev = config.in_channels
    for f in filters:
        flops += 2 * k2 * c_prev * f * h * w
        flops += 2 * f * h * w  # bn1 + relu1
        flops += 2 * k2 * f * f * h * w
        flops += 2 * f * h * w  # bn2 + relu2
        h //= 2
        w //= 2
        flops += f * h * w  # pool output
        c_prev = f

    up_in = filters[-1]
    for f in reversed(filters):
        flops += 2 * 4 * up_in * f * h * w  # transposed conv at input resolution
        h *= 2
        w *= 2
        flops += 2 * k2 * (2 * f) * f * h * w
        flops += 2 * f * h * w
        flops += 2 * k2 * f * f * h * w
        flops += 2 * f * h * w
        up_in = f

    flops += 2 * filters[0] * config.out_channels * h * w
    return flops


def _activation_elements_per_sample(config: UNetConfig) -> int:
    """Total elements across all layer outputs for one sample."""
    _check_divisible(config)
    filters = config.encoder_filters
    h, w = config.height, config.width
    els = 0
    for f in filters:
        els += 6 * f * h * w  # conv1, bn1, relu1, conv2, bn2, relu2
        h //= 2
        w //= 2
        els += f * h * w  # pool
    for f in reversed(filters):
        h *= 2
        w *= 2
        els += f * h * w  # upconv
        els += 2 * f * h * w  # concat
        els += 6 * f * h * w
    els += config.out_channels * h * w  # final conv
    return els


@dataclass(frozen=True)
class CostReport:
    """Analytical size/compute estimate for one (config, batch, precision)."""

    model: str
    batch: int
    precision: str
    trainable_param_count: int
    total_param_count: int
    forward_flops_per_sample: int
    weight_bytes: int
    activation_bytes: int
    gradient_bytes: int
    optimizer_state_bytes: int

    @property
    def total_bytes(self) -> int:
        return (
            self.weight_bytes
            + self.activation_bytes
            + self.gradient_bytes
            + self.optimizer_state_bytes
        )


def estimate_memory(config: UNetConfig, batch: int, precision: str) -> CostReport:
    """Memory model for accelerator training at the given precision.

    Activations are counted at the compute dtype (2 bytes under AMP, 4 under
    FP32) and doubled to cover buffers retained for the backward pass; this
    reflects accelerator AMP storage rather than the desk emulation, which
    keeps normalization outputs in binary32. Weights always include the
    binary32 master copy, plus a binary16 working shadow of the trainable
    set under AMP. Gradients are binary32; Adam keeps two binary32 moments.
    """
    if precision not in ("fp32", "amp"):
        raise ContractViolation(f"precision must be fp32 or amp, got {precision!r}")
    if batch < 1:
        raise ContractViolation(f"batch must be >= 1, got {batch}")
    trainable, total = count_params(config)
    act_el = _activation_elements_per_sample(config)
    act_size = 2 if precision == "amp" else 4
    return CostReport(
        model=config.name,
        batch=batch,
        precision=precision,
        trainable_param_count=trainable,
        total_param_count=total,
        forward_flops_per_sample=count_flops(config),
        weight_bytes=4 * total + (2 * trainable if precision == "amp" else 0),
        activation_bytes=2 * batch * act_el * act_size,
        gradient_bytes=4 * trainable,
        optimizer_state_bytes=2 * 4 * trainable,
    )


def fits(report: CostReport, budget_bytes: int) -> bool:
    """Whether the estimated footprint fits a device memory budget."""
    return report.total_bytes <= budget_bytes
