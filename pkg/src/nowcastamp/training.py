"""Training loop, synchronous data-parallel workers, and sweep orchestration.

Data parallelism is in-process: K worker threads own disjoint graph
replicas and batch shards, meet at a barrier to exchange gradients, and all
apply the identical averaged update, so replicas stay in bitwise lockstep.
Gradients are always exchanged in binary32 (binary64 in checking mode) and
reduced in worker-index order, making results independent of thread
scheduling. Epoch wall time is measured around the batch loop with a
monotonic clock and excludes dataset generation and file I/O.

Pixels are scaled from [0, 255] to [0, 1] before entering the network;
that keeps scaled binary16 gradients comfortably inside range so the
default 2^15 loss scale behaves as intended. Forecast helpers rescale
model output back to pixel units.
"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .amp import LossScaler, PrecisionPolicy, unscale_and_check, update_scale
from .data import batch_iter
from .errors import ContractViolation
from .gradcheck import loss_and_grads
from .layers import BatchNorm, Conv2D, ConvTranspose2D
from .optim import AdamState, adam_step
from .report import RunRecord
from .seqz import read_seqz, write_seqz
from .tensor import Dtype
from .unet import UNetGraph, build, estimate_memory, fits, parse_name

PIXEL_SCALE = 255.0


@dataclass
class TrainConfig:
    model: str
    epochs: int = 5
    batch_size: int = 8
    lr: float = 1e-3
    precision: str = "fp32"
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.workers < 1:
            raise ContractViolation("workers must be >= 1")
        if self.batch_size % self.workers:
            raise ContractViolation(
                f"batch size {self.batch_size} must be divisible by "
                f"{self.workers} workers"
            )
        if self.epochs < 1:
            raise ContractViolation("epochs must be >= 1")


@dataclass
class EpochStats:
    mean_loss: float
    seconds: float
    skipped_steps: int
    loss_scale: float | None = None


@dataclass
class TrainResult:
    graph: UNetGraph
    history: list
    scaler: LossScaler | None
    config: TrainConfig

    @property
    def total_skipped(self) -> int:
        return sum(e.skipped_steps for e in self.history)

    @property
    def mean_epoch_seconds(self) -> float:
        return sum(e.seconds for e in self.history) / len(self.history)


def init_params(graph, seed) -> None:
    """Seed-deterministic initialization: Glorot-uniform convolution weights
    (bound sqrt(6/(fan_in+fan_out))), zero biases, identity BatchNorm."""
    rng = np.random.default_rng(seed)
    for _, layer in graph.named_layers():
        if isinstance(layer, (Conv2D, ConvTranspose2D)):
            w = layer.params["weight"]
            k2 = layer.k**2
            bound = np.sqrt(6.0 / (layer.c_in * k2 + layer.c_out * k2))
            w[...] = rng.uniform(-bound, bound, size=w.shape).astype(w.dtype)
            layer.params["bias"][...] = 0
        elif isinstance(layer, BatchNorm):
            layer.params["gamma"][...] = 1
            layer.params["beta"][...] = 0
            layer.buffers["running_mean"][...] = 0
            layer.buffers["running_var"][...] = 1


def copy_model_state(dst, src) -> None:
    """Copy parameters and buffers between replicas of the same config."""
    src_p, dst_p = src.named_params(), dst.named_params()
    for name, arr in src_p.items():
        dst_p[name][...] = arr
    src_b, dst_b = src.named_buffers(), dst.named_buffers()
    for name, arr in src_b.items():
        dst_b[name][...] = arr


def allreduce_mean(per_worker_grads) -> dict:
    """Element-wise mean across workers, summed in worker-index order."""
    if not per_worker_grads:
        raise ContractViolation("allreduce_mean needs at least one gradient set")
    first = per_worker_grads[0]
    keys = list(first)
    for g in per_worker_grads[1:]:
        if set(g) != set(keys):
            raise ContractViolation("gradient key sets differ across workers")
    out = {}
    k = len(per_worker_grads)
    for name in keys:
        acc = first[name].copy()
        for g in per_worker_grads[1:]:
            if g[name].shape != acc.shape:
                raise ContractViolation(f"gradient shape mismatch for {name}")
            acc += g[name]
        out[name] = acc / acc.dtype.type(k)
    return out


def _shard_slices(n, k):
    """Split n samples into at most k contiguous shards, as evenly as possible."""
    k_eff = min(k, n)
    base, extra = divmod(n, k_eff)
    slices, start = [], 0
    for i in range(k_eff):
        size = base + (1 if i < extra else 0)
        slices.append(slice(start, start + size))
        start += size
    return slices


class _WorkerPool:
    def __init__(self, k):
        self._pool = ThreadPoolExecutor(max_workers=k) if k > 1 else None

    def map_ordered(self, fn, jobs):
        if self._pool is None:
            return [fn(*job) for job in jobs]
        futures = [self._pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]  # barrier; results in worker order

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


def train_step(replicas, states, xb, yb, policy, scaler, lr, pool, mode="train"):
    """One synchronous data-parallel optimizer step over a batch.

    Returns (batch mean loss, skipped flag). Short batches are sharded as
    evenly as possible; shard gradients are pre-scaled by n_i*K/n so the
    fixed unweighted mean still equals the full-batch gradient (the factor
    is exactly 1.0 for equal shards and leaves bits untouched).

    With mode="train", BatchNorm statistics are per-worker-shard, the
    standard data-parallel semantics; shard-mean gradients then equal the
    full-batch gradient only for models without cross-sample coupling.
    mode="eval" freezes normalization so the equality holds exactly (up to
    re-association), which is what the distributed-equivalence gate checks.
    """
    n = xb.shape[0]
    shards = _shard_slices(n, len(replicas))
    k_eff = len(shards)
    scale = scaler.scale if scaler is not None else None

    def job(i, sl):
        xs, ys = xb[sl], yb[sl]
        loss, grads = loss_and_grads(
            replicas[i], xs, ys, policy, mode=mode, loss_scale=scale
        )
        weight = (sl.stop - sl.start) * k_eff / n
        if weight != 1.0:
            grads = {k: g * g.dtype.type(weight) for k, g in grads.items()}
        return float(loss), sl.stop - sl.start, grads

    results = pool.map_ordered(job, list(enumerate(shards)))
    batch_loss = sum(loss * cnt for loss, cnt, _ in results) / n
    grads = allreduce_mean([g for _, _, g in results])

    if scaler is not None:
        grads, finite = unscale_and_check(grads, scaler)
        if update_scale(scaler, finite):
            return batch_loss, True
    for replica, state in zip(replicas, states):
        adam_step(replica.named_params(), grads, state, lr=lr)
    return batch_loss, False


def train_epoch(replicas, states, windows, cfg: TrainConfig, policy, scaler,
                pool) -> EpochStats:
    """One full pass over the batches: forward under the precision policy,
    scaled loss, backward, unscale/check, then skip or Adam step.

    Wall time is measured around the pass with a monotonic clock; the mean
    loss is sample-weighted over steps whose measured loss was finite
    (an overflowed forward reports inf, which is skip telemetry, not a
    loss measurement).
    """
    t0 = time.perf_counter()
    inv_px = np.float32(1.0 / PIXEL_SCALE)
    skipped = 0
    loss_sum, n_sum = 0.0, 0
    for xb, yb in batch_iter(windows, cfg.batch_size, shuffle_seed=cfg.seed):
        xb = xb * inv_px
        yb = yb * inv_px
        loss, skip = train_step(replicas, states, xb, yb, policy, scaler,
                                cfg.lr, pool)
        if skip:
            skipped += 1
        if np.isfinite(loss):
            loss_sum += loss * xb.shape[0]
            n_sum += xb.shape[0]
    return EpochStats(
        mean_loss=loss_sum / n_sum if n_sum else float("nan"),
        seconds=time.perf_counter() - t0,
        skipped_steps=skipped,
        loss_scale=scaler.scale if scaler else None,
    )


def train_model(cfg: TrainConfig, windows, policy=None) -> TrainResult:
    """Train a named model on pooled sample windows.

    The batch order is seeded once and replayed identically every epoch so
    per-epoch losses are directly comparable (with lr=0 they are bitwise
    constant). Replica 0 is the returned model; under K>1 the parameter
    sets of all replicas are bitwise identical, only BatchNorm running
    statistics differ per worker shard.
    """
    if not windows:
        raise ContractViolation("training needs a non-empty window list")
    policy = policy or PrecisionPolicy.from_mode(cfg.precision)
    h, w = windows[0].input.shape[1:]
    config = parse_name(cfg.model, height=h, width=w)

    replicas = [build(config, master_dtype=policy.master_dtype) for _ in range(cfg.workers)]
    init_params(replicas[0], cfg.seed)
    for rep in replicas[1:]:
        copy_model_state(rep, replicas[0])
    states = [AdamState.for_params(rep.named_params()) for rep in replicas]
    scaler = LossScaler() if policy.mode == "amp" else None

    pool = _WorkerPool(cfg.workers)
    history = []
    try:
        for _epoch in range(cfg.epochs):
            history.append(
                train_epoch(replicas, states, windows, cfg, policy, scaler, pool)
            )
    finally:
        pool.close()
    return TrainResult(graph=replicas[0], history=history, scaler=scaler, config=cfg)


def forecast(graph, input_frames, policy=None) -> np.ndarray:
    """12-frame forecast in pixel units from 13 input frames (eval mode)."""
    policy = policy or PrecisionPolicy.fp32()
    x = np.asarray(input_frames, dtype=np.float32)[None] * np.float32(1.0 / PIXEL_SCALE)
    y, _ = graph.forward(x, "eval", policy)
    y = y[0].astype(np.float32) * np.float32(PIXEL_SCALE)
    return np.clip(y, 0.0, PIXEL_SCALE)


def forecast_windows(graph, windows, policy=None, chunk=16):
    """Stacked (preds, truths) in pixel units over a window list."""
    policy = policy or PrecisionPolicy.fp32()
    preds, truths = [], []
    for start in range(0, len(windows), chunk):
        group = windows[start : start + chunk]
        x = np.stack([w.input for w in group]).astype(np.float32)
        y, _ = graph.forward(x * np.float32(1.0 / PIXEL_SCALE), "eval", policy)
        y = y.astype(np.float32) * np.float32(PIXEL_SCALE)
        preds.append(np.clip(y, 0.0, PIXEL_SCALE))
        truths.append(np.stack([w.target for w in group]).astype(np.float32))
    return np.concatenate(preds), np.concatenate(truths)


# -- weight persistence ------------------------------------------------------


def save_weights(graph, out_dir) -> Path:
    """Dump final weights as one binary32 SEQZ file per tensor."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"model": graph.config.name, "params": [], "buffers": []}
    for group, tensors in (("params", graph.named_params()),
                           ("buffers", graph.named_buffers())):
        for name, arr in tensors.items():
            write_seqz(out_dir / f"{name}.seqz", arr.astype(np.float32))
            manifest[group].append(name)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out_dir


def load_weights(graph, weights_dir) -> None:
    weights_dir = Path(weights_dir)
    manifest = json.loads((weights_dir / "manifest.json").read_text())
    if manifest["model"] != graph.config.name:
        raise ContractViolation(
            f"weights are for {manifest['model']}, graph is {graph.config.name}"
        )
    params = graph.named_params()
    buffers = graph.named_buffers()
    for name in manifest["params"]:
        params[name][...] = read_seqz(weights_dir / f"{name}.seqz").astype(params[name].dtype)
    for name in manifest["buffers"]:
        buffers[name][...] = read_seqz(weights_dir / f"{name}.seqz").astype(buffers[name].dtype)


# -- sweep -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    """The (model x precision x batch) grid to run, with shared settings."""

    cells: tuple  # of (model, precision, batch)
    epochs: int = 2
    seed: int = 0
    lr: float = 1e-3
    workers: int = 1
    skip_on_infeasible: bool = False
    budget_bytes: int | None = None

    def __post_init__(self):
        if len(set(self.cells)) != len(self.cells):
            raise ContractViolation("sweep cells must be unique")


@dataclass
class CellResult:
    model: str
    precision: str
    batch: int
    status: str  # completed | infeasible | error
    detail: str = ""
    record: RunRecord | None = None
    history: list = field(default_factory=list)


def run_sweep(spec: SweepSpec, windows) -> list:
    """Run every sweep cell; failures are captured per cell, never raised."""
    h, w = windows[0].input.shape[1:]
    results = []
    for model, precision, batch in spec.cells:
        try:
            config = parse_name(model, height=h, width=w)
            if spec.skip_on_infeasible and spec.budget_bytes is not None:
                cost = estimate_memory(config, batch, precision)
                if not fits(cost, spec.budget_bytes):
                    results.append(
                        CellResult(
                            model, precision, batch, "infeasible",
                            detail=f"needs {cost.total_bytes} bytes, "
                                   f"budget {spec.budget_bytes}",
                        )
                    )
                    continue
            cfg = TrainConfig(
                model=model, epochs=spec.epochs, batch_size=batch,
                lr=spec.lr, precision=precision, workers=spec.workers,
                seed=spec.seed,
            )
            out = train_model(cfg, windows)
            record = RunRecord(
                model=model, precision=precision, batch=batch,
                mean_epoch_s=out.mean_epoch_seconds,
            )
            results.append(
                CellResult(model, precision, batch, "completed",
                           record=record, history=out.history)
            )
        except Exception as exc:  # per-cell isolation is the contract
            results.append(
                CellResult(model, precision, batch, "error", detail=str(exc))
            )
    return results
