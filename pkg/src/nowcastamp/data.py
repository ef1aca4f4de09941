"""Event sequences, sliding-window sampling, and the synthetic generator.

An event is a T x H x W stack of VIL-scaled radar-style frames (pixels in
[0, 255], nominally 49 frames = four hours at five-minute steps). Each
event is cut into 13-frame-in / 12-frame-out samples at stride 12, which
yields three windows from a 49-frame event. The synthetic advection
generator stands in for real radar archives at desk scale: drifting,
decaying Gaussian blobs provide both motion and texture for the model to
learn. Train/test splits are by whole events, never by windows, to avoid
leakage across overlapping windows.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .seqz import read_seqz, write_seqz

IN_LEN = 13
OUT_LEN = 12
WINDOW_STRIDE = 12
PIXEL_MAX = 255.0


@dataclass(frozen=True)
class EventSequence:
    """One event's frame stack: (T, H, W) binary32, finite, in [0, 255]."""

    frames: np.ndarray

    def __post_init__(self):
        f = self.frames
        if f.ndim != 3:
            raise ContractViolation(f"event frames must be (T, H, W), got rank {f.ndim}")
        if f.dtype != np.float32:
            raise ContractViolation(f"event frames must be binary32, got {f.dtype}")
        if not np.isfinite(f).all():
            raise ContractViolation("event frames contain non-finite pixels")
        if f.min() < 0.0 or f.max() > PIXEL_MAX:
            raise ContractViolation("event pixels must lie in [0, 255]")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class SampleWindow:
    """13 input frames and the 12 target frames that follow them."""

    input: np.ndarray  # (13, H, W)
    target: np.ndarray  # (12, H, W)


def window_event(event, in_len=IN_LEN, out_len=OUT_LEN, stride=WINDOW_STRIDE):
    """Cut an event into input/target windows starting at 0, stride, 2*stride...

    A window starting at s consumes frames [s, s + in_len + out_len); the
    count is floor((T - in_len - out_len) / stride) + 1.
    """
    frames = event.frames if isinstance(event, EventSequence) else np.asarray(event)
    t = frames.shape[0]
    need = in_len + out_len
    if t < need:
        raise ContractViolation(
            f"event has {t} frames; at least {need} are needed for one window"
        )
    windows = []
    s = 0
    while s + need <= t:
        windows.append(
            SampleWindow(
                input=frames[s : s + in_len],
                target=frames[s + in_len : s + need],
            )
        )
        s += stride
    return windows


@dataclass(frozen=True)
class AdvectionSpec:
    """Knobs for the synthetic generator: blob count, drift, shape, fade."""

    height: int = 64
    width: int = 64
    frames: int = 49
    n_blobs: int = 3
    velocity: tuple = (2.0, 0.0)  # (vx, vy) pixels per frame; vx moves columns
    amplitude: float = 180.0
    sigma: float = 4.0
    decay: float = 0.02  # exponential amplitude decay rate per frame

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ContractViolation("synthetic field must be at least 8x8")
        if self.frames < IN_LEN + OUT_LEN:
            raise ContractViolation(
                f"synthetic events need >= {IN_LEN + OUT_LEN} frames, got {self.frames}"
            )


def synth_advect(spec: AdvectionSpec, seed) -> EventSequence:
    """Deterministic drifting-Gaussian event: same seed, same bits.

    Each blob starts at a seeded random position, translates by the shared
    velocity every frame, and fades as amplitude * exp(-decay * t); frames
    are clipped to [0, 255].
    """
    rng = np.random.default_rng(seed)
    h, w = spec.height, spec.width
    margin = 2.0 * spec.sigma
    cx0 = rng.uniform(margin, w - margin, size=spec.n_blobs)
    cy0 = rng.uniform(margin, h - margin, size=spec.n_blobs)
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    vx, vy = spec.velocity
    inv2s2 = 1.0 / (2.0 * spec.sigma**2)

    frames = np.zeros((spec.frames, h, w), dtype=np.float64)
    for t in range(spec.frames):
        amp = spec.amplitude * np.exp(-spec.decay * t)
        field = frames[t]
        for b in range(spec.n_blobs):
            cx = cx0[b] + vx * t
            cy = cy0[b] + vy * t
            field += amp * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) * inv2s2)
    np.clip(frames, 0.0, PIXEL_MAX, out=frames)
    return EventSequence(frames.astype(np.float32))


def generate_events(spec: AdvectionSpec, n_events: int, seed) -> list:
    """n_events independent synthetic events with per-event derived seeds."""
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_events)
    return [synth_advect(spec, child) for child in children]


def batch_iter(windows, batch_size, shuffle_seed):
    """Yield (input (N,13,H,W), target (N,12,H,W)) batches in a seeded order.

    The permutation is a pure function of shuffle_seed, the final short
    batch is emitted, and re-iterating with the same seed replays the same
    order exactly.
    """
    if batch_size < 1:
        raise ContractViolation(f"batch_size must be >= 1, got {batch_size}")
    if not windows:
        raise ContractViolation("batch_iter needs a non-empty window list")
    order = np.random.default_rng(shuffle_seed).permutation(len(windows))
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        x = np.stack([windows[i].input for i in chunk])
        y = np.stack([windows[i].target for i in chunk])
        yield x, y


def save_events(out_dir, events) -> list:
    """Write one SEQZ file per event; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, ev in enumerate(events):
        frames = ev.frames if isinstance(ev, EventSequence) else np.asarray(ev)
        path = out_dir / f"event_{i:05d}.seqz"
        write_seqz(path, frames)
        paths.append(path)
    return paths


def load_events(data_dir) -> list:
    """Read every *.seqz event in a directory, sorted by filename."""
    data_dir = Path(data_dir)
    paths = sorted(data_dir.glob("*.seqz"))
    if not paths:
        raise ContractViolation(f"no .seqz event files found in {data_dir}")
    return [EventSequence(read_seqz(p)) for p in paths]


def windows_from_events(events) -> list:
    """Pool the sample windows of a whole-event collection."""
    out = []
    for ev in events:
        out.extend(window_event(ev))
    return out
