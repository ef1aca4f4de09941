import numpy as np
import pytest

from nowcastamp.data import (
    AdvectionSpec,
    EventSequence,
    batch_iter,
    generate_events,
    load_events,
    save_events,
    synth_advect,
    window_event,
)
from nowcastamp.errors import ContractViolation
from nowcastamp.metrics import mse, persistence


def _event(t, h=8, w=8, fill=0.0):
    return EventSequence(np.full((t, h, w), fill, dtype=np.float32))


# -- windowing ----------------------------------------------------------------


def test_49_frames_give_three_windows():
    frames = np.arange(49, dtype=np.float32)[:, None, None] * np.ones((1, 4, 4), np.float32)
    windows = window_event(EventSequence(np.clip(frames, 0, 255)))
    assert len(windows) == 3
    starts = [int(w.input[0, 0, 0]) for w in windows]
    assert starts == [0, 12, 24]
    for w in windows:
        assert w.input.shape == (13, 4, 4)
        assert w.target.shape == (12, 4, 4)
        # target frames immediately follow the input frames
        assert w.target[0, 0, 0] == w.input[-1, 0, 0] + 1


def test_25_frames_give_one_window():
    assert len(window_event(_event(25))) == 1


def test_24_frames_error_names_minimum():
    with pytest.raises(ContractViolation, match="25"):
        window_event(_event(24))


def test_windows_overlap_by_13_frames_at_stride_12():
    frames = np.arange(49, dtype=np.float32)[:, None, None] * np.ones((1, 4, 4), np.float32)
    windows = window_event(EventSequence(np.clip(frames, 0, 255)))
    a = set(range(0, 25))
    b = set(range(12, 37))
    assert len(a & b) == 13


def test_window_frames_never_duplicated_or_dropped():
    frames = np.arange(49, dtype=np.float32)[:, None, None] * np.ones((1, 2, 2), np.float32)
    for w in window_event(EventSequence(np.clip(frames, 0, 255))):
        seq = np.concatenate([w.input[:, 0, 0], w.target[:, 0, 0]])
        assert np.array_equal(seq, np.arange(seq[0], seq[0] + 25))


# -- synthetic generator --------------------------------------------------------


def test_blob_argmax_tracks_velocity():
    spec = AdvectionSpec(height=64, width=64, frames=25, n_blobs=1,
                         velocity=(2.0, 0.0), sigma=3.0, decay=0.0)
    ev = synth_advect(spec, seed=5)
    y0, x0 = np.unravel_index(np.argmax(ev.frames[0]), ev.frames[0].shape)
    y5, x5 = np.unravel_index(np.argmax(ev.frames[5]), ev.frames[5].shape)
    assert x5 - x0 == 10  # +2 columns per frame
    assert y5 == y0


def test_static_scene_persistence_is_exact():
    spec = AdvectionSpec(height=16, width=16, frames=25, velocity=(0.0, 0.0), decay=0.0)
    ev = synth_advect(spec, seed=1)
    assert all(np.array_equal(ev.frames[0], f) for f in ev.frames)
    w = window_event(ev)[0]
    assert mse(persistence(w.input), w.target) == 0.0


def test_same_seed_bitwise_identical():
    spec = AdvectionSpec(height=32, width=32, frames=25)
    a = synth_advect(spec, seed=42)
    b = synth_advect(spec, seed=42)
    assert a.frames.tobytes() == b.frames.tobytes()
    c = synth_advect(spec, seed=43)
    assert a.frames.tobytes() != c.frames.tobytes()


def test_pixels_stay_in_range():
    spec = AdvectionSpec(height=16, width=16, frames=25, amplitude=500.0, n_blobs=6)
    ev = synth_advect(spec, seed=0)
    assert ev.frames.min() >= 0.0
    assert ev.frames.max() <= 255.0


def test_event_sequence_validation():
    with pytest.raises(ContractViolation):
        EventSequence(np.full((25, 4, 4), 300.0, np.float32))
    with pytest.raises(ContractViolation):
        EventSequence(np.full((25, 4, 4), np.nan, np.float32))
    with pytest.raises(ContractViolation):
        EventSequence(np.zeros((25, 4), np.float32))


# -- batching -----------------------------------------------------------------


def _windows(n):
    out = []
    for i in range(n):
        frames = np.full((25, 4, 4), float(i), np.float32)
        out.extend(window_event(EventSequence(frames)))
    return out


def test_batch_sizes_with_short_final_batch():
    batches = list(batch_iter(_windows(10), 4, shuffle_seed=0))
    assert [b[0].shape[0] for b in batches] == [4, 4, 2]
    assert batches[0][0].shape[1:] == (13, 4, 4)
    assert batches[0][1].shape[1:] == (12, 4, 4)


def test_batch_order_deterministic_in_seed():
    w = _windows(10)
    a = [x[0, 0, 0, 0] for x, _ in batch_iter(w, 3, shuffle_seed=7)]
    b = [x[0, 0, 0, 0] for x, _ in batch_iter(w, 3, shuffle_seed=7)]
    c = [x[0, 0, 0, 0] for x, _ in batch_iter(w, 3, shuffle_seed=8)]
    assert a == b
    assert a != c


def test_batches_form_exact_permutation():
    w = _windows(11)
    seen = []
    for x, _ in batch_iter(w, 4, shuffle_seed=3):
        seen.extend(float(v) for v in x[:, 0, 0, 0])
    assert sorted(seen) == sorted(float(win.input[0, 0, 0]) for win in w)


def test_batch_iter_rejects_empty_and_bad_size():
    with pytest.raises(ContractViolation):
        list(batch_iter([], 4, 0))
    with pytest.raises(ContractViolation):
        list(batch_iter(_windows(2), 0, 0))


# -- event files --------------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    spec = AdvectionSpec(height=16, width=16, frames=25)
    events = generate_events(spec, 3, seed=9)
    save_events(tmp_path, events)
    back = load_events(tmp_path)
    assert len(back) == 3
    for a, b in zip(events, back):
        assert a.frames.tobytes() == b.frames.tobytes()


def test_load_empty_dir_errors(tmp_path):
    with pytest.raises(ContractViolation):
        load_events(tmp_path)
