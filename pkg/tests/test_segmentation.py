import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accentlab.audio_io import AudioClip
from accentlab.segmentation import frame_energy, split_on_silence, trim_silence

SR = 8000


def tone(seconds, amp=0.5, f=300.0):
    t = np.arange(int(seconds * SR)) / SR
    return amp * np.sin(2 * np.pi * f * t)


def silence(seconds):
    return np.zeros(int(seconds * SR))


def test_energy_of_silence():
    tr = frame_energy(AudioClip(silence(1.0), SR))
    assert np.all(tr.rms == 0) and tr.max_rms == 0


def test_energy_constant():
    tr = frame_energy(AudioClip(np.full(1005, 0.3), SR))
    assert len(tr.rms) == 13  # 12 full windows of 80 + a partial window
    np.testing.assert_allclose(tr.rms, 0.3, atol=1e-15)


def test_energy_of_sine_matches_closed_form():
    # 200 Hz at 8 kHz: 40 samples/period, 80-sample window holds two periods
    x = np.sin(2 * np.pi * 200 * np.arange(8000) / SR)
    tr = frame_energy(AudioClip(x, SR))
    brute = [np.sqrt(sum(v * v for v in x[i:i + 80]) / 80) for i in range(0, 8000, 80)]
    np.testing.assert_allclose(tr.rms, brute, atol=1e-12)
    np.testing.assert_allclose(tr.rms, 1 / np.sqrt(2), atol=1e-3)


def test_energy_rejects_empty():
    with pytest.raises(ValueError):
        frame_energy(AudioClip(np.zeros(0), SR))


def test_split_long_gap():
    x = np.concatenate([tone(2), silence(3), tone(2)])
    segs = split_on_silence(AudioClip(x, SR))
    assert len(segs) == 2
    # tone edges fall on window boundaries (80 samples) so the pieces are exact
    assert [len(s) for s in segs] == [2 * SR, 2 * SR]
    np.testing.assert_array_equal(segs[1].samples, x[5 * SR:])


def test_split_short_gap_kept():
    x = np.concatenate([tone(2), silence(1), tone(2)])
    segs = split_on_silence(AudioClip(x, SR))
    assert len(segs) == 1 and len(segs[0]) == len(x)


def test_split_all_silent():
    assert split_on_silence(AudioClip(silence(5), SR)) == []


def test_trim():
    x = np.concatenate([silence(0.5), tone(1.0), silence(0.5)])
    out = trim_silence(AudioClip(x, SR))
    assert abs(len(out) - SR) <= 80


def test_trim_no_silent_edges_is_identity():
    x = tone(1.0)
    np.testing.assert_array_equal(trim_silence(AudioClip(x, SR)).samples, x)


def test_trim_all_silent():
    assert len(trim_silence(AudioClip(silence(1), SR))) == 0


gap = st.one_of(st.floats(0.05, 1.8), st.floats(2.2, 3.5))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 1.5), gap), min_size=1, max_size=4))
def test_split_reconstructs_duration(parts):
    chunks, expected, n_segments = [], 0, 1
    for i, (speech, g) in enumerate(parts):
        chunks += [tone(speech), silence(g)]
        expected += len(chunks[-2])
        if i < len(parts) - 1:
            if g < 2.0:
                expected += len(chunks[-1])
            else:
                n_segments += 1
    x = np.concatenate(chunks)
    segs = split_on_silence(AudioClip(x, SR))
    assert len(segs) == n_segments
    assert abs(sum(len(s) for s in segs) - expected) <= 80 * 2 * n_segments


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1.9))
def test_split_gain_invariant(gain):
    x = np.concatenate([tone(0.7), silence(2.5), tone(0.4, f=510.0), silence(0.8), tone(0.3)])
    base = split_on_silence(AudioClip(x, SR))
    scaled = split_on_silence(AudioClip(x * gain, SR))
    assert [len(s) for s in base] == [len(s) for s in scaled]


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.1, 1.0), st.floats(0.0, 1.0))
def test_trim_idempotent(lead, body, tail):
    clip = AudioClip(np.concatenate([silence(lead), tone(body), silence(tail)]), SR)
    once = trim_silence(clip)
    np.testing.assert_array_equal(trim_silence(once).samples, once.samples)
