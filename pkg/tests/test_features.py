import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accentlab.audio_io import AudioClip
from accentlab.features import (
    MfccMatrix,
    apply_scaler,
    fit_scaler,
    flatten,
    frame_count,
    frame_signal,
    invert_scaler,
    mfcc_sequence,
    prefix_target_label,
    read_feature_file,
    write_feature_file,
)
from oracles import mfcc_reference

SR = 16000


def test_frame_count_for_full_length_clip():
    assert frame_signal(AudioClip(np.zeros(72000), SR)).shape == (499, 160)


def test_single_frame_and_too_short():
    assert frame_signal(AudioClip(np.zeros(160), SR)).shape[0] == 1
    with pytest.raises(ValueError):
        frame_signal(AudioClip(np.zeros(159), SR))


def test_pre_emphasis_applied_first():
    x = np.linspace(-0.5, 0.5, 400)
    frames = frame_signal(AudioClip(x, SR))
    np.testing.assert_allclose(frames[1, 0], x[144] - 0.97 * x[143])
    assert frames[0, 0] == x[0]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 5000))
def test_frame_count_formula(L, H, extra):
    n = L + extra
    count, start = 0, 0
    while start + L <= n:
        count += 1
        start += H
    assert frame_count(n, L, H) == count


def test_silence_has_only_c0():
    m = mfcc_sequence(AudioClip(np.zeros(SR), SR))
    body = m.values[: m.valid_frames]
    assert np.all(body[:, 1:] == pytest.approx(0.0, abs=1e-9))
    assert np.all(body[:, 0] == body[0, 0])
    np.testing.assert_allclose(body[0, 0], np.log(1e-10) * np.sqrt(26), rtol=1e-12)


def test_sine_matches_oracle():
    x = np.sin(2 * np.pi * 440 * np.arange(SR) / SR) * 0.999
    m = mfcc_sequence(AudioClip(x, SR))
    ref = mfcc_reference(x, SR)
    assert m.valid_frames == ref.shape[0] == 1 + (SR - 160) // 144
    assert np.max(np.abs(m.values[: m.valid_frames] - ref)) < 1e-6


def test_long_clip_truncated():
    rng = np.random.default_rng(0)
    m = mfcc_sequence(AudioClip(rng.uniform(-0.5, 0.5, 6 * SR), SR))
    assert m.valid_frames == 499 and m.values.shape == (499, 13)


def test_padding_rows_and_body_untouched():
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.5, 0.5, SR)
    m = mfcc_sequence(AudioClip(x, SR))
    assert np.all(m.values[m.valid_frames:] == 0.0)
    from accentlab.features import mfcc_frames
    raw = mfcc_frames(AudioClip(x, SR))
    np.testing.assert_array_equal(m.values[: m.valid_frames], raw)


def test_amplitude_scaling_shifts_only_c0():
    rng = np.random.default_rng(2)
    x = rng.uniform(-0.4, 0.4, SR // 2)
    a = mfcc_sequence(AudioClip(x, SR))
    b = mfcc_sequence(AudioClip(0.3 * x, SR))
    v = a.valid_frames
    np.testing.assert_allclose(b.values[:v, 1:], a.values[:v, 1:], atol=1e-6)
    shift = b.values[:v, 0] - a.values[:v, 0]
    np.testing.assert_allclose(shift, np.log(0.3) * np.sqrt(26), atol=1e-6)


def test_flatten_row_major():
    vals = np.zeros((499, 13))
    vals[0, 0] = 5
    vals[1, 0] = 7
    v = flatten(MfccMatrix(vals, 499))
    assert v.shape == (6487,) and v[0] == 5 and v[13] == 7


def test_prefix_label():
    vals = np.random.default_rng(3).normal(size=(499, 13))
    p = prefix_target_label(MfccMatrix(vals, 400), 2, 9)
    assert p.values.shape == (500, 13)
    np.testing.assert_array_equal(p.values[0], np.eye(13)[2])
    assert np.array_equal(p.values[1:], vals)
    np.testing.assert_array_equal(prefix_target_label(MfccMatrix(vals, 1), 0, 2).values[0], np.eye(13)[0])
    with pytest.raises(ValueError, match="label capacity"):
        prefix_target_label(MfccMatrix(vals, 1), 0, 14)


def test_scaler_endpoints_and_roundtrip():
    a = np.zeros((499, 13))
    a[:2, 0] = [-5, 5]
    a[:2, 1] = [3, 3]  # constant coefficient within the valid frames
    a[:2, 2:] = [[0], [1]]
    m = MfccMatrix(a, 2)
    s = fit_scaler([m])
    probe = np.zeros((3, 13))
    probe[:, 0] = [-5, 0, 5]
    probe[:, 1] = 3
    out = apply_scaler(s, probe)
    np.testing.assert_allclose(out[:, 0], [-1, 0, 1])
    np.testing.assert_array_equal(out[:, 1], 0)
    np.testing.assert_allclose(invert_scaler(s, out), probe, atol=1e-9)
    np.testing.assert_allclose(invert_scaler(s, apply_scaler(s, m), m.valid_frames), a, atol=1e-9)


def test_scaler_empty():
    with pytest.raises(ValueError):
        fit_scaler([])


def test_feature_file_roundtrip(tmp_path):
    vals = np.random.default_rng(4).normal(size=(499, 13)).astype(np.float32).astype(np.float64)
    write_feature_file(MfccMatrix(vals, 321), tmp_path / "f.mfc")
    raw = (tmp_path / "f.mfc").read_bytes()
    assert raw[:4] == b"ACMF" and len(raw) == 12 + 499 * 13 * 4
    back = read_feature_file(tmp_path / "f.mfc")
    assert back.valid_frames == 321 and np.array_equal(back.values, vals)
