import numpy as np
import pytest

from accentlab.audio_io import read_wav
from accentlab.features import extract_manifest, feature_path, read_feature_file
from accentlab.synth import (
    Voice,
    accent_formants,
    sentence_script,
    speaker_codes,
    speaker_voice,
    synth_utterance,
    write_corpus,
)


def test_script_is_shared_and_deterministic():
    assert sentence_script(3, 7) == sentence_script(3, 7)
    assert sentence_script(3, 7) != sentence_script(3, 8)


def test_accents_have_distinct_formants():
    a, b = accent_formants("American"), accent_formants("Bangla")
    assert a.shape == b.shape == (6, 3)
    assert np.max(np.abs(np.log(a / b))) > 0.05
    np.testing.assert_array_equal(a, accent_formants("American"))


def test_voice_validation():
    with pytest.raises(ValueError):
        Voice(f0_hz=10.0, tilt=0.5)
    with pytest.raises(ValueError):
        Voice(f0_hz=120.0, tilt=1.0)
    v = speaker_voice("Ame-1")
    assert 90 <= v.f0_hz <= 200 and 0.3 <= v.tilt <= 0.7


def test_utterance_is_bounded_and_reproducible():
    f = accent_formants("Welsh")
    script = sentence_script(1, 1)
    a = synth_utterance(f, script, speaker_voice("Wel-1"), np.random.default_rng(5))
    b = synth_utterance(f, script, speaker_voice("Wel-1"), np.random.default_rng(5))
    np.testing.assert_array_equal(a.samples, b.samples)
    assert np.abs(a.samples).max() <= 1.0
    assert a.sample_rate_hz == 16000
    nominal = sum(d for _, d in script)
    assert 0.8 * nominal < a.duration_s < 1.2 * nominal + 0.1


def test_corpus_layout_and_features(tmp_path):
    m = write_corpus(tmp_path / "wav", ["American", "Bangla"], n_speakers=2, sets=[1], sentences=[1, 2])
    assert len(m) == 8
    assert m.accents == ["American", "Bangla"]
    assert m.speakers() == {"American": speaker_codes("American", 2), "Bangla": speaker_codes("Bangla", 2)}
    clip = read_wav(m.entries[0].path)
    assert clip.sample_rate_hz == 16000
    out = extract_manifest(m, tmp_path / "feat")
    assert len(out) == 8
    mat = read_feature_file(feature_path(tmp_path / "feat", m.entries[0]))
    assert mat.shape == (499, 13) and 0 < mat.valid_frames <= 499
