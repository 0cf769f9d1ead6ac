"""Synthetic parallel accent corpora from a source-filter vowel model.

An utterance is a string of vowel segments whose identities and nominal
durations depend only on ``(set_id, sentence_id)``, so every accent and
speaker reads the same script. Accents differ in their formant tables,
speakers in pitch and spectral tilt, and every clip gets its own jitter.
Nothing here is tuned to a classifier; it only supplies controllable
structure for end-to-end checks.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio_io import ACCENTS, AudioClip, Manifest, scan_dataset, write_wav

RATE_HZ = 16000

# F1, F2, F3 (Hz) for a small vowel inventory
BASE_FORMANTS = np.array([
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [440.0, 1020.0, 2240.0],
])
BANDWIDTHS = np.array([80.0, 110.0, 160.0])


def _rng(*keys) -> np.random.Generator:
    words = [k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(words))


def accent_formants(accent: str, shift: float = 0.10, idiosyncrasy: float = 0.05) -> np.ndarray:
    """Per-vowel formant table of ``accent``.

    Every vowel's F1 and F2 move together by a shift whose direction is
    the accent's position on a circle, so any two accents of the inventory
    differ systematically; a fixed per-vowel factor in 1 ± idiosyncrasy
    is layered on top.
    """
    j = ACCENTS.index(accent)
    angle = 2 * np.pi * j / len(ACCENTS)
    glob = np.array([np.exp(shift * np.cos(angle)), np.exp(shift * np.sin(angle)), 1.0])
    r = _rng("accent", accent)
    local = r.uniform(1 - idiosyncrasy, 1 + idiosyncrasy, size=BASE_FORMANTS.shape)
    return BASE_FORMANTS * glob * local


@dataclass(frozen=True)
class Voice:
    f0_hz: float
    tilt: float  # one-pole low-pass coefficient in [0, 1)

    def __post_init__(self):
        if not 40 <= self.f0_hz <= 500:
            raise ValueError("f0 outside 40-500 Hz")
        if not 0 <= self.tilt < 1:
            raise ValueError("tilt must be in [0, 1)")


def speaker_voice(speaker_code: str) -> Voice:
    r = _rng("speaker", speaker_code)
    return Voice(f0_hz=float(r.uniform(90, 200)), tilt=float(r.uniform(0.3, 0.7)))


def sentence_script(set_id: int, sentence_id: int) -> list[tuple[int, float]]:
    """``(vowel index, nominal duration in s)`` segments shared by every reading."""
    r = _rng("script", set_id, sentence_id)
    n = int(r.integers(8, 15))
    vowels = r.integers(0, len(BASE_FORMANTS), size=n)
    durations = r.uniform(0.07, 0.16, size=n)
    return [(int(v), float(d)) for v, d in zip(vowels, durations)]


def _resonator(freq, bw, rate):
    r = np.exp(-np.pi * bw / rate)
    theta = 2 * np.pi * freq / rate
    a = np.array([1.0, -2 * r * np.cos(theta), r * r])
    return np.array([a.sum()]), a  # unit gain at DC


def synth_utterance(formants: np.ndarray, script, voice: Voice, rng: np.random.Generator,
                    rate_hz: int = RATE_HZ, jitter: float = 0.03, pad_s: float = 0.05) -> AudioClip:
    """Render ``script`` with a formant table, a voice, and per-clip jitter."""
    clip_formants = formants * (1 + rng.normal(0, jitter, size=formants.shape))
    f0 = voice.f0_hz * (1 + rng.normal(0, 0.05))
    seg_len = [max(1, int(round(d * (1 + rng.normal(0, jitter)) * rate_hz))) for _, d in script]
    n = sum(seg_len)

    # glottal source: impulse train with slow pitch drift, plus breath noise
    t = np.arange(n) / rate_hz
    inst_f0 = f0 * (1 + 0.04 * np.sin(2 * np.pi * rng.uniform(0.5, 1.5) * t + rng.uniform(0, 2 * np.pi)))
    phase = np.cumsum(inst_f0) / rate_hz
    source = np.diff(np.floor(phase), prepend=0.0) + 0.02 * rng.normal(size=n)

    out = np.empty(n)
    states = [np.zeros(2) for _ in range(formants.shape[1])]
    start = 0
    for (vowel, _), L in zip(script, seg_len):
        y = source[start:start + L]
        for k in range(formants.shape[1]):
            b, a = _resonator(clip_formants[vowel, k], BANDWIDTHS[k], rate_hz)
            y, states[k] = lfilter(b, a, y, zi=states[k])
        out[start:start + L] = y
        start += L
    out = lfilter([1 - voice.tilt], [1, -voice.tilt], out)

    ramp = min(n // 2, int(0.01 * rate_hz))
    env = np.ones(n)
    env[:ramp] = np.linspace(0, 1, ramp)
    env[n - ramp:] = np.linspace(1, 0, ramp)
    out *= env
    out *= rng.uniform(0.3, 0.8) / max(np.abs(out).max(), 1e-12)
    pad = np.zeros(int(pad_s * rate_hz))
    samples = np.concatenate([pad, out, pad]) + 1e-4 * rng.normal(size=n + 2 * len(pad))
    return AudioClip(np.clip(samples, -1, 1), rate_hz)


def speaker_codes(accent: str, n_speakers: int) -> list[str]:
    return [f"{accent[:3]}-{k}" for k in range(1, n_speakers + 1)]


def write_corpus(root, accents, n_speakers: int = 2, sets=range(1, 11), sentences=range(1, 11),
                 repetitions: int = 1, seed: int = 0, shift: float = 0.10,
                 jitter: float = 0.03) -> Manifest:
    """Write a parallel corpus as ``root/<Accent>/<Spk>_sSS_NN_rR.wav`` and index it."""
    root = Path(root)
    for accent in accents:
        formants = accent_formants(accent, shift)
        d = root / accent
        d.mkdir(parents=True, exist_ok=True)
        for spk in speaker_codes(accent, n_speakers):
            voice = speaker_voice(spk)
            for s in sets:
                for j in sentences:
                    script = sentence_script(s, j)
                    for rep in range(1, repetitions + 1):
                        r = _rng("clip", seed, accent, spk, s, j, rep)
                        clip = synth_utterance(formants, script, voice, r, jitter=jitter)
                        write_wav(clip, d / f"{spk}_s{s:02d}_{j:02d}_r{rep}.wav")
    return scan_dataset(root)
