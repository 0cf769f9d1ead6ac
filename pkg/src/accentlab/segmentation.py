"""Silence-based splitting of long recordings and edge trimming.

A window is silent when its RMS falls below ``threshold_frac`` times the
loudest window of the clip being processed, so every rule here is
invariant to overall gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip


@dataclass(frozen=True, eq=False)
class EnergyTrack:
    window_ms: float
    window_samples: int
    rms: np.ndarray

    @property
    def max_rms(self) -> float:
        return float(self.rms.max()) if self.rms.size else 0.0

    def silent(self, threshold_frac: float) -> np.ndarray:
        ref = self.max_rms
        if ref == 0.0:
            return np.ones_like(self.rms, dtype=bool)
        return self.rms < threshold_frac * ref


def _window_samples(rate_hz: int, window_ms: float) -> int:
    return max(1, int(round(rate_hz * window_ms / 1000.0)))


def frame_energy(clip: AudioClip, window_ms: float = 10.0) -> EnergyTrack:
    """Per-window RMS over non-overlapping windows; the last partial window is kept."""
    if window_ms <= 0:
        raise ValueError("window_ms must be positive")
    if len(clip) == 0:
        raise ValueError("cannot compute energy of an empty clip")
    w = _window_samples(clip.sample_rate_hz, window_ms)
    x = clip.samples
    n_full = len(x) // w
    sq = x[: n_full * w].reshape(n_full, w) ** 2
    rms = list(np.sqrt(sq.mean(axis=1)))
    if len(x) > n_full * w:
        rms.append(np.sqrt(np.mean(x[n_full * w:] ** 2)))
    return EnergyTrack(window_ms, w, np.asarray(rms, dtype=np.float64))


def _runs(mask: np.ndarray):
    """(start, stop) index pairs of maximal True runs."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    d = np.diff(padded)
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def trim_silence(clip: AudioClip, threshold_frac: float = 0.01,
                 window_ms: float = 10.0) -> AudioClip:
    if not 0 < threshold_frac < 1:
        raise ValueError("threshold_frac must be in (0, 1)")
    if len(clip) == 0:
        return clip
    track = frame_energy(clip, window_ms)
    loud = np.flatnonzero(~track.silent(threshold_frac))
    if loud.size == 0:
        return AudioClip(np.zeros(0), clip.sample_rate_hz)
    w = track.window_samples
    start = loud[0] * w
    stop = min(len(clip), (loud[-1] + 1) * w)
    return AudioClip(clip.samples[start:stop], clip.sample_rate_hz)


def split_on_silence(clip: AudioClip, threshold_frac: float = 0.01,
                     min_silence_s: float = 2.0, window_ms: float = 10.0) -> list[AudioClip]:
    """Split wherever the signal stays silent for at least ``min_silence_s``.

    Cuts sit at the midpoint window of each long silent run; each piece is
    then passed through :func:`trim_silence`, which drops the silent halves.
    Pieces that are silent throughout are discarded.
    """
    if not 0 < threshold_frac < 1:
        raise ValueError("threshold_frac must be in (0, 1)")
    if min_silence_s <= 0:
        raise ValueError("min_silence_s must be positive")
    if len(clip) == 0:
        return []
    track = frame_energy(clip, window_ms)
    if track.max_rms == 0.0:
        return []
    w = track.window_samples
    n = len(clip)

    cuts = []
    for a, b in _runs(track.silent(threshold_frac)):
        duration = (min(n, b * w) - a * w) / clip.sample_rate_hz
        if duration >= min_silence_s:
            cuts.append(((a + b) // 2) * w)
    bounds = [0] + cuts + [n]

    pieces = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi <= lo:
            continue
        piece = trim_silence(AudioClip(clip.samples[lo:hi], clip.sample_rate_hz),
                             threshold_frac, window_ms)
        if len(piece):
            pieces.append(piece)
    return pieces
