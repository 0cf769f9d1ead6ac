"""Fixed-size MFCC representation (499 frames x 13 coefficients) and helpers.

Frames are 10 ms long and advance by 9 ms (1 ms overlap). Clips are padded
with zeros, or truncated at the end, to exactly 499 frames.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .audio_io import AudioClip, Manifest, ManifestEntry, read_wav, resample

N_FRAMES = 499
N_MFCC = 13
LABEL_WIDTH = 13

FEATURE_MAGIC = b"ACMF"
FEATURE_VERSION = 1


@dataclass(frozen=True)
class FeatureConfig:
    frame_ms: float = 10.0
    overlap_ms: float = 1.0
    n_mfcc: int = N_MFCC
    n_frames: int = N_FRAMES
    pre_emphasis: float = 0.97
    n_mels: int = 26
    fft_size: int = 256
    mel_low_hz: float = 0.0
    mel_high_hz: float | None = None  # None means Nyquist
    log_floor: float = 1e-10

    def __post_init__(self):
        if not self.overlap_ms < self.frame_ms:
            raise ValueError("overlap_ms must be smaller than frame_ms")
        if self.n_mfcc > self.n_mels:
            raise ValueError("n_mfcc cannot exceed n_mels")

    @property
    def hop_ms(self) -> float:
        return self.frame_ms - self.overlap_ms

    def frame_length(self, rate_hz: int) -> int:
        return int(round(rate_hz * self.frame_ms / 1000.0))

    def hop_length(self, rate_hz: int) -> int:
        return int(round(rate_hz * self.hop_ms / 1000.0))


DEFAULT_CONFIG = FeatureConfig()


@dataclass(frozen=True, eq=False)
class MfccMatrix:
    values: np.ndarray
    valid_frames: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != N_MFCC:
            raise ValueError(f"MFCC matrix must be (*, {N_MFCC}), got {v.shape}")
        if not 0 <= self.valid_frames <= v.shape[0]:
            raise ValueError("valid_frames out of range")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid_frames", int(self.valid_frames))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class PrefixedMatrix:
    values: np.ndarray
    target_id: int

    @property
    def body(self) -> np.ndarray:
        return self.values[1:]


def pre_emphasize(x: np.ndarray, coeff: float = 0.97) -> np.ndarray:
    y = np.empty_like(x)
    if x.size:
        y[0] = x[0]
        y[1:] = x[1:] - coeff * x[:-1]
    return y


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    if n_samples < frame_len:
        raise ValueError(f"clip of {n_samples} samples is shorter than one frame ({frame_len})")
    return 1 + (n_samples - frame_len) // hop


def frame_signal(clip: AudioClip, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Pre-emphasize and cut into overlapping frames, shape (n_frames, frame_len)."""
    L = cfg.frame_length(clip.sample_rate_hz)
    H = cfg.hop_length(clip.sample_rate_hz)
    n = frame_count(len(clip), L, H)
    y = pre_emphasize(clip.samples, cfg.pre_emphasis)
    idx = np.arange(L)[None, :] + H * np.arange(n)[:, None]
    return y[idx]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(rate_hz: int, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Triangular filters on the HTK mel scale, evaluated at the DFT bin centres.

    Returns an (n_mels, fft_size // 2 + 1) weight matrix with unit peaks.
    """
    high = rate_hz / 2.0 if cfg.mel_high_hz is None else cfg.mel_high_hz
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.mel_low_hz), hz_to_mel(high), cfg.n_mels + 2))
    freqs = np.arange(cfg.fft_size // 2 + 1) * rate_hz / cfg.fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def pad_or_truncate(seq: np.ndarray, n_frames: int = N_FRAMES, pad_value: float = 0.0):
    valid = min(seq.shape[0], n_frames)
    out = np.full((n_frames, seq.shape[1]), pad_value, dtype=np.float64)
    out[:valid] = seq[:valid]
    return out, valid


def mfcc_frames(clip: AudioClip, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Unpadded MFCC sequence, shape (frames, n_mfcc)."""
    frames = frame_signal(clip, cfg)
    L = frames.shape[1]
    if cfg.fft_size < L:
        raise ValueError(f"fft_size {cfg.fft_size} shorter than frame length {L}")
    spec = np.abs(np.fft.rfft(frames * np.hamming(L), n=cfg.fft_size, axis=1))
    energies = spec @ mel_filterbank(clip.sample_rate_hz, cfg).T
    logmel = np.log(np.maximum(energies, cfg.log_floor))
    return dct(logmel, type=2, norm="ortho", axis=1)[:, : cfg.n_mfcc]


def mfcc_sequence(clip: AudioClip, cfg: FeatureConfig = DEFAULT_CONFIG) -> MfccMatrix:
    values, valid = pad_or_truncate(mfcc_frames(clip, cfg), cfg.n_frames)
    return MfccMatrix(values, valid)


def flatten(m: MfccMatrix) -> np.ndarray:
    return np.asarray(m.values if isinstance(m, MfccMatrix) else m).reshape(-1)


def prefix_target_label(m: MfccMatrix, target_id: int, n_accents: int) -> PrefixedMatrix:
    """Prepend a one-hot target-accent row, turning (499, 13) into (500, 13)."""
    if n_accents > LABEL_WIDTH:
        raise ValueError(
            f"label capacity exceeded: {n_accents} accents do not fit a {LABEL_WIDTH}-wide one-hot row"
        )
    if not 0 <= target_id < n_accents:
        raise ValueError(f"target_id {target_id} out of range for {n_accents} accents")
    body = m.values if isinstance(m, MfccMatrix) else np.asarray(m, dtype=np.float64)
    row = np.zeros((1, body.shape[1]))
    row[0, target_id] = 1.0
    return PrefixedMatrix(np.concatenate([row, body], axis=0), target_id)


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Per-coefficient min/max affine map into [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if np.any(self.lo > self.hi):
            raise ValueError("scaler min exceeds max")

    def to_json(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_json(cls, d) -> "FeatureScaler":
        return cls(np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64))


def fit_scaler(dataset) -> FeatureScaler:
    """Fit on the valid (unpadded) frames of every matrix in ``dataset``."""
    rows = [m.values[: m.valid_frames] for m in dataset]
    rows = [r for r in rows if r.size]
    if not rows:
        raise ValueError("cannot fit a scaler on an empty dataset")
    stacked = np.concatenate(rows, axis=0)
    return FeatureScaler(stacked.min(axis=0), stacked.max(axis=0))


def _span(s: FeatureScaler):
    span = s.hi - s.lo
    return span, span > 0


def apply_scaler(s: FeatureScaler, m, valid_frames: int | None = None) -> np.ndarray:
    """Map into [-1, 1]. Rows at or beyond ``valid_frames`` are set to 0."""
    x = m.values if isinstance(m, MfccMatrix) else np.asarray(m, dtype=np.float64)
    if valid_frames is None and isinstance(m, MfccMatrix):
        valid_frames = m.valid_frames
    span, ok = _span(s)
    out = np.zeros_like(x)
    out[..., ok] = 2.0 * (x[..., ok] - s.lo[ok]) / span[ok] - 1.0
    if valid_frames is not None:
        out[..., valid_frames:, :] = 0.0
    return out


def invert_scaler(s: FeatureScaler, m, valid_frames: int | None = None) -> np.ndarray:
    x = np.asarray(m.values if isinstance(m, MfccMatrix) else m, dtype=np.float64)
    span, _ = _span(s)
    out = (x + 1.0) / 2.0 * span + s.lo
    if valid_frames is not None:
        out[..., valid_frames:, :] = 0.0
    return out


def write_feature_file(m: MfccMatrix, path) -> None:
    """Header: magic, u32 version, u32 valid_frames; body: float32 LE, row-major."""
    if m.values.shape != (N_FRAMES, N_MFCC):
        raise ValueError(f"feature files hold ({N_FRAMES}, {N_MFCC}) matrices")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<II", FEATURE_VERSION, m.valid_frames))
        fh.write(m.values.astype("<f4").tobytes(order="C"))


def read_feature_file(path) -> MfccMatrix:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12 or head[:4] != FEATURE_MAGIC:
            raise ValueError(f"not a feature file: {path}")
        version, valid = struct.unpack("<II", head[4:])
        if version != FEATURE_VERSION:
            raise ValueError(f"unsupported feature file version {version}")
        body = np.frombuffer(fh.read(), dtype="<f4")
    if body.size != N_FRAMES * N_MFCC:
        raise ValueError(f"truncated feature file: {path}")
    return MfccMatrix(body.reshape(N_FRAMES, N_MFCC).astype(np.float64), valid)


def stack(matrices) -> np.ndarray:
    return np.stack([m.values for m in matrices], axis=0)


def feature_path(out_dir, entry: ManifestEntry) -> Path:
    stem = os.path.splitext(os.path.basename(entry.path))[0]
    return Path(out_dir) / entry.accent / f"{stem}.mfcc"


def extract_manifest(manifest: Manifest, out_dir, cfg: FeatureConfig = DEFAULT_CONFIG,
                     rate_hz: int = 16000, trim: bool = False) -> list[Path]:
    """Write one feature file per entry; clips at other rates are resampled first."""
    from .segmentation import trim_silence

    paths = []
    for entry in manifest:
        clip = read_wav(entry.path)
        if clip.sample_rate_hz != rate_hz:
            clip = resample(clip, rate_hz)
        if trim:
            clip = trim_silence(clip)
        target = feature_path(out_dir, entry)
        target.parent.mkdir(parents=True, exist_ok=True)
        write_feature_file(mfcc_sequence(clip, cfg), target)
        paths.append(target)
    return paths
