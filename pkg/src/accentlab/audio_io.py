"""WAV reading/writing, the on-disk dataset layout, and manifests.

Dataset layout::

    <root>/<accent>/<speaker>_s<set:2>_<sentence:2>_r<rep>.wav

e.g. ``bangla/ban-1_s01_05_r2.wav``. Accent directory names are matched
case-insensitively against the nine known accents.
"""

from __future__ import annotations

import json
import logging
import os
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

log = logging.getLogger(__name__)

ACCENTS = (
    "American",
    "Australian",
    "Bangla",
    "British",
    "Indian",
    "Malayalam",
    "Odiya",
    "Telugu",
    "Welsh",
)
_ACCENT_BY_KEY = {a.lower(): a for a in ACCENTS}

FILENAME_RE = re.compile(
    r"^(?P<speaker>[A-Za-z]+-\d+)_s(?P<set>\d{2})_(?P<sentence>\d{2})_r(?P<rep>\d)\.wav$",
    re.IGNORECASE,
)


class UnsupportedFormatError(ValueError):
    """Raised for WAV encodings other than 8/16/24/32-bit PCM or 32-bit float."""


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise ValueError("samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


def read_wav(path) -> AudioClip:
    """Read a PCM or float WAV file as a mono clip scaled to [-1, 1]."""
    try:
        rate, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except ValueError as exc:
        raise UnsupportedFormatError(f"unsupported format: {path}: {exc}") from exc

    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # scipy returns 24-bit audio left-justified in int32
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = np.clip(data.astype(np.float64), -1.0, 1.0)
    else:
        raise UnsupportedFormatError(f"unsupported format: {path}: sample type {data.dtype}")

    if x.ndim == 2:
        if x.shape[1] > 2:
            raise UnsupportedFormatError(f"unsupported format: {path}: {x.shape[1]} channels")
        x = x.mean(axis=1)
    return AudioClip(x, rate)


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as 16-bit PCM mono."""
    q = np.round(clip.samples * 32768.0)
    q = np.clip(q, -32768, 32767).astype("<i2")
    wavfile.write(str(path), clip.sample_rate_hz, q)


def resample(clip: AudioClip, rate_hz: int = 16000) -> AudioClip:
    """Linear-interpolation resampling. Only used as an explicit preprocessing step."""
    if rate_hz <= 0:
        raise ValueError("target rate must be positive")
    if rate_hz == clip.sample_rate_hz or len(clip) == 0:
        return AudioClip(clip.samples.copy(), rate_hz)
    n_out = int(round(len(clip) * rate_hz / clip.sample_rate_hz))
    t_out = np.arange(n_out) / rate_hz
    t_in = np.arange(len(clip)) / clip.sample_rate_hz
    return AudioClip(np.interp(t_out, t_in, clip.samples), rate_hz)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    accent: str
    speaker_code: str
    set_id: int
    sentence_id: int
    repetition: int

    def __post_init__(self):
        if self.accent not in ACCENTS:
            raise ValueError(f"unknown accent {self.accent!r}")
        if not 1 <= self.set_id <= 72:
            raise ValueError(f"set_id out of range: {self.set_id}")
        if not 1 <= self.sentence_id <= 10:
            raise ValueError(f"sentence_id out of range: {self.sentence_id}")
        if not 1 <= self.repetition <= 3:
            raise ValueError(f"repetition out of range: {self.repetition}")

    def to_json(self) -> dict:
        return {
            "path": self.path,
            "accent": self.accent,
            "speaker": self.speaker_code,
            "set": self.set_id,
            "sentence": self.sentence_id,
            "repetition": self.repetition,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ManifestEntry":
        return cls(
            path=d["path"],
            accent=d["accent"],
            speaker_code=d["speaker"],
            set_id=int(d["set"]),
            sentence_id=int(d["sentence"]),
            repetition=int(d["repetition"]),
        )


@dataclass(frozen=True)
class Manifest:
    entries: tuple
    accent_index: dict = field(default_factory=dict)
    warnings: tuple = ()

    def __post_init__(self):
        entries = tuple(self.entries)
        paths = [e.path for e in entries]
        if len(set(paths)) != len(paths):
            raise ValueError("duplicate paths in manifest")
        object.__setattr__(self, "entries", entries)
        if not self.accent_index:
            object.__setattr__(self, "accent_index", build_accent_index(e.accent for e in entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def accents(self) -> list[str]:
        return sorted(self.accent_index, key=self.accent_index.get)

    def label_of(self, entry: ManifestEntry) -> int:
        return self.accent_index[entry.accent]

    def labels(self) -> np.ndarray:
        return np.array([self.accent_index[e.accent] for e in self.entries], dtype=np.int64)

    def subset(self, entries) -> "Manifest":
        """Same accent index, fewer entries."""
        return Manifest(tuple(entries), dict(self.accent_index))

    def speakers(self) -> dict[str, list[str]]:
        out: dict[str, set] = {}
        for e in self.entries:
            out.setdefault(e.accent, set()).add(e.speaker_code)
        return {a: sorted(s) for a, s in out.items()}


def build_accent_index(labels) -> dict[str, int]:
    """Contiguous ids in sorted label order."""
    return {a: i for i, a in enumerate(sorted(set(labels)))}


def parse_entry_path(path, accent_dir: str) -> ManifestEntry | None:
    m = FILENAME_RE.match(os.path.basename(str(path)))
    accent = _ACCENT_BY_KEY.get(accent_dir.lower())
    if m is None or accent is None:
        return None
    speaker = m["speaker"]
    try:
        return ManifestEntry(
            path=str(path),
            accent=accent,
            speaker_code=speaker[0].upper() + speaker[1:].lower(),
            set_id=int(m["set"]),
            sentence_id=int(m["sentence"]),
            repetition=int(m["rep"]),
        )
    except ValueError:
        return None


def scan_dataset(root) -> Manifest:
    """Index every parseable WAV under ``root``; unparseable names are skipped with a warning."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    entries, skipped = [], []
    for accent_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for f in sorted(accent_dir.rglob("*")):
            if not f.is_file() or f.suffix.lower() != ".wav":
                continue
            entry = parse_entry_path(f, accent_dir.name)
            if entry is None:
                skipped.append(str(f))
            else:
                entries.append(entry)
    if not entries:
        raise ValueError(f"no dataset entries found under {root}")
    entries.sort(key=lambda e: e.path)
    for s in skipped:
        warnings.warn(f"skipping file not matching naming scheme: {s}", stacklevel=2)
    return Manifest(tuple(entries), warnings=tuple(skipped))


def write_manifest(manifest: Manifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            fh.write(json.dumps(e.to_json(), sort_keys=True) + "\n")


def read_manifest(path) -> Manifest:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(ManifestEntry.from_json(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad manifest line: {exc}") from exc
    if not entries:
        raise ValueError(f"empty manifest: {path}")
    entries.sort(key=lambda e: e.path)
    return Manifest(tuple(entries))
