"""Splits, training loops, evaluation, and classifier-routed neutralization."""

from __future__ import annotations

import dataclasses
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .audio_io import AudioClip, Manifest
from .features import (
    FeatureScaler,
    MfccMatrix,
    apply_scaler,
    feature_path,
    fit_scaler,
    invert_scaler,
    mfcc_sequence,
    prefix_target_label,
    read_feature_file,
)
from .models import Autoencoder, Classifier
from .rng import substream


class TrainingDiverged(RuntimeError):
    pass


# -- splits -------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    kind: str = "random"
    test_fraction: float = 0.2
    # accent -> {"train": [speaker, ...], "test": [speaker, ...]}
    speakers: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("random", "speaker"):
            raise ValueError(f"unknown split kind {self.kind!r}")
        if self.kind == "random" and not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.kind == "speaker" and not self.speakers:
            raise ValueError("speaker split needs a speaker assignment per accent")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def make_split(manifest: Manifest, spec: SplitSpec) -> tuple[Manifest, Manifest]:
    """Disjoint train/test manifests sharing the full accent index."""
    if spec.kind == "random":
        rng = substream(spec.seed, "split")
        train, test = [], []
        for accent in manifest.accents:
            group = [e for e in manifest if e.accent == accent]
            order = rng.permutation(len(group))
            n_test = int(round(spec.test_fraction * len(group)))
            test += [group[i] for i in sorted(order[:n_test])]
            train += [group[i] for i in sorted(order[n_test:])]
    else:
        known = manifest.speakers()
        train, test = [], []
        for accent, sides in sorted(spec.speakers.items()):
            tr, te = set(sides.get("train", ())), set(sides.get("test", ()))
            both = tr & te
            if both:
                raise ValueError(f"speaker listed on both sides for {accent}: {sorted(both)}")
            missing = (tr | te) - set(known.get(accent, ()))
            if missing:
                raise ValueError(f"unknown speakers for {accent}: {sorted(missing)}")
            for e in manifest:
                if e.accent == accent:
                    if e.speaker_code in tr:
                        train.append(e)
                    elif e.speaker_code in te:
                        test.append(e)
    if not train or not test:
        raise ValueError(f"empty split side: {len(train)} train, {len(test)} test")
    by_path = {e.path: i for i, e in enumerate(manifest)}
    train.sort(key=lambda e: by_path[e.path])
    test.sort(key=lambda e: by_path[e.path])
    return manifest.subset(train), manifest.subset(test)


# -- data ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Raw MFCC matrices of a manifest with their accent ids."""

    values: np.ndarray  # (n, frames, coeffs)
    valid: np.ndarray  # (n,) valid frame counts
    labels: np.ndarray  # (n,) accent ids
    manifest: Manifest

    def __len__(self):
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.manifest.accent_index)

    def matrices(self) -> list[MfccMatrix]:
        return [MfccMatrix(v, int(n)) for v, n in zip(self.values, self.valid)]

    def scaled(self, scaler: FeatureScaler) -> np.ndarray:
        return np.stack([apply_scaler(scaler, v, int(n)) for v, n in zip(self.values, self.valid)]) \
            if len(self) else np.zeros((0,) + self.values.shape[1:])


def load_feature_set(manifest: Manifest, feature_dir) -> FeatureSet:
    mats = [read_feature_file(feature_path(feature_dir, e)) for e in manifest]
    if not mats:
        raise ValueError("empty manifest")
    return FeatureSet(
        np.stack([m.values for m in mats]),
        np.array([m.valid_frames for m in mats], dtype=np.int64),
        manifest.labels(),
        manifest,
    )


def fit_feature_scaler(*sets: FeatureSet) -> FeatureScaler:
    return fit_scaler([m for s in sets for m in s.matrices()])


# -- metrics ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Metrics:
    confusion: np.ndarray  # rows: true id, columns: predicted id

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: int) -> "Metrics":
        cm = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
        return cls(cm)

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.n) if self.n else 0.0

    @property
    def precision(self) -> np.ndarray:
        col = self.confusion.sum(axis=0)
        return np.divide(np.diag(self.confusion), col, out=np.zeros(len(col)), where=col > 0)

    @property
    def recall(self) -> np.ndarray:
        row = self.confusion.sum(axis=1)
        return np.divide(np.diag(self.confusion), row, out=np.zeros(len(row)), where=row > 0)

    def to_json(self, labels=None) -> dict:
        d = {
            "accuracy": self.accuracy,
            "n": self.n,
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
        }
        if labels is not None:
            d["labels"] = list(labels)
        return d

    def confusion_csv(self, labels) -> str:
        lines = ["true\\pred," + ",".join(labels)]
        for name, row in zip(labels, self.confusion):
            lines.append(name + "," + ",".join(str(int(c)) for c in row))
        return "\n".join(lines) + "\n"


# -- training -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainHyper:
    epochs: int = 50
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 0.001
    seed: int = 0
    patience: int | None = 5  # epochs without improvement before stopping; None disables
    min_delta: float = 0.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be positive or None")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainReport:
    history: list = field(default_factory=list)  # one dict per epoch run
    metrics: Metrics | None = None
    wall_time_s: float = 0.0
    seed: int = 0
    config: dict = field(default_factory=dict)
    scaler: FeatureScaler | None = None
    flags: list = field(default_factory=list)

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    @property
    def final_loss(self) -> float:
        return self.history[-1]["loss"] if self.history else math.nan

    def to_json(self, with_time: bool = True) -> dict:
        d = {
            "epochs_run": self.epochs_run,
            "history": self.history,
            "seed": self.seed,
            "config": self.config,
            "flags": list(self.flags),
        }
        if self.metrics is not None:
            d["metrics"] = self.metrics.to_json()
        if self.scaler is not None:
            d["scaler"] = self.scaler.to_json()
        if with_time:
            d["wall_time_s"] = self.wall_time_s
        return d


def _fit(model, X, Y, hyper: TrainHyper, loss_of, track_accuracy: bool) -> TrainReport:
    """Shared mini-batch loop. ``loss_of(model, xb, yb, rng)`` returns (loss, logits or None)."""
    start = time.perf_counter()
    report = TrainReport(seed=hyper.seed, config={"model": model.config.to_dict(), "hyper": hyper.to_dict()})
    opt = ad.make_optimizer(hyper.optimizer, model.parameters(), hyper.lr)
    shuffle = substream(hyper.seed, "shuffle")
    noise = substream(hyper.seed, "dropout" if isinstance(model, Classifier) else "noise")
    n = len(X)
    best, stale = math.inf, 0
    model.train()
    try:
        for epoch in range(hyper.epochs):
            order = shuffle.permutation(n)
            total, correct = 0.0, 0
            for b0 in range(0, n, hyper.batch_size):
                idx = order[b0:b0 + hyper.batch_size]
                with ad.Tape() as tape:
                    loss, logits = loss_of(model, X[idx], Y[idx], noise)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise TrainingDiverged(
                        f"loss became {value} at epoch {epoch + 1}, batch {b0 // hyper.batch_size + 1}"
                        f" (optimizer {hyper.optimizer}, lr {hyper.lr})")
                tape.backward(loss)
                opt.step()
                model.snap()
                total += value * len(idx)
                if track_accuracy:
                    correct += int((np.argmax(logits.data, axis=1) == Y[idx]).sum())
            row = {"epoch": epoch + 1, "loss": total / n}
            if track_accuracy:
                row["accuracy"] = correct / n
            report.history.append(row)
            if hyper.patience is not None:
                if row["loss"] < best - hyper.min_delta:
                    best, stale = row["loss"], 0
                else:
                    stale += 1
                    if stale >= hyper.patience:
                        report.flags.append(f"early_stop_epoch_{epoch + 1}")
                        break
    finally:
        for p in model.parameters():
            p.zero_grad()
        model.eval()
    report.wall_time_s = time.perf_counter() - start
    return report


def _classifier_loss(model, xb, yb, rng):
    logits = model.logits(xb, rng)
    return ad.softmax_cross_entropy(logits, yb), logits


def _reconstruction_loss(model, xb, yb, rng):
    return model.loss(xb, yb, rng), None


def train_classifier(model: Classifier, X, y, hyper: TrainHyper = TrainHyper()) -> TrainReport:
    """Mini-batch training with fused softmax cross-entropy; the model ends in eval mode."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) != len(y):
        raise ValueError("features and labels differ in length")
    if len(y) and (y.min() < 0 or y.max() >= model.config.n_classes):
        raise ValueError(f"labels outside 0..{model.config.n_classes - 1}")
    if len(X) == 0 and hyper.epochs:
        raise ValueError("empty training set")
    return _fit(model, X, y, hyper, _classifier_loss, track_accuracy=True)


def evaluate_classifier(model: Classifier, X, y, n_classes: int | None = None) -> Metrics:
    k = model.config.n_classes
    if n_classes is not None and n_classes != k:
        raise ValueError(f"class-count mismatch: model has {k} classes, data has {n_classes}")
    model.eval()
    return Metrics.from_predictions(y, model.predict(X), k)


@dataclass
class AccentClassifier:
    """A trained classifier with the scaler and accent names it was trained with."""

    model: Classifier
    scaler: FeatureScaler
    accents: tuple

    def __post_init__(self):
        self.accents = tuple(self.accents)
        if len(self.accents) != self.model.config.n_classes:
            raise ValueError("accent list does not match the model's class count")

    def predict(self, matrices) -> np.ndarray:
        X = np.stack([apply_scaler(self.scaler, m) for m in matrices])
        return self.model.predict(X)


# -- pairwise neutralization --------------------------------------------------

def align_pairs(source: Manifest, target: Manifest) -> list[tuple[int, int]]:
    """Index pairs of parallel recordings, keyed by (set, sentence).

    Repetitions are matched by position when both sides have the same count
    and crossed otherwise.
    """
    def groups(m):
        g = defaultdict(list)
        for i, e in enumerate(m):
            g[(e.set_id, e.sentence_id)].append((e.speaker_code, e.repetition, i))
        return {k: [i for *_, i in sorted(v)] for k, v in g.items()}

    gs, gt = groups(source), groups(target)
    pairs = []
    for key in sorted(gs.keys() & gt.keys()):
        a, b = gs[key], gt[key]
        if len(a) == len(b):
            pairs += list(zip(a, b))
        else:
            pairs += [(i, j) for i in a for j in b]
    if not pairs:
        raise ValueError("no aligned pairs: source and target share no (set, sentence) keys")
    return pairs


def train_neutralizer(model: Autoencoder, sources, targets,
                      hyper: TrainHyper = TrainHyper(optimizer="rmsprop")) -> TrainReport:
    """Train scaled source -> scaled target reconstruction (denoising in train mode)."""
    sources = np.asarray(sources, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(sources) == 0:
        raise ValueError("no aligned pairs")
    if sources.shape[0] != targets.shape[0]:
        raise ValueError("sources and targets differ in length")
    return _fit(model, sources, targets, hyper, _reconstruction_loss, track_accuracy=False)


@dataclass
class Converter:
    """Raw MFCC in, raw MFCC out, through the scaled space the model was trained in."""

    model: Autoencoder
    scaler: FeatureScaler
    target_id: int | None = None  # set for multi-target models
    n_accents: int | None = None

    def convert_many(self, matrices) -> list[MfccMatrix]:
        mats = list(matrices)
        X = [apply_scaler(self.scaler, m) for m in mats]
        if self.model.config.multi_target:
            if self.target_id is None or self.n_accents is None:
                raise ValueError("multi-target converter needs target_id and n_accents")
            X = [prefix_target_label(x, self.target_id, self.n_accents).values for x in X]
        Y = self.model.reconstruct(np.stack(X)) if X else []
        return [MfccMatrix(invert_scaler(self.scaler, y, m.valid_frames), m.valid_frames)
                for y, m in zip(Y, mats)]

    def convert(self, m: MfccMatrix) -> MfccMatrix:
        return self.convert_many([m])[0]

    def to(self, target_id: int) -> "Converter":
        return dataclasses.replace(self, target_id=target_id)


def evaluate_neutralizer(converter: Converter, classifier: AccentClassifier, sources, target_id: int) -> float:
    """Fraction of converted sources that the frozen classifier labels as ``target_id``."""
    if not 0 <= target_id < len(classifier.accents):
        raise ValueError(f"target id {target_id} unknown to the classifier")
    mats = list(sources)
    if not mats:
        raise ValueError("no source samples")
    pred = classifier.predict(converter.convert_many(mats))
    return float(np.mean(pred == target_id))


# -- multi-target -------------------------------------------------------------

def multitarget_examples(features: FeatureSet, scaler: FeatureScaler, routes) -> tuple[np.ndarray, np.ndarray]:
    """Build (prefixed scaled source, scaled target) arrays for ``routes`` = [(src id, tgt id), ...]."""
    n_accents = features.n_classes
    by_id = {}
    for a in range(n_accents):
        sel = np.flatnonzero(features.labels == a)
        by_id[a] = (features.manifest.subset([features.manifest.entries[i] for i in sel]), sel)
    scaled = features.scaled(scaler)
    xs, ys = [], []
    for s, t in routes:
        (ms, idx_s), (mt, idx_t) = by_id[s], by_id[t]
        for i, j in align_pairs(ms, mt):
            xs.append(prefix_target_label(scaled[idx_s[i]], t, n_accents).values)
            ys.append(scaled[idx_t[j]])
    if not xs:
        raise ValueError("no aligned pairs")
    return np.stack(xs), np.stack(ys)


def train_multitarget(model: Autoencoder, X, Y, hyper: TrainHyper = TrainHyper(optimizer="rmsprop")) -> TrainReport:
    """Train one label-prefixed model over every (source, target-label) pair."""
    if not model.config.multi_target:
        raise ValueError("train_multitarget needs a multi-target model")
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 3 or X.shape[1] != model.input_frames:
        raise ValueError(f"inconsistent label dimensionality: expected (*, {model.input_frames}, *) inputs")
    heads = X[:, 0, :]
    if not np.all((heads == 0) | (heads == 1)) or not np.all(heads.sum(axis=1) == 1):
        raise ValueError("inconsistent label dimensionality: every input needs a one-hot prefix row")
    seen, conflicts = {}, 0
    for x, y in zip(X, Y):
        key = x.tobytes()
        if key in seen and not np.array_equal(seen[key], y):
            conflicts += 1
        seen.setdefault(key, y)
    report = _fit(model, X, Y, hyper, _reconstruction_loss, track_accuracy=False)
    if conflicts:
        report.flags.append(f"conflicting_duplicates_{conflicts}")
    return report


# -- routing ------------------------------------------------------------------

def neutralize_route(classifier: AccentClassifier, bank: dict, sample, target_id: int) -> MfccMatrix:
    """Classify, then convert with the bank entry for the predicted accent.

    A sample already predicted as ``target_id`` is returned unchanged.
    """
    m = mfcc_sequence(sample) if isinstance(sample, AudioClip) else sample
    pred = int(classifier.predict([m])[0])
    if pred == target_id:
        return m
    if pred not in bank:
        gaps = [classifier.accents[i] for i in range(len(classifier.accents))
                if i != target_id and i not in bank]
        raise KeyError(f"bank incomplete: no converter for predicted accent "
                       f"{classifier.accents[pred]!r}; missing {gaps}")
    return bank[pred].convert(m)


def count_pairwise_models(n_accents: int) -> int:
    if n_accents < 2:
        raise ValueError("need at least two accents")
    return n_accents * (n_accents - 1)
