"""Separability analysis (PCA, exact t-SNE) and CSV export of embeddings and attention."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .rng import substream

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Embedding:
    points: np.ndarray  # (n, d), d in {2, 3}
    labels: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    history: tuple = ()  # per-epoch KL divergence for t-SNE

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise ValueError(f"embedding must be (n, 2) or (n, 3), got {pts.shape}")
        if len(self.labels) != len(pts):
            raise ValueError("points and labels differ in count")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", np.asarray(self.labels))


# -- PCA ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PCAResult:
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (k, D), orthonormal rows (zero rows past the rank)
    explained_variance: np.ndarray  # (k,), non-increasing
    scores: np.ndarray  # (n, k)
    total_variance: float

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance == 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def reconstruct(self, scores=None) -> np.ndarray:
        s = self.scores if scores is None else np.asarray(scores, dtype=np.float64)
        return s @ self.components + self.mean

    def embedding(self, labels) -> Embedding:
        return Embedding(self.scores, labels, "pca",
                         {"explained_variance": self.explained_variance.tolist(),
                          "explained_variance_ratio": self.explained_variance_ratio.tolist()})


def pca(X, k: int, rank_tol: float = 1e-10) -> PCAResult:
    """Top-``k`` principal components of the rows of ``X``.

    Uses the D x D covariance or the n x n Gram matrix, whichever is
    smaller. When ``k`` exceeds the numerical rank the trailing components
    are zero with zero variance, and a warning is logged.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("pca needs a 2-D matrix")
    n, D = X.shape
    if n < 2:
        raise ValueError("pca needs at least two rows")
    if not 1 <= k <= min(n, D):
        raise ValueError(f"k must be in 1..{min(n, D)}, got {k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    if D <= n:
        evals, evecs = np.linalg.eigh(Xc.T @ Xc)
        order = np.argsort(evals)[::-1]
        evals, comps = evals[order], evecs[:, order].T
    else:
        evals, evecs = np.linalg.eigh(Xc @ Xc.T)
        order = np.argsort(evals)[::-1]
        evals, U = evals[order], evecs[:, order]
        pos = np.maximum(evals, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            comps = (Xc.T @ U / np.sqrt(np.where(pos > 0, pos, 1.0))).T
    evals = np.maximum(evals, 0.0)
    top = evals[0] if evals.size else 0.0
    rank = int(np.sum(evals > rank_tol * max(top, 1e-300))) if top > 0 else 0

    components = np.zeros((k, D))
    variance = np.zeros(k)
    keep = min(k, rank)
    components[:keep] = comps[:keep]
    variance[:keep] = evals[:keep] / (n - 1)
    if k > rank:
        log.warning("pca: k=%d exceeds data rank %d; trailing components are zero", k, rank)
    # deterministic sign: largest-magnitude loading positive
    for i in range(keep):
        j = np.argmax(np.abs(components[i]))
        if components[i, j] < 0:
            components[i] *= -1
    total = float(np.sum(Xc * Xc) / (n - 1))
    return PCAResult(mean, components, variance, Xc @ components.T, total)


# -- t-SNE --------------------------------------------------------------------

@dataclass(frozen=True)
class TSNEParams:
    perplexity: float = 30.0
    learning_rate: float | str = "auto"  # "auto": max(n / exaggeration / 4, 50)
    epochs: int = 1000
    dims: int = 2
    seed: int = 0
    exaggeration: float = 12.0
    exaggeration_epochs: int = 50
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    min_gain: float = 0.01

    def resolved_lr(self, n: int) -> float:
        if self.learning_rate == "auto":
            return max(n / self.exaggeration / 4.0, 50.0)
        return float(self.learning_rate)

    def validate(self, n: int) -> None:
        if self.dims not in (2, 3):
            raise ValueError("t-SNE output must be 2 or 3 dimensional")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate != "auto" and not self.learning_rate > 0:
            raise ValueError("learning rate must be positive or 'auto'")
        if not 0 < self.perplexity < (n - 1) / 3:
            raise ValueError(f"perplexity {self.perplexity} too large for {n} points "
                             f"(must be below (n - 1) / 3 = {(n - 1) / 3:.3g})")


def joint_probabilities(X, perplexity: float) -> np.ndarray:
    """Symmetrised affinities P = (P_{j|i} + P_{i|j}) / 2n."""
    X = np.asarray(X, dtype=np.float64)
    sq = np.sum(X * X, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    cond, _ = _kernels.conditional_affinities(d2, perplexity)
    P = (cond + cond.T) / (2.0 * len(X))
    return np.maximum(P, 1e-12 * (P > 0))


def tsne(X, labels=None, params: TSNEParams | None = None, **kw) -> Embedding:
    """Exact t-SNE by gradient descent with momentum, early exaggeration and adaptive gains."""
    p = params if params is not None else TSNEParams(**kw)
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    p.validate(n)
    P = joint_probabilities(X, p.perplexity)
    lr = p.resolved_lr(n)

    rng = substream(p.seed, "tsne")
    Y = rng.normal(0.0, 1e-4, size=(n, p.dims))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history = []
    for epoch in range(p.epochs):
        exag = p.exaggeration if epoch < p.exaggeration_epochs else 1.0
        mom = p.momentum if epoch < p.momentum_switch else p.final_momentum
        grad, kl = _kernels.tsne_gradient(Y, P, exag)
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, p.min_gain, out=gains)
        update = mom * update - lr * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        history.append(kl)
    # KL of the final layout
    history[-1] = _kernels.tsne_gradient(Y, P, 1.0)[1]
    if labels is None:
        labels = np.zeros(n, dtype=np.int64)
    return Embedding(Y, labels, "tsne",
                     {"perplexity": p.perplexity, "learning_rate": lr,
                      "epochs": p.epochs, "seed": p.seed}, tuple(history))


# -- export -------------------------------------------------------------------

def export_embedding(e: Embedding, path) -> None:
    d = e.points.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"x{i + 1}" for i in range(d)])
        for lab, row in zip(e.labels, e.points):
            w.writerow([lab] + [repr(float(v)) for v in row])


def read_embedding_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return [r[0] for r in rows[1:]], np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def export_attention(scores, frame_times_ms, path) -> None:
    """Rows of ``time_ms, score`` (one score column per channel for the 2-D variant)."""
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(frame_times_ms, dtype=np.float64)
    if s.ndim not in (1, 2) or len(s) != len(t):
        raise ValueError("scores and frame times must align on the time axis")
    cols = ["score"] if s.ndim == 1 else [f"score_{c}" for c in range(s.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time_ms"] + cols)
        for ti, row in zip(t, s.reshape(len(t), -1)):
            w.writerow([repr(float(ti))] + [repr(float(v)) for v in row])


def read_attention_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    scores = data[:, 1:]
    return data[:, 0], scores[:, 0] if scores.shape[1] == 1 and rows[0][1] == "score" else scores
