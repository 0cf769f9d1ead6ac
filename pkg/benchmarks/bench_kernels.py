"""Compiled vs numpy kernels on the shapes the models and t-SNE actually use.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from accentlab import _kernels


def cases(rng):
    x = rng.normal(size=(32, 499, 13))
    h = rng.normal(size=(32, 249, 32))
    cols = rng.normal(size=(32, 499, 5, 13))
    X = rng.normal(size=(300, 20))
    d2 = ((X[:, None] - X[None]) ** 2).sum(-1)
    P0, _ = _kernels.pure.conditional_affinities(d2, 30.0)
    P = (P0 + P0.T) / (2 * len(X))
    Y = rng.normal(size=(300, 2))
    _, idx = _kernels.pure.maxpool1d_forward(h, 2, 2)
    g = rng.normal(size=idx.shape)
    return {
        "unfold1d (32x499x13, k=5)": lambda m: m.unfold1d(x, 5, 2, 1, 499),
        "fold1d (32x499x5x13)": lambda m: m.fold1d(cols, 499, 2, 1),
        "maxpool1d fwd (32x249x32)": lambda m: m.maxpool1d_forward(h, 2, 2),
        "maxpool1d bwd (32x124x32)": lambda m: m.maxpool1d_backward(g, idx, 249),
        "perplexity search (n=300)": lambda m: m.conditional_affinities(d2, 30.0, 1e-5, 100),
        "t-SNE gradient (n=300)": lambda m: m.tsne_gradient(Y, P, 1.0),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels.compiled is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        t = {}
        for label, mod in (("numpy", _kernels.pure), ("cython", _kernels.compiled)):
            fn(mod)
            t[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {t['numpy']:10.2f} {t['cython']:10.2f} {t['numpy'] / t['cython']:7.1f}x")


if __name__ == "__main__":
    main()
