"""Hot numerical kernels: compiled extension when built, numpy otherwise.

Set ``ACCENTLAB_PURE=1`` before import to force the numpy path.
"""

import os

import numpy as np

from . import _pykernels as pure

compiled = None
if not os.environ.get("ACCENTLAB_PURE"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

backend = compiled if compiled is not None else pure
BACKEND_NAME = "cython" if compiled is not None else "numpy"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def unfold1d(x, k, pad, stride, t_out):
    return backend.unfold1d(_c(x), k, pad, stride, t_out)


def fold1d(cols, t_in, pad, stride):
    return backend.fold1d(_c(cols), t_in, pad, stride)


def maxpool1d_forward(x, k, stride):
    return backend.maxpool1d_forward(_c(x), k, stride)


def maxpool1d_backward(grad, idx, t_in):
    return backend.maxpool1d_backward(_c(grad), np.ascontiguousarray(idx, dtype=np.int64), t_in)


def conditional_affinities(d2, perplexity, tol=1e-5, max_iter=100):
    return backend.conditional_affinities(_c(d2), float(perplexity), tol, max_iter)


def tsne_gradient(Y, P, exaggeration):
    return backend.tsne_gradient(_c(Y), _c(P), float(exaggeration))


__all__ = [
    "BACKEND_NAME",
    "compiled",
    "pure",
    "unfold1d",
    "fold1d",
    "maxpool1d_forward",
    "maxpool1d_backward",
    "conditional_affinities",
    "tsne_gradient",
]
