import numpy as np
import pytest

from accentlab import _kernels

pytestmark = pytest.mark.skipif(_kernels.compiled is None, reason="compiled extension not built")

C, PY = _kernels.compiled, _kernels.pure


@pytest.mark.parametrize("k,pad,stride", [(5, 2, 1), (3, 1, 2), (4, 0, 2), (1, 0, 1)])
def test_unfold_fold_agree(rng, k, pad, stride):
    x = rng.normal(size=(2, 17, 3))
    t_out = (17 + 2 * pad - k) // stride + 1
    a, b = C.unfold1d(x, k, pad, stride, t_out), PY.unfold1d(x, k, pad, stride, t_out)
    np.testing.assert_array_equal(a, b)
    cols = rng.normal(size=a.shape)
    np.testing.assert_allclose(C.fold1d(cols, 17, pad, stride), PY.fold1d(cols, 17, pad, stride), atol=1e-14)


@pytest.mark.parametrize("k,stride", [(2, 2), (3, 1), (3, 2)])
def test_maxpool_agrees_including_ties(rng, k, stride):
    x = np.round(rng.normal(size=(2, 15, 4)), 1)  # rounding creates ties
    (oc, ic), (op, ip) = C.maxpool1d_forward(x, k, stride), PY.maxpool1d_forward(x, k, stride)
    np.testing.assert_array_equal(oc, op)
    np.testing.assert_array_equal(ic, ip)
    g = rng.normal(size=oc.shape)
    np.testing.assert_allclose(C.maxpool1d_backward(g, ic, 15), PY.maxpool1d_backward(g, ip, 15), atol=1e-14)


def test_tsne_kernels_agree(rng):
    X = rng.normal(size=(40, 5))
    d2 = ((X[:, None] - X[None]) ** 2).sum(-1)
    (pc, bc), (pp, bp) = C.conditional_affinities(d2, 7.0, 1e-5, 100), PY.conditional_affinities(d2, 7.0, 1e-5, 100)
    np.testing.assert_allclose(pc, pp, atol=1e-12)
    np.testing.assert_allclose(bc, bp, rtol=1e-12)
    P = (pc + pc.T) / 80
    Y = rng.normal(size=(40, 2))
    (gc, kc), (gp, kp) = C.tsne_gradient(Y, P, 12.0), PY.tsne_gradient(Y, P, 12.0)
    np.testing.assert_allclose(gc, gp, atol=1e-12)
    assert kc == pytest.approx(kp, rel=1e-12)
