import numpy as np
import pytest

from accentlab import autodiff as ad
from accentlab.models import (
    ConfigError,
    ModelConfig,
    attention_scores,
    build_attention_cnn,
    build_cnn,
    build_mlp,
    build_model,
    build_multitarget_autoencoder,
    build_pairwise_autoencoder,
    load_model,
)

TINY = dict(n_frames=8, conv_channels=(2, 3), dense_units=4, hidden=(5, 4))


def rng(seed=0):
    return np.random.default_rng(seed)


@pytest.mark.parametrize("k", [9, 2])
def test_mlp_outputs(k):
    m = build_mlp({"n_classes": k, "hidden": (16, 8)}, rng())
    p = m.forward(rng(1).normal(size=(3, 499, 13))).data
    assert p.shape == (3, k)
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)
    assert np.all(np.isfinite(p))


def test_cnn_default_shapes():
    m = build_cnn({"n_classes": 9}, rng())
    outs = m.features(rng(1).normal(size=(1, 499, 13)))
    assert [o.shape[1:] for o in outs] == [(499, 32), (249, 32), (249, 64), (124, 64)]
    assert m.params["dense0.W"].shape == (7936, 128)
    p = m.forward(rng(2).normal(size=(2, 499, 13))).data
    assert p.shape == (2, 9)
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)


def test_attention_cnn_scores():
    m = build_attention_cnn({"n_classes": 9, "attention_variant": "1d", "attention_site": 2}, rng())
    s, times = attention_scores(m, rng(1).normal(size=(499, 13)))
    assert s.shape == (249,) and abs(s.sum() - 1) < 1e-9
    assert times[1] == 18.0
    m2 = build_attention_cnn({"n_classes": 9, "attention_variant": "2d", "attention_site": 1}, rng())
    s2, _ = attention_scores(m2, rng(1).normal(size=(499, 13)))
    assert s2.shape == (249, 32)
    np.testing.assert_allclose(s2.sum(axis=0), 1, atol=1e-9)


def test_attention_forced_one_hot_selects_frame():
    m = build_attention_cnn(dict(TINY, n_classes=2, attention_variant="1d", attention_site=0), rng())
    x = np.zeros((1, 8, 13))
    x[0, 5, :] = 1.0
    m.params["conv0.K"].data[:] = 0.0
    m.params["conv0.K"].data[2, 0, :] = 1.0  # centre tap copies coefficient 0
    m.params["att.w"].data[:] = 500.0
    m.logits(x)
    site = m.features(x)[0].data[0]
    assert np.argmax(m.last_scores[0]) == 5
    y, _ = ad.attention_1d(site, m.params["att.w"], m.params["att.beta"])
    np.testing.assert_allclose(y.data, site[5], atol=1e-9)


def test_attention_invalid_site():
    with pytest.raises(ConfigError):
        build_attention_cnn({"attention_variant": "1d", "attention_site": 4})
    with pytest.raises(ConfigError):
        ModelConfig(family="cnn", attention_variant="1d", attention_site=1)
    with pytest.raises(ConfigError):
        ModelConfig(family="cnn", multi_target=True)
    with pytest.raises(ConfigError):
        ModelConfig(family="mlp", n_classes=1)
    with pytest.raises(TypeError):
        attention_scores(build_cnn(TINY, rng()), np.zeros((8, 13)))


def test_pairwise_autoencoder_range_and_zero():
    m = build_pairwise_autoencoder({}, rng())
    y = m.forward(rng(1).normal(scale=3.0, size=(2, 499, 13))).data
    assert y.shape == (2, 499, 13) and np.all(np.abs(y) <= 1)
    for p in m.parameters():
        p.data[:] = 0
    assert np.all(m.forward(np.zeros((1, 499, 13))).data == 0)


def test_multitarget_shapes_and_label_dependence():
    m = build_multitarget_autoencoder({}, rng())
    body = rng(1).uniform(-1, 1, size=(499, 13))
    a = np.concatenate([np.eye(13)[[0]], body])[None]
    b = np.concatenate([np.eye(13)[[1]], body])[None]
    ya, yb = m.forward(a).data, m.forward(b).data
    assert ya.shape == (1, 499, 13)
    assert not np.allclose(ya, yb)
    with pytest.raises(ValueError, match="prefix"):
        m.forward(body[None])


def test_lstm_multitarget_builds():
    m = build_multitarget_autoencoder(dict(family="lstm_autoencoder", n_frames=6, lstm_units=4), rng())
    x = np.concatenate([np.eye(13)[[2]], rng(1).uniform(-1, 1, (6, 13))])[None]
    assert m.forward(x).shape == (1, 6, 13)


def _generic_point(model, seed):
    """Move zero-initialised biases off ReLU kinks before finite differencing."""
    r = rng(seed)
    for p in model.parameters():
        if p.name.endswith(".b") or p.name.endswith(".beta"):
            p.data = p.data + r.normal(0, 0.1, size=p.shape)
    return model


def _loss_on(model, x, labels_or_target, train_seed=None):
    def fn(*_):
        r = None if train_seed is None else np.random.default_rng(train_seed)
        return model.loss(x, labels_or_target, r)
    return fn


def _checked_params(model):
    # an attention bias shifts every score in a softmax over time equally, so
    # its gradient is identically zero; it is asserted separately
    return [p for p in model.parameters() if p.name != "att.beta"]


def _converged_instance(make, tries=60):
    """First seed whose central differences at eps=1e-3 have converged."""
    for seed in range(tries):
        model, fn = make(seed)
        params = _checked_params(model)
        if ad.fd_converged(fn, params):
            return model, fn, params
    pytest.fail("no instance with converged finite differences")


def _classifier_instance(cfg, train):
    def make(seed):
        m = _generic_point(build_model(cfg, rng(seed)), 1000 + seed)
        x = rng(2000 + seed).normal(size=(2, 8, 13))
        if train:
            m.train()
        return m, _loss_on(m, x, np.array([0, 2]), train_seed=seed if train else None)
    return make


@pytest.mark.parametrize("train", [False, True])
@pytest.mark.parametrize("cfg", [
    dict(TINY, family="mlp", n_classes=3),
    dict(TINY, family="cnn", n_classes=3),
    dict(TINY, family="attention_cnn", n_classes=3, attention_variant="1d", attention_site=2),
    dict(TINY, family="attention_cnn", n_classes=3, attention_variant="2d", attention_site=1),
])
def test_classifier_gradcheck(cfg, train):
    m, fn, params = _converged_instance(_classifier_instance(cfg, train))
    assert ad.grad_check(fn, params) < 1e-4
    for beta in (p for p in m.parameters() if p.name == "att.beta"):
        assert np.abs(ad.analytic_gradient(fn, [beta])[0]).max() < 1e-12


@pytest.mark.parametrize("cfg", [
    dict(family="conv_autoencoder", n_frames=7, conv_channels=(2, 3)),
    dict(family="conv_autoencoder", n_frames=7, conv_channels=(2, 3), multi_target=True, skip_connections=True),
    dict(family="lstm_autoencoder", n_frames=4, lstm_units=3, multi_target=True, skip_connections=True),
    dict(family="lstm_autoencoder", n_frames=4, lstm_units=3),
])
def test_autoencoder_gradcheck(cfg):
    def make(seed):
        r = rng(seed)
        m = _generic_point(build_model(cfg, r), 1000 + seed)
        x = r.uniform(-1, 1, size=(2, m.input_frames, 13))
        if m.config.multi_target:
            x[:, 0, :] = np.eye(13)[[1, 4]]
        target = r.uniform(-0.9, 0.9, size=(2, cfg["n_frames"], 13))
        m.train()
        return m, _loss_on(m, x, target, train_seed=seed)

    _, fn, params = _converged_instance(make)
    assert ad.grad_check(fn, params) < 1e-4


@pytest.mark.parametrize("cfg", [
    dict(family="cnn", n_classes=4),
    dict(family="attention_cnn", n_classes=3, attention_variant="2d", attention_site=3),
    dict(family="mlp", n_classes=2, hidden=(32,)),
    dict(family="conv_autoencoder", multi_target=True, skip_connections=True),
])
def test_checkpoint_roundtrip_is_bitwise(tmp_path, cfg):
    m = build_model(cfg, rng(7))
    x = rng(8).normal(size=(2, 499, 13))
    if m.config.multi_target:
        x = np.concatenate([np.tile(np.eye(13)[[0]], (2, 1, 1)), x], axis=1)
    before = m.forward(x).data
    m.save(tmp_path / "m.ckpt")
    loaded = load_model(tmp_path / "m.ckpt")
    assert loaded.config == m.config
    assert np.array_equal(loaded.forward(x).data, before)
