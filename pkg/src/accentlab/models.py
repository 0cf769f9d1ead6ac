"""The five model families: MLP, CNN and attention-CNN classifiers, plus the
convolutional and LSTM autoencoders used for accent neutralization.

All sequence inputs are (n, frames, 13). Classifiers return class logits
from ``logits`` and probabilities from ``forward``; autoencoders return
tanh-bounded reconstructions.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff.init import glorot_uniform, snap_float32, zeros
from .features import LABEL_WIDTH, N_FRAMES, N_MFCC

FAMILIES = ("mlp", "cnn", "attention_cnn", "conv_autoencoder", "lstm_autoencoder")
CLASSIFIERS = ("mlp", "cnn", "attention_cnn")
AUTOENCODERS = ("conv_autoencoder", "lstm_autoencoder")
FRAME_HOP_MS = 9.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    family: str
    n_classes: int = 9
    n_frames: int = N_FRAMES
    n_coeffs: int = N_MFCC
    hidden: tuple = (512, 128)
    conv_channels: tuple = (32, 64)
    kernel_size: int = 5
    pool: int = 2
    dense_units: int = 128
    dropout_p: float = 0.5
    attention_variant: str | None = None
    attention_site: int | None = None
    multi_target: bool = False
    skip_connections: bool = False
    lstm_units: int = 64
    lstm_layers: int = 2
    noise_std: float = 0.01
    label_width: int = LABEL_WIDTH

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        self.validate()

    def validate(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.family in CLASSIFIERS and self.n_classes < 2:
            raise ConfigError("n_classes must be at least 2")
        if self.family == "attention_cnn":
            if self.attention_variant not in ("1d", "2d"):
                raise ConfigError("attention_variant must be '1d' or '2d'")
            n_layers = 2 * len(self.conv_channels)
            if self.attention_site is None or not 0 <= self.attention_site < n_layers:
                raise ConfigError(
                    f"attention_site must index one of the {n_layers} conv/pool layers, "
                    f"got {self.attention_site}"
                )
        elif self.attention_variant is not None or self.attention_site is not None:
            raise ConfigError("attention fields are only valid for attention_cnn")
        if self.family not in AUTOENCODERS and (self.multi_target or self.skip_connections):
            raise ConfigError("multi_target/skip_connections are only valid for autoencoders")
        if self.skip_connections and not self.multi_target:
            raise ConfigError("skip_connections carry the target label and need multi_target")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError("dropout_p must be in [0, 1)")
        if self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be odd")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**d)


class Model:
    def __init__(self, config: ModelConfig, rng=None):
        self.config = config
        self.params: dict[str, ad.Parameter] = {}
        self.mode = "eval"
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self.build()

    # parameter helpers
    def _weight(self, name, shape, fan_in, fan_out):
        p = glorot_uniform(name, shape, fan_in, fan_out, self._rng)
        self.params[name] = p
        return p

    def _bias(self, name, n):
        p = zeros(name, (n,))
        self.params[name] = p
        return p

    def _conv(self, name, cin, cout):
        k = self.config.kernel_size
        self._weight(f"{name}.K", (k, cin, cout), k * cin, k * cout)
        self._bias(f"{name}.b", cout)

    def _dense(self, name, din, dout):
        self._weight(f"{name}.W", (din, dout), din, dout)
        self._bias(f"{name}.b", dout)

    def _lstm(self, name, din, units):
        self._weight(f"{name}.Wx", (din, 4 * units), din, units)
        self._weight(f"{name}.Wh", (units, 4 * units), units, units)
        b = np.zeros(4 * units)
        b[units:2 * units] = 1.0  # forget-gate bias
        self.params[f"{name}.b"] = ad.Parameter(f"{name}.b", b)

    def p(self, name):
        return self.params[name]

    def build(self):
        raise NotImplementedError

    @property
    def family(self):
        return self.config.family

    def parameters(self):
        return list(self.params.values())

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    @property
    def training(self):
        return self.mode == "train"

    def snap(self):
        """Round every parameter to float32 precision (the checkpoint dtype)."""
        for p in self.params.values():
            p.data = snap_float32(p.data)

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, arrays):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in self.params.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: {a.shape} vs {p.data.shape}")
            p.data = a.copy()

    def save(self, path, extra=None):
        ad.save_checkpoint(path, self.params, self.config.to_dict(), extra)

    def _input(self, x):
        return x if isinstance(x, ad.Tensor) else ad.Tensor(np.asarray(x, dtype=np.float64))


# -- classifiers --------------------------------------------------------------

class Classifier(Model):
    def logits(self, x, rng=None) -> ad.Tensor:
        raise NotImplementedError

    def forward(self, x, rng=None) -> ad.Tensor:
        return ad.softmax(self.logits(x, rng))

    def loss(self, x, labels, rng=None) -> ad.Tensor:
        return ad.softmax_cross_entropy(self.logits(x, rng), labels)

    def predict_proba(self, X, batch_size=64) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = [self.forward(X[i:i + batch_size]).data for i in range(0, len(X), batch_size)]
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.config.n_classes))

    def predict(self, X, batch_size=64) -> np.ndarray:
        return np.argmax(self.predict_proba(X, batch_size), axis=1)

    def _drop(self, h, rng):
        return ad.dropout(h, self.config.dropout_p, self.training, rng)


class MLP(Classifier):
    def build(self):
        c = self.config
        dims = [c.n_frames * c.n_coeffs, *c.hidden, c.n_classes]
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            self._dense(f"dense{i}", a, b)
        self._n_layers = len(dims) - 1

    def logits(self, x, rng=None):
        x = self._input(x)
        h = ad.reshape(x, (x.shape[0], -1))
        for i in range(self._n_layers):
            h = ad.dense(h, self.p(f"dense{i}.W"), self.p(f"dense{i}.b"))
            if i < self._n_layers - 1:
                h = self._drop(ad.relu(h), rng)
        return h


class CNN(Classifier):
    def build(self):
        c = self.config
        cin, T = c.n_coeffs, c.n_frames
        self.layer_shapes = []
        for i, cout in enumerate(c.conv_channels):
            self._conv(f"conv{i}", cin, cout)
            self.layer_shapes.append((T, cout))
            T = (T - c.pool) // c.pool + 1
            self.layer_shapes.append((T, cout))
            cin = cout
        flat = T * cin
        if self.config.family == "attention_cnn":
            site_c = self.layer_shapes[c.attention_site][1]
            self._weight("att.w", (site_c,), site_c, 1)
            beta_shape = (1,) if c.attention_variant == "1d" else (site_c,)
            self.params["att.beta"] = zeros("att.beta", beta_shape)
            flat += site_c
        self._dense("dense0", flat, c.dense_units)
        self._dense("out", c.dense_units, c.n_classes)
        self.last_scores = None

    def features(self, x):
        """Run the conv/pool stack; returns per-layer outputs."""
        h = self._input(x)
        if h.ndim == 2:
            h = ad.reshape(h, (1,) + h.shape)
        outs = []
        for i in range(len(self.config.conv_channels)):
            h = ad.relu(ad.conv1d(h, self.p(f"conv{i}.K"), self.p(f"conv{i}.b")))
            outs.append(h)
            h = ad.maxpool1d(h, self.config.pool, self.config.pool)
            outs.append(h)
        return outs

    def logits(self, x, rng=None):
        outs = self.features(x)
        h = outs[-1]
        n = h.shape[0]
        flat = ad.reshape(h, (n, -1))
        if self.config.family == "attention_cnn":
            site = outs[self.config.attention_site]
            att = ad.attention_1d if self.config.attention_variant == "1d" else ad.attention_2d
            y, scores = att(site, self.p("att.w"), self.p("att.beta"))
            self.last_scores = scores.data
            flat = ad.concat([flat, y], axis=1)
        h = ad.dense(flat, self.p("dense0.W"), self.p("dense0.b"))
        h = self._drop(ad.relu(h), rng)
        return ad.dense(h, self.p("out.W"), self.p("out.b"))

    def attention_stride(self) -> int:
        """Input frames per time step at the attention site."""
        return self.config.pool ** ((self.config.attention_site + 1) // 2)


# -- autoencoders -------------------------------------------------------------

def _pad_rows(h, multiple):
    T = h.shape[1]
    extra = (-T) % multiple
    if extra == 0:
        return h
    return ad.concat([h, np.zeros((h.shape[0], extra, h.shape[2]))], axis=1)


class Autoencoder(Model):
    @property
    def input_frames(self):
        return self.config.n_frames + (1 if self.config.multi_target else 0)

    def _split_input(self, x, rng):
        """Validate shape, separate the label row, add train-time noise to the body."""
        x = self._input(x)
        if x.ndim == 2:
            x = ad.reshape(x, (1,) + x.shape)
        c = self.config
        if x.shape[1:] != (self.input_frames, c.n_coeffs):
            if c.multi_target and x.shape[1] == c.n_frames:
                raise ValueError("input missing prefix row: multi-target models take label-prefixed input")
            raise ValueError(f"expected input (*, {self.input_frames}, {c.n_coeffs}), got {x.shape}")
        label = None
        if c.multi_target:
            head = x.data[:, 0, :]
            if not np.all((head == 0) | (head == 1)) or not np.all(head.sum(axis=1) == 1):
                raise ValueError("input missing prefix row: row 0 must be a one-hot target label")
            label = head[:, : c.label_width]
        if self.training and c.noise_std > 0:
            if rng is None:
                raise ValueError("training-mode autoencoder needs a noise generator")
            noise = rng.normal(0.0, c.noise_std, size=x.shape)
            if c.multi_target:
                noise[:, 0, :] = 0.0
            x = ad.add(x, noise)
        return x, label

    def _with_label(self, h, label):
        if label is None or not self.config.skip_connections:
            return h
        return ad.concat([h, np.repeat(label[:, None, :], h.shape[1], axis=1)], axis=2)

    def reconstruct(self, X, batch_size=64) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = [self.forward(X[i:i + batch_size]).data for i in range(0, len(X), batch_size)]
        return np.concatenate(out, axis=0)

    def loss(self, x, target, rng=None):
        return ad.mse(self.forward(x, rng), target)


class ConvAutoencoder(Autoencoder):
    def build(self):
        c = self.config
        extra = c.label_width if c.skip_connections else 0
        chans = c.conv_channels
        cin = c.n_coeffs
        for i, cout in enumerate(chans):
            self._conv(f"enc{i}", cin + extra, cout)
            cin = cout
        dec_out = list(reversed(chans[:-1])) + [c.n_coeffs]
        for i, cout in enumerate(dec_out):
            last = i == len(dec_out) - 1
            self._conv(f"dec{i}", cin + (0 if last else extra), cout)
            cin = cout

    def forward(self, x, rng=None):
        c = self.config
        x, label = self._split_input(x, rng)
        T = x.shape[1]
        n_stages = len(c.conv_channels)
        h = _pad_rows(x, c.pool ** n_stages)
        for i in range(n_stages):
            h = ad.conv1d(self._with_label(h, label), self.p(f"enc{i}.K"), self.p(f"enc{i}.b"))
            h = ad.maxpool1d(ad.tanh(h), c.pool, c.pool)
        for i in range(n_stages):
            if i < n_stages - 1:
                h = self._with_label(h, label)
            h = ad.conv1d_transpose(h, self.p(f"dec{i}.K"), self.p(f"dec{i}.b"), stride=c.pool)
            h = ad.tanh(h)
        start = 1 if c.multi_target else 0
        return h[:, start:T, :]


class LSTMAutoencoder(Autoencoder):
    def build(self):
        c = self.config
        extra = c.label_width if c.skip_connections else 0
        din = c.n_coeffs
        for i in range(c.lstm_layers):
            self._lstm(f"enc{i}", din + extra, c.lstm_units)
            din = c.lstm_units
        for i in range(c.lstm_layers):
            self._lstm(f"dec{i}", c.lstm_units + extra, c.lstm_units)
        self._dense("out", c.lstm_units, c.n_coeffs)

    def _layer(self, name, h):
        return ad.lstm_sequence(h, self.p(f"{name}.Wx"), self.p(f"{name}.Wh"), self.p(f"{name}.b"))

    def forward(self, x, rng=None):
        c = self.config
        h, label = self._split_input(x, rng)
        for i in range(c.lstm_layers):
            h = self._layer(f"enc{i}", self._with_label(h, label))
        summary = h[:, h.shape[1] - 1, :]
        h = ad.repeat_time(summary, c.n_frames)
        for i in range(c.lstm_layers):
            h = self._layer(f"dec{i}", self._with_label(h, label))
        return ad.tanh(ad.dense(h, self.p("out.W"), self.p("out.b")))


# -- builders -----------------------------------------------------------------

def _cfg(cfg, **defaults):
    if isinstance(cfg, dict):
        cfg = ModelConfig.from_dict({**defaults, **cfg})
    return cfg


def build_mlp(cfg, rng=None) -> MLP:
    cfg = _cfg(cfg, family="mlp")
    if cfg.family != "mlp":
        raise ConfigError("build_mlp needs family 'mlp'")
    return MLP(cfg, rng)


def build_cnn(cfg, rng=None) -> CNN:
    cfg = _cfg(cfg, family="cnn")
    if cfg.family != "cnn":
        raise ConfigError("build_cnn needs family 'cnn'")
    return CNN(cfg, rng)


def build_attention_cnn(cfg, rng=None) -> CNN:
    cfg = _cfg(cfg, family="attention_cnn")
    if cfg.family != "attention_cnn":
        raise ConfigError("build_attention_cnn needs family 'attention_cnn'")
    return CNN(cfg, rng)


def build_pairwise_autoencoder(cfg, rng=None) -> ConvAutoencoder:
    cfg = _cfg(cfg, family="conv_autoencoder")
    if cfg.family != "conv_autoencoder" or cfg.multi_target:
        raise ConfigError("pairwise autoencoder needs family 'conv_autoencoder' without multi_target")
    return ConvAutoencoder(cfg, rng)


def build_multitarget_autoencoder(cfg, rng=None) -> Autoencoder:
    cfg = _cfg(cfg, family="conv_autoencoder", multi_target=True, skip_connections=True)
    if cfg.family not in AUTOENCODERS or not cfg.multi_target:
        raise ConfigError("multi-target autoencoder needs an autoencoder family with multi_target")
    cls = ConvAutoencoder if cfg.family == "conv_autoencoder" else LSTMAutoencoder
    return cls(cfg, rng)


def build_model(cfg, rng=None) -> Model:
    cfg = _cfg(cfg)
    if cfg.family == "mlp":
        return MLP(cfg, rng)
    if cfg.family in ("cnn", "attention_cnn"):
        return CNN(cfg, rng)
    if cfg.family == "conv_autoencoder":
        return ConvAutoencoder(cfg, rng)
    return LSTMAutoencoder(cfg, rng)


def load_model(path) -> Model:
    config, arrays, _ = ad.load_checkpoint(path)
    model = build_model(ModelConfig.from_dict(config))
    model.load_state_dict(arrays)
    return model.eval()


def attention_scores(model, x):
    """Attention scores for one input plus the start time (ms) of each scored step.

    Returns ``(scores, times_ms)``; scores is (T,) for the 1-D variant and
    (T, C) for the 2-D variant.
    """
    if not isinstance(model, CNN) or model.config.family != "attention_cnn":
        raise TypeError("attention_scores needs an attention_cnn model")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    model.logits(x)
    scores = model.last_scores[0]
    times = np.arange(scores.shape[0]) * FRAME_HOP_MS * model.attention_stride()
    return scores, times
