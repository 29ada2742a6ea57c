"""Beam-fusion gesture classifier: self-attention over beam tokens, CNN, LSTM, softmax.

Per time step every beam's RDM is flattened into one token. The encoder
layers (multi-head self-attention + residual + layer norm) mix information
across beams. The tokens are folded back to (beams, range, Doppler) and the
beams become the input channels of the conv stack. A dense layer with
dropout yields one latent vector per step; the latent sequence goes through
the LSTM and the final hidden state is classified.

There is no positional encoding, so the attention block is equivariant to
beam order; beam identity only matters from the first conv layer on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..configio import dataclass_from_dict
from ..errors import InvalidConfigError, ShapeError
from ..rdm import RdmSequence
from . import layers as L


@dataclass(frozen=True)
class ModelConfig:
    range_bins: int
    doppler_bins: int
    n_beams: int
    n_classes: int = 6
    n_rx: int = 1
    attention_layers: int = 3
    heads: int = 8
    conv_filters: tuple[int, ...] = (8, 16, 32)
    kernel: int = 3
    latent_dim: int = 64
    dropout: float = 0.5
    lstm_hidden: int = 128
    lstm_layers: int = 1
    dtype: str = "float64"

    def __post_init__(self):
        if min(self.range_bins, self.doppler_bins, self.n_beams, self.n_rx, self.n_classes) < 1:
            raise InvalidConfigError("model dimensions must be positive")
        if self.attention_layers < 0 or self.lstm_layers < 1 or not self.conv_filters:
            raise InvalidConfigError("need >= 0 attention, >= 1 conv and >= 1 LSTM layers")
        if self.attention_layers and self.d_model % self.heads:
            raise InvalidConfigError(f"heads={self.heads} must divide d_model={self.d_model}")
        if not 0 <= self.dropout < 1:
            raise InvalidConfigError("dropout must lie in [0, 1)")
        if self.kernel % 2 == 0:
            raise InvalidConfigError("kernel size must be odd")

    @property
    def d_model(self) -> int:
        return self.range_bins * self.doppler_bins * self.n_rx

    @property
    def grid(self) -> tuple[int, int]:
        return self.range_bins, self.doppler_bins * self.n_rx

    @classmethod
    def from_dict(cls, data) -> "ModelConfig":
        return dataclass_from_dict(cls, data)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, forget-gate bias 1."""
    dt = np.dtype(cfg.dtype)
    p: dict[str, np.ndarray] = {}

    def uni(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dt)

    d = cfg.d_model
    if cfg.attention_layers:
        dk = d // cfg.heads
        for l in range(cfg.attention_layers):
            for name in ("wq", "wk", "wv"):
                p[f"att{l}.{name}"] = uni((cfg.heads, d, dk), d)
            p[f"att{l}.wo"] = uni((cfg.heads * dk, d), cfg.heads * dk)
            p[f"att{l}.ln_g"] = np.ones(d, dtype=dt)
            p[f"att{l}.ln_b"] = np.zeros(d, dtype=dt)
    c_in = cfg.n_beams
    for l, f in enumerate(cfg.conv_filters):
        fan = c_in * cfg.kernel**2
        p[f"conv{l}.w"] = uni((f, c_in, cfg.kernel, cfg.kernel), fan)
        p[f"conv{l}.b"] = np.zeros(f, dtype=dt)
        c_in = f
    flat = c_in * cfg.grid[0] * cfg.grid[1]
    p["fc.w"] = uni((flat, cfg.latent_dim), flat)
    p["fc.b"] = np.zeros(cfg.latent_dim, dtype=dt)
    inp = cfg.latent_dim
    hid = cfg.lstm_hidden
    for l in range(cfg.lstm_layers):
        p[f"lstm{l}.wx"] = uni((inp, 4 * hid), hid)
        p[f"lstm{l}.wh"] = uni((hid, 4 * hid), hid)
        b = np.zeros(4 * hid, dtype=dt)
        b[hid:2 * hid] = 1.0
        p[f"lstm{l}.b"] = b
        inp = hid
    p["out.w"] = uni((hid, cfg.n_classes), hid)
    p["out.b"] = np.zeros(cfg.n_classes, dtype=dt)
    return p


class BeamFusionNet:
    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray] | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, np.random.default_rng(seed))

    # -- shapes ------------------------------------------------------------

    def _tokens(self, x: np.ndarray) -> np.ndarray:
        """(n, range, Doppler, beams[, rx], time) -> (n, time, beams, d_model)."""
        cfg = self.cfg
        x = np.asarray(x, dtype=cfg.dtype)
        if x.ndim == 5 and cfg.n_rx == 1:
            x = x[:, :, :, :, None, :]
        if x.ndim != 6:
            raise ShapeError(f"expected (n, range, doppler, beams[, rx], time), got {x.shape}")
        n, r, d, b, rx, t = x.shape
        if (r, d, b, rx) != (cfg.range_bins, cfg.doppler_bins, cfg.n_beams, cfg.n_rx):
            raise ShapeError(f"input {(r, d, b, rx)} does not match model "
                             f"{(cfg.range_bins, cfg.doppler_bins, cfg.n_beams, cfg.n_rx)}")
        return x.transpose(0, 5, 3, 1, 2, 4).reshape(n, t, b, r * d * rx)

    # -- forward / backward ------------------------------------------------

    def forward(self, x, train: bool = False, rng: np.random.Generator | None = None):
        """Logits and the cache needed for :meth:`backward`."""
        cfg, p = self.cfg, self.params
        tok = self._tokens(x)
        n, t, b, d = tok.shape
        h = tok.reshape(n * t, b, d)
        caches = {"shape": (n, t, b, d)}
        for l in range(cfg.attention_layers):
            a, c_att = L.multi_head_forward(h, h, h, p[f"att{l}.wq"], p[f"att{l}.wk"], p[f"att{l}.wv"], p[f"att{l}.wo"])
            h, c_ln = L.layer_norm_forward(h + a, p[f"att{l}.ln_g"], p[f"att{l}.ln_b"])
            caches[f"att{l}"] = (c_att, c_ln)
        z = h.reshape((n * t, b) + cfg.grid).transpose(0, 2, 3, 1)  # channels last
        for l in range(len(cfg.conv_filters)):
            z, c_conv = L.conv2d_forward(z, p[f"conv{l}.w"], p[f"conv{l}.b"])
            z, mask = L.relu_forward(z)
            caches[f"conv{l}"] = (c_conv, mask)
        caches["flat_shape"] = z.shape
        lat, c_fc = L.dense_forward(z.reshape(n * t, -1), p["fc.w"], p["fc.b"])
        lat, m_fc = L.relu_forward(lat)
        lat, m_drop = L.dropout_forward(lat, cfg.dropout, rng if train else None)
        caches["fc"] = (c_fc, m_fc, m_drop)
        seq = lat.reshape(n, t, -1)
        for l in range(cfg.lstm_layers):
            seq, c_lstm = L.lstm_forward(seq, p[f"lstm{l}.wx"], p[f"lstm{l}.wh"], p[f"lstm{l}.b"])
            caches[f"lstm{l}"] = c_lstm
        last = seq[:, -1]
        logits, c_out = L.dense_forward(last, p["out.w"], p["out.b"])
        caches["out"] = c_out
        caches["seq_shape"] = seq.shape
        return logits, caches

    def backward(self, dlogits, caches) -> dict[str, np.ndarray]:
        cfg = self.cfg
        g: dict[str, np.ndarray] = {}
        dlast, g["out.w"], g["out.b"] = L.dense_backward(dlogits, caches["out"])
        dseq = np.zeros(caches["seq_shape"], dtype=dlast.dtype)
        dseq[:, -1] = dlast
        for l in reversed(range(cfg.lstm_layers)):
            dseq, g[f"lstm{l}.wx"], g[f"lstm{l}.wh"], g[f"lstm{l}.b"] = L.lstm_backward(dseq, caches[f"lstm{l}"])
        n, t, b, d = caches["shape"]
        dlat = dseq.reshape(n * t, -1)
        c_fc, m_fc, m_drop = caches["fc"]
        dlat = L.relu_backward(L.dropout_backward(dlat, m_drop), m_fc)
        dflat, g["fc.w"], g["fc.b"] = L.dense_backward(dlat, c_fc)
        dz = dflat.reshape(caches["flat_shape"])
        for l in reversed(range(len(cfg.conv_filters))):
            c_conv, mask = caches[f"conv{l}"]
            dz, g[f"conv{l}.w"], g[f"conv{l}.b"] = L.conv2d_backward(L.relu_backward(dz, mask), c_conv)
        dh = dz.transpose(0, 3, 1, 2).reshape(n * t, b, d)
        for l in reversed(range(cfg.attention_layers)):
            c_att, c_ln = caches[f"att{l}"]
            ds, g[f"att{l}.ln_g"], g[f"att{l}.ln_b"] = L.layer_norm_backward(dh, c_ln)
            dq, dk, dv, g[f"att{l}.wq"], g[f"att{l}.wk"], g[f"att{l}.wv"], g[f"att{l}.wo"] = \
                L.multi_head_backward(ds, c_att)
            dh = ds + dq + dk + dv
        return g

    def loss_and_grads(self, x, labels, train: bool = True, rng: np.random.Generator | None = None):
        logits, caches = self.forward(x, train=train, rng=rng)
        loss, probs, dlogits = L.cross_entropy(logits, np.asarray(labels))
        return loss, self.backward(dlogits, caches), probs

    def predict_proba(self, x, batch_size: int = 64) -> np.ndarray:
        """Class probabilities in eval mode (no dropout)."""
        x = np.asarray(x)
        out = []
        for s in range(0, x.shape[0], batch_size):
            logits, _ = self.forward(x[s:s + batch_size], train=False)
            out.append(L.softmax(logits))
        if not out:
            return np.zeros((0, self.cfg.n_classes))
        return np.concatenate(out)

    def predict(self, x, batch_size: int = 64) -> np.ndarray:
        return self.predict_proba(x, batch_size).argmax(axis=1)

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))


def forward(seq: RdmSequence | np.ndarray, model: BeamFusionNet, train_mode: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Class-probability vector for one RDM sequence."""
    x = seq.tensor if isinstance(seq, RdmSequence) else np.asarray(seq)
    logits, _ = model.forward(np.abs(x)[None], train=train_mode, rng=rng)
    return L.softmax(logits)[0]
