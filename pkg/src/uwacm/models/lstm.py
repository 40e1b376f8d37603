"""Stacked LSTM regressor with a linear dense head.

Cell update, with ``z = [h_{t-1}, x_t]``::

    f = sigmoid(W_f z + b_f)     i = sigmoid(W_i z + b_i)
    o = sigmoid(W_o z + b_o)     g = tanh(W_c z + b_c)
    c_t = f * c_{t-1} + i * g    h_t = o * tanh(c_t)

Each gate has its own weight matrix.  Layers unroll over the window from zero
state; only the top layer's final hidden state feeds the head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument
from .dense import DenseLayerParams, glorot_uniform

GATES = ("f", "i", "o", "c")
# classic fixed init range; tuned for layers of ~1000 units
INIT_RANGE = 0.08
# default: U(-a, a) with a = INIT_GAIN * sqrt(3 / (hidden + input)), so every
# gate pre-activation has std ~ INIT_GAIN times the input rms whatever the width
INIT_GAIN = 5.0


@dataclass
class LSTMLayerParams:
    W_f: np.ndarray  # (hidden, hidden + input), columns ordered [h, x]
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    @property
    def hidden(self):
        return self.W_f.shape[0]

    @property
    def n_in(self):
        return self.W_f.shape[1] - self.hidden

    def stacked(self):
        W = np.concatenate([self.W_f, self.W_i, self.W_o, self.W_c])
        b = np.concatenate([self.b_f, self.b_i, self.b_o, self.b_c])
        return W, b

    @classmethod
    def init(cls, n_in, hidden, rng, forget_bias=1.0, init_range=None):
        """Uniform gate weights, forget bias ``forget_bias``, other biases 0.

        ``init_range=None`` uses the fan-in scaled range (see ``INIT_GAIN``);
        a number gives a fixed range, e.g. ``INIT_RANGE``.
        """
        a = INIT_GAIN * np.sqrt(3.0 / (hidden + n_in)) if init_range is None else float(init_range)

        def w():
            return rng.uniform(-a, a, size=(hidden, hidden + n_in))
        W_f, W_i, W_o, W_c = w(), w(), w(), w()
        return cls(W_f, W_i, W_o, W_c, np.full(hidden, float(forget_bias)),
                   np.zeros(hidden), np.zeros(hidden), np.zeros(hidden))


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def lstm_cell(params, x_t, h_prev, c_prev):
    """One time step; returns ``(h_t, c_t)``."""
    x_t, h_prev, c_prev = (np.asarray(a, dtype=float) for a in (x_t, h_prev, c_prev))
    H = params.hidden
    if x_t.shape[-1] != params.n_in or h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise InvalidArgument(
            f"cell expects input {params.n_in} and state {H}, got "
            f"{x_t.shape[-1]}, {h_prev.shape[-1]}, {c_prev.shape[-1]}"
        )
    W, b = params.stacked()
    z = np.concatenate([h_prev, x_t], axis=-1) @ W.T + b
    f = sigmoid(z[..., :H])
    i = sigmoid(z[..., H:2 * H])
    o = sigmoid(z[..., 2 * H:3 * H])
    g = np.tanh(z[..., 3 * H:])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def _layer_forward(params, X):
    """Unroll one layer over ``X`` (B, T, I); returns hidden states (B, T, H) and cache."""
    B, T, _ = X.shape
    H = params.hidden
    W, b = params.stacked()
    Wh, Wx = W[:, :H], W[:, H:]
    zx = X @ Wx.T + b  # input projection for all steps at once
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    steps = []
    for t in range(T):
        z = zx[:, t] + h @ Wh.T
        f = sigmoid(z[:, :H])
        i = sigmoid(z[:, H:2 * H])
        o = sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        steps.append((f, i, o, g, c_prev, h_prev, tc))
    return hs, (X, Wh, Wx, steps)


def _layer_backward(cache, d_hs, need_dx=True):
    """BPTT through one layer given dL/dh_t for every step (B, T, H)."""
    X, Wh, Wx, steps = cache
    B, T, H = d_hs.shape
    dz_all = np.empty((B, T, 4 * H))
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        f, i, o, g, c_prev, h_prev, tc = steps[t]
        dh = d_hs[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dz_all[:, t]
        dz[:, :H] = dc * c_prev * f * (1.0 - f)
        dz[:, H:2 * H] = dc * g * i * (1.0 - i)
        dz[:, 2 * H:3 * H] = do * o * (1.0 - o)
        dz[:, 3 * H:] = dc * i * (1.0 - g * g)
        dWh += dz.T @ h_prev
        dh_next = dz @ Wh
        dc_next = dc * f
    flat = dz_all.reshape(B * T, 4 * H)
    dWx = flat.T @ X.reshape(B * T, -1)
    db = flat.sum(axis=0)
    dX = dz_all @ Wx if need_dx else None
    dW = np.concatenate([dWh, dWx], axis=1)
    return dW, db, dX


class LSTMNet:
    """Window-to-frame sequence regressor."""

    sequence = True

    def __init__(self, layers, head, kind="lstm"):
        self.layers = layers
        self.head = head
        self.kind = kind

    @classmethod
    def build(cls, n_in, hidden, n_out, rng, kind="lstm", forget_bias=1.0, init_range=None):
        layers = []
        size = n_in
        for h in hidden:
            layers.append(LSTMLayerParams.init(size, h, rng, forget_bias, init_range))
            size = h
        head = DenseLayerParams(glorot_uniform(rng, n_out, size), np.zeros(n_out), None)
        return cls(layers, head, kind)

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_out(self):
        return self.head.W.shape[0]

    def params(self):
        out = {}
        for k, layer in enumerate(self.layers):
            for gate in GATES:
                out[f"lstm{k}.W_{gate}"] = getattr(layer, f"W_{gate}")
                out[f"lstm{k}.b_{gate}"] = getattr(layer, f"b_{gate}")
        out["head.W"] = self.head.W
        out["head.b"] = self.head.b
        return out

    arrays = params

    def forward(self, Xw):
        Xw = np.asarray(Xw, dtype=float)
        if Xw.ndim != 3:
            raise InvalidArgument(f"LSTM input must be (batch, window, features), got {Xw.shape}")
        if Xw.shape[1] == 0:
            raise InvalidArgument("window length must be at least 1")
        if Xw.shape[2] != self.n_in:
            raise InvalidArgument(f"LSTM expects {self.n_in} features, got {Xw.shape[2]}")
        caches = []
        a = Xw
        for layer in self.layers:
            a, cache = _layer_forward(layer, a)
            caches.append(cache)
        last = a[:, -1]
        return last @ self.head.W.T + self.head.b, (caches, last, a.shape)

    def backward(self, cache, d_out):
        caches, last, shape = cache
        grads = {"head.W": d_out.T @ last, "head.b": d_out.sum(axis=0)}
        d_hs = np.zeros(shape)
        d_hs[:, -1] = d_out @ self.head.W
        for k in range(len(self.layers) - 1, -1, -1):
            dW, db, d_hs = _layer_backward(caches[k], d_hs, need_dx=k > 0)
            H = self.layers[k].hidden
            for j, gate in enumerate(GATES):
                grads[f"lstm{k}.W_{gate}"] = dW[j * H:(j + 1) * H]
                grads[f"lstm{k}.b_{gate}"] = db[j * H:(j + 1) * H]
        return grads

    def predict(self, Xw, batch=2048):
        Xw = np.asarray(Xw, dtype=float)
        if Xw.ndim == 2:
            Xw = Xw[:, None, :]
        if not len(Xw):
            return np.zeros((0, self.n_out))
        return np.concatenate([self.forward(Xw[i:i + batch])[0] for i in range(0, len(Xw), batch)])

    def config(self):
        return {"kind": self.kind, "n_in": self.n_in,
                "hidden": [l.hidden for l in self.layers], "n_out": self.n_out}

    @classmethod
    def from_arrays(cls, config, arrays):
        layers = []
        for k in range(len(config["hidden"])):
            kw = {}
            for gate in GATES:
                kw[f"W_{gate}"] = arrays[f"lstm{k}.W_{gate}"]
                kw[f"b_{gate}"] = arrays[f"lstm{k}.b_{gate}"]
            layers.append(LSTMLayerParams(**kw))
        head = DenseLayerParams(arrays["head.W"], arrays["head.b"], None)
        return cls(layers, head, config["kind"])
