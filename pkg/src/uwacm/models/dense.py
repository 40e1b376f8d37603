"""Fully connected regressors (MLP, DNN-4, DNN-6) with exact backprop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument

RELU = "relu"
LINEAR = None


@dataclass
class DenseLayerParams:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str | None = RELU


def glorot_uniform(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_dense(sizes, rng, final_activation=LINEAR):
    """Layers mapping ``sizes[0] -> ... -> sizes[-1]``; ReLU on all but the last."""
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = final_activation if i == len(sizes) - 2 else RELU
        layers.append(DenseLayerParams(glorot_uniform(rng, n_out, n_in), np.zeros(n_out), act))
    return layers


def dense_forward(layers, X):
    """Returns ``(output, cache)``; cache holds each layer's input and pre-activation."""
    a = np.asarray(X, dtype=float)
    cache = []
    for k, layer in enumerate(layers):
        if a.shape[-1] != layer.W.shape[1]:
            raise InvalidArgument(
                f"layer {k} expects {layer.W.shape[1]} inputs, got {a.shape[-1]}"
            )
        z = a @ layer.W.T + layer.b
        cache.append((a, z))
        a = np.maximum(z, 0.0) if layer.activation == RELU else z
    return a, cache


def dense_backward(layers, cache, d_out):
    """Gradients ``[(dW, db), ...]`` and the gradient w.r.t. the network input."""
    grads = [None] * len(layers)
    d = d_out
    for k in range(len(layers) - 1, -1, -1):
        a_in, z = cache[k]
        if layers[k].activation == RELU:
            d = d * (z > 0)
        grads[k] = (d.T @ a_in, d.sum(axis=0))
        d = d @ layers[k].W
    return grads, d


class DenseNet:
    """Frame-to-frame feed-forward network."""

    sequence = False

    def __init__(self, layers, kind="dnn"):
        self.layers = layers
        self.kind = kind

    @classmethod
    def build(cls, n_in, hidden, n_out, rng, kind="dnn"):
        return cls(init_dense([n_in, *hidden, n_out], rng), kind)

    @property
    def n_in(self):
        return self.layers[0].W.shape[1]

    @property
    def n_out(self):
        return self.layers[-1].W.shape[0]

    def params(self):
        out = {}
        for k, layer in enumerate(self.layers):
            out[f"dense{k}.W"] = layer.W
            out[f"dense{k}.b"] = layer.b
        return out

    arrays = params

    def forward(self, X):
        return dense_forward(self.layers, X)

    def backward(self, cache, d_out):
        grads, _ = dense_backward(self.layers, cache, d_out)
        out = {}
        for k, (dW, db) in enumerate(grads):
            out[f"dense{k}.W"] = dW
            out[f"dense{k}.b"] = db
        return out

    def predict(self, X, batch=4096):
        X = np.asarray(X, dtype=float)
        if X.ndim == 3:  # windowed input: frame models only see the last frame
            X = X[:, -1, :]
        return np.concatenate([self.forward(X[i:i + batch])[0]
                               for i in range(0, len(X), batch)]) if len(X) else np.zeros((0, self.n_out))

    def config(self):
        return {"kind": self.kind,
                "sizes": [self.n_in] + [l.W.shape[0] for l in self.layers],
                "activations": [l.activation for l in self.layers]}

    @classmethod
    def from_arrays(cls, config, arrays):
        layers = []
        for k, act in enumerate(config["activations"]):
            layers.append(DenseLayerParams(arrays[f"dense{k}.W"], arrays[f"dense{k}.b"], act))
        return cls(layers, config["kind"])
