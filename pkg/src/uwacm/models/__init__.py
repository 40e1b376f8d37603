"""Model presets and a single fit entry point shared by the CLI and experiments."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidArgument
from .dense import DenseNet
from .forest import ForestHyper, ForestParams, rf_fit
from .knn import K_CANDIDATES, NeighborStore, knn_fit, select_k
from .linear import LinearParams, linreg_fit
from .lstm import LSTMNet
from .training import LossCurve, TrainHyper, train

DEFAULT_RIDGE = 1e-3


@dataclass(frozen=True)
class ModelSpec:
    name: str
    family: str  # dense | lstm | linreg | knn | rf
    hidden: tuple = ()
    options: dict = field(default_factory=dict)

    @property
    def sequence(self):
        return self.family == "lstm"

    def scaled(self, width):
        """Same depth with every hidden layer set to ``width`` units."""
        if not self.hidden:
            return self
        return replace(self, hidden=(int(width),) * len(self.hidden))


PRESETS = {
    "linreg": ModelSpec("linreg", "linreg", options={"ridge": DEFAULT_RIDGE}),
    "knn": ModelSpec("knn", "knn", options={"k": None}),  # None: pick k on validation
    # desk-scale forest: ~4 s per tree on 1,600 frames of 578 samples
    "rf": ModelSpec("rf", "rf", options={"n_trees": 20, "feature_fraction": 0.05}),
    "mlp": ModelSpec("mlp", "dense", (256,)),
    # DNN-4 counts the output layer among its four dense layers; DNN-6 has six hidden ones
    "dnn4": ModelSpec("dnn4", "dense", (256,) * 3),
    "dnn6": ModelSpec("dnn6", "dense", (256,) * 6),
    "lstm2": ModelSpec("lstm2", "lstm", (320,) * 2),
    "lstm6": ModelSpec("lstm6", "lstm", (320,) * 6),
}

_CLASSES = {"linreg": LinearParams, "knn": NeighborStore, "rf": ForestParams,
            "mlp": DenseNet, "dnn4": DenseNet, "dnn6": DenseNet, "dnn": DenseNet,
            "lstm2": LSTMNet, "lstm6": LSTMNet, "lstm": LSTMNet}


def model_names():
    return list(PRESETS)


def get_spec(name, hidden=None, **options):
    try:
        spec = PRESETS[name]
    except KeyError:
        raise InvalidArgument(f"unknown model {name!r}; valid models: {', '.join(PRESETS)}") from None
    if hidden is not None:
        spec = spec.scaled(hidden)
    if options:
        spec = replace(spec, options={**spec.options, **options})
    return spec


def model_class(kind):
    try:
        return _CLASSES[kind]
    except KeyError:
        raise InvalidArgument(f"unknown model kind {kind!r}") from None


def _frames(data):
    """(inputs, labels) from a Dataset or WindowedDataset; frame models see the last frame."""
    if hasattr(data, "Xw"):
        return data.Xw, data.Y
    return data.X, data.Y


def fit_model(spec, train_data, val_data=None, hyper=TrainHyper(), threads=1, score=None,
              on_epoch=None):
    """Fit ``spec`` on (normalised) data.  Returns ``(model, LossCurve)``; the curve
    is empty for models that are not trained by gradient descent."""
    X, Y = _frames(train_data)
    Xv, Yv = _frames(val_data) if val_data is not None else (None, None)
    seq = X.ndim == 3
    if spec.sequence and not seq:
        X = X[:, None, :]
        Xv = Xv[:, None, :] if Xv is not None else None
    if not spec.sequence and seq:
        X = X[:, -1]
        Xv = Xv[:, -1] if Xv is not None else None
    rng = np.random.default_rng(hyper.seed)
    curve = LossCurve()
    if spec.family == "dense":
        model = DenseNet.build(X.shape[1], list(spec.hidden), Y.shape[1], rng, kind=spec.name)
        model, curve = train(model, X, Y, Xv, Yv, hyper, on_epoch)
    elif spec.family == "lstm":
        model = LSTMNet.build(X.shape[2], list(spec.hidden), Y.shape[1], rng, kind=spec.name,
                              init_range=spec.options.get("init_range"))
        model, curve = train(model, X, Y, Xv, Yv, hyper, on_epoch)
    elif spec.family == "linreg":
        model = linreg_fit(X, Y, spec.options.get("ridge", DEFAULT_RIDGE),
                           spec.options.get("method", "normal"))
    elif spec.family == "knn":
        k = spec.options.get("k")
        if k is None:
            if Xv is None or not len(Xv):
                raise InvalidArgument("k-NN needs a validation split to choose k")
            model, _ = select_k(X, Y, Xv, Yv, score or _mse,
                                spec.options.get("candidates", K_CANDIDATES))
        else:
            model = knn_fit(X, Y, int(k))
    elif spec.family == "rf":
        opts = {k: v for k, v in spec.options.items() if k in ForestHyper.__dataclass_fields__}
        opts.setdefault("seed", hyper.seed)
        model = rf_fit(X, Y, ForestHyper(**opts), threads=threads)
    else:
        raise InvalidArgument(f"unknown model family {spec.family!r}")
    return model, curve


def _mse(A, F):
    return float(np.mean((np.asarray(A) - np.asarray(F)) ** 2))


__all__ = ["DEFAULT_RIDGE", "ModelSpec", "PRESETS", "fit_model", "get_spec", "model_class",
           "model_names", "TrainHyper", "LossCurve"]
