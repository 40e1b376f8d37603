"""Multi-output ridge regression, frame to frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import InvalidArgument, NumericError

# Cholesky pivots below this fraction of the largest count as singular
_PIVOT_RTOL = 1e-7


@dataclass
class LinearParams:
    W: np.ndarray  # (n_out, n_in)
    b: np.ndarray  # (n_out,)
    ridge: float = 0.0

    kind = "linreg"
    sequence = False

    @property
    def n_in(self):
        return self.W.shape[1]

    def predict(self, X):
        return linreg_predict(self, X)

    def config(self):
        return {"kind": self.kind, "ridge": self.ridge}

    def arrays(self):
        return {"W": self.W, "b": self.b}

    @classmethod
    def from_arrays(cls, config, arrays):
        return cls(arrays["W"], arrays["b"], config["ridge"])


def linreg_fit(X, Y, ridge=0.0, method="normal"):
    """Minimise ``||X W^T + b - Y||^2 + ridge * ||W||^2`` (intercept unpenalised).

    ``method="normal"`` solves the centred normal equations by Cholesky and
    refuses a singular system.  ``method="lstsq"`` works from the SVD of the
    centred design and returns the minimum-norm solution, which stays exact
    on rank-deficient inputs.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if ridge < 0:
        raise InvalidArgument("ridge must be non-negative")
    if len(X) != len(Y) or len(X) == 0:
        raise InvalidArgument(f"need matching non-empty X and Y, got {len(X)} and {len(Y)}")
    if ridge == 0 and method == "normal" and X.shape[0] < X.shape[1]:
        raise InvalidArgument(
            f"{X.shape[0]} frames < {X.shape[1]} features: use ridge > 0"
        )
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xc = X - x_mean
    Yc = Y - y_mean
    if method == "normal":
        G = Xc.T @ Xc
        G[np.diag_indices_from(G)] += ridge
        try:
            factor = scipy.linalg.cho_factor(G, lower=True)
        except np.linalg.LinAlgError:
            raise NumericError("singular normal equations; use ridge > 0") from None
        piv = np.abs(np.diag(factor[0]))
        if piv.min() <= _PIVOT_RTOL * piv.max():
            raise NumericError("ill-conditioned normal equations; use ridge > 0")
        W = scipy.linalg.cho_solve(factor, Xc.T @ Yc).T
    elif method == "lstsq":
        U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
        if ridge == 0:
            keep = s > s[0] * max(Xc.shape) * np.finfo(float).eps if s.size else s > 0
            inv = np.zeros_like(s)
            inv[keep] = 1.0 / s[keep]
        else:
            inv = s / (s * s + ridge)
        W = ((Vt.T * inv) @ (U.T @ Yc)).T
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    if not np.all(np.isfinite(W)):
        raise NumericError("non-finite regression weights; use ridge > 0")
    return LinearParams(W, y_mean - W @ x_mean, float(ridge))


def linreg_predict(params, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 3:
        X = X[:, -1, :]
    if X.shape[-1] != params.W.shape[1]:
        raise InvalidArgument(f"expected {params.W.shape[1]} features, got {X.shape[-1]}")
    return X @ params.W.T + params.b
