"""k-nearest-neighbour regression on whole frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument

K_CANDIDATES = (1, 3, 5, 9)
# extra candidates re-ranked with exact distances after the fast pass
_MARGIN = 64


@dataclass
class NeighborStore:
    X: np.ndarray
    Y: np.ndarray
    k: int

    kind = "knn"
    sequence = False

    @property
    def n_in(self):
        return self.X.shape[1]

    def __post_init__(self):
        if len(self.X) == 0:
            raise InvalidArgument("neighbour store is empty")
        if not 1 <= self.k <= len(self.X):
            raise InvalidArgument(f"k must lie in [1, {len(self.X)}], got {self.k}")

    def predict(self, X):
        return knn_predict(self, X)

    def config(self):
        return {"kind": self.kind, "k": self.k}

    def arrays(self):
        return {"X": self.X, "Y": self.Y}

    @classmethod
    def from_arrays(cls, config, arrays):
        return cls(arrays["X"], arrays["Y"], int(config["k"]))


def knn_fit(X, Y, k):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 3:
        X = X[:, -1, :]
    if len(X) != len(Y):
        raise InvalidArgument("X and Y must have the same number of rows")
    return NeighborStore(np.ascontiguousarray(X), np.ascontiguousarray(Y), int(k))


def neighbors(store, Q, k=None, chunk=256):
    """Indices of the ``k`` nearest stored rows for every query row.

    Euclidean distance; equal distances resolve to the lower stored index.  A
    fast Gram-expansion pass shortlists candidates, which are then ranked by
    exactly computed squared distances.
    """
    k = store.k if k is None else k
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 3:
        Q = Q[:, -1, :]
    if Q.shape[-1] != store.X.shape[1]:
        raise InvalidArgument(f"expected {store.X.shape[1]} features, got {Q.shape[-1]}")
    n = len(store.X)
    m = min(n, k + _MARGIN)
    sq = np.einsum("ij,ij->i", store.X, store.X)
    out = np.empty((len(Q), k), dtype=np.int64)
    for a in range(0, len(Q), chunk):
        q = Q[a:a + chunk]
        approx = sq[None, :] - 2.0 * (q @ store.X.T)
        if m < n:
            # keep everything within rounding of the m-th value so exact ties survive
            kth = np.partition(approx, m - 1, axis=1)[:, m - 1]
            tol = 1e-9 * (sq.max() + np.einsum("ij,ij->i", q, q))
        for j in range(len(q)):
            c = np.flatnonzero(approx[j] <= kth[j] + tol[j]) if m < n else np.arange(n)
            diff = store.X[c] - q[j]
            exact = np.einsum("ij,ij->i", diff, diff)
            order = np.lexsort((c, exact))[:k]
            out[a + j] = c[order]
    return out


def knn_predict(store, X):
    idx = neighbors(store, X)
    return store.Y[idx].mean(axis=1)


def select_k(X, Y, X_val, Y_val, score, candidates=K_CANDIDATES):
    """Fit once per candidate k and keep the one with the lowest validation score."""
    best = None
    results = {}
    for k in candidates:
        if k > len(X):
            continue
        store = knn_fit(X, Y, k)
        results[k] = score(Y_val, knn_predict(store, X_val))
        if best is None or results[k] < results[best.k]:
            best = store
    if best is None:
        raise InvalidArgument("no candidate k fits the training set")
    return best, results
