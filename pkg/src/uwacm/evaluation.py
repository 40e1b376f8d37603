"""Scoring: floored MAPE, MSE and per-model reports."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

import numpy as np

from .dataset import atomic_write, denormalize
from .errors import InvalidArgument, NumericError

# default MAPE floor as a fraction of RMS(A)
EPS_FRACTION = 1e-3
REPORT_COLUMNS = ("model", "scenario", "n", "mape_percent", "mse", "epsilon", "seed")


def _pair(A, F):
    A = np.asarray(A, dtype=float)
    F = np.asarray(F, dtype=float)
    if A.shape != F.shape:
        raise InvalidArgument(f"shape mismatch: actual {A.shape} vs predicted {F.shape}")
    if A.size == 0:
        raise InvalidArgument("empty input")
    return A, F


def default_epsilon(A):
    A = np.abs(np.asarray(A, dtype=float))
    top = float(A.max()) if A.size else 0.0
    if top == 0.0 or not np.isfinite(top):
        return EPS_FRACTION * top
    # scale first so that squaring tiny values cannot underflow to a zero floor
    return EPS_FRACTION * top * float(np.sqrt(np.mean((A / top) ** 2)))


def mape(A, F, eps=None):
    """Mean of ``|A - F| / max(|A|, eps)`` over all elements, in percent.

    ``eps`` defaults to ``1e-3 * RMS(A)``; with ``eps=0`` any zero in ``A``
    is an error.
    """
    A, F = _pair(A, F)
    if eps is None:
        eps = default_epsilon(A)
    if eps < 0:
        raise InvalidArgument("eps must be non-negative")
    denom = np.maximum(np.abs(A), eps)
    if np.any(denom == 0):
        raise NumericError("MAPE undefined: actual value 0 with eps = 0")
    return 100.0 * float(np.mean(np.abs(A - F) / denom))


def mse(A, F):
    A, F = _pair(A, F)
    d = A - F
    return float(np.mean(d * d))


@dataclass(frozen=True)
class EvalReport:
    model: str
    scenario: str
    mape_percent: float
    mse: float
    n_samples: int
    seed: int | None
    epsilon: float
    timestamp: str = ""
    n_features: int = 0

    def row(self):
        return {"model": self.model, "scenario": self.scenario, "n": self.n_samples,
                "mape_percent": repr(self.mape_percent), "mse": repr(self.mse),
                "epsilon": repr(self.epsilon), "seed": "" if self.seed is None else self.seed}

    def as_dict(self):
        return asdict(self)


def predict_frames(model, data):
    """Model output for a Dataset or WindowedDataset, in the model's own (normalised) units."""
    X = data.Xw if hasattr(data, "Xw") else data.X
    if model.sequence and X.ndim == 2:
        X = X[:, None, :]
    elif not model.sequence and X.ndim == 3:
        X = X[:, -1, :]
    if X.shape[-1] != model.n_in:
        raise InvalidArgument(f"model expects {model.n_in} samples per frame, data has {X.shape[-1]}")
    return model.predict(X)


def evaluate(model, test, stats=None, name=None, scenario=None, seed=None, eps=None,
             timestamp=None):
    """Score ``model`` on ``test``; predictions and labels are denormalised with
    ``stats`` (if given) before scoring."""
    F = predict_frames(model, test)
    A = test.Y
    if stats is not None:
        F = denormalize(F, stats)
        A = denormalize(A, stats)
    if eps is None:
        eps = default_epsilon(A)
    meta = getattr(test, "meta", {}) or {}
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return EvalReport(
        model=name or getattr(model, "kind", type(model).__name__),
        scenario=scenario or str(meta.get("scenario", "")),
        mape_percent=mape(A, F, eps),
        mse=mse(A, F),
        n_samples=int(A.shape[0]),
        seed=seed if seed is not None else meta.get("seed"),
        epsilon=float(eps),
        timestamp=timestamp,
        n_features=int(A.shape[1]),
    )


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def write_reports(reports, path):
    atomic_write(path, reports_to_csv(reports), mode="w")


def read_reports(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EvalReport(model=r["model"], scenario=r["scenario"],
                       mape_percent=float(r["mape_percent"]), mse=float(r["mse"]),
                       n_samples=int(r["n"]), seed=int(r["seed"]) if r["seed"] else None,
                       epsilon=float(r["epsilon"]))
            for r in rows]


def rank(reports):
    """Reports sorted by ascending MAPE (stable for ties)."""
    return sorted(reports, key=lambda r: r.mape_percent)


def format_table(reports):
    """Model / data size / MAPE table."""
    lines = [f"{'Model':<10} {'Data size':>14} {'MAPE(%)':>10} {'MSE':>12}"]
    for r in reports:
        size = f"{r.n_samples}x{r.n_features}" if r.n_features else str(r.n_samples)
        lines.append(f"{r.model:<10} {size:>14} {r.mape_percent:>10.3f} {r.mse:>12.5g}")
    return "\n".join(lines)
