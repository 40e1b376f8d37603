"""Figure export: a CSV of the plotted numbers plus a self-contained SVG.

The SVG is written by hand (polylines, axes, labels); there is no plotting
dependency.
"""

from __future__ import annotations

import csv
import io
import os
from xml.sax.saxutils import escape

import numpy as np

from .dataset import atomic_write
from .errors import InvalidArgument

KINDS = ("loss_curve", "triptych")
_W, _H = 720, 420
_PAD_L, _PAD_R, _PAD_T, _PAD_B = 64, 16, 28, 40
_COLORS = ("#1f77b4", "#d62728", "#2ca02c")


def _series(kind, data):
    """Normalise ``data`` into ``[(label, values), ...]``."""
    if kind == "loss_curve":
        if hasattr(data, "train_loss"):
            train, val = data.train_loss, data.val_loss
        elif isinstance(data, dict):
            train, val = data.get("train", []), data.get("val", [])
        else:
            train, val = data, []
        out = [("train", np.asarray(train, dtype=float))]
        val = np.asarray(val, dtype=float)
        if val.size and not np.all(np.isnan(val)):
            if val.shape != out[0][1].shape:
                raise InvalidArgument("train and validation curves differ in length")
            out.append(("val", val))
        return out
    if kind == "triptych":
        if isinstance(data, dict):
            keys = ("transmitted", "truth", "predicted")
            missing = [k for k in keys if k not in data]
            if missing:
                raise InvalidArgument(f"triptych data lacks {', '.join(missing)}")
            values = [data[k] for k in keys]
        else:
            values = list(data)
            keys = ("transmitted", "truth", "predicted")
            if len(values) != 3:
                raise InvalidArgument(f"triptych needs three traces, got {len(values)}")
        return [(k, np.asarray(v, dtype=float).ravel()) for k, v in zip(keys, values)]
    raise InvalidArgument(f"unknown plot kind {kind!r}; valid kinds: {', '.join(KINDS)}")


def _check(series):
    for label, v in series:
        if v.size == 0:
            raise InvalidArgument(f"{label} trace is empty")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument(f"{label} trace contains non-finite values")


def _csv(kind, series):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    index = "epoch" if kind == "loss_curve" else "sample"
    w.writerow([index] + [label for label, _ in series])
    n = max(len(v) for _, v in series)
    start = 1 if kind == "loss_curve" else 0
    for i in range(n):
        w.writerow([i + start] + [repr(float(v[i])) if i < len(v) else "" for _, v in series])
    return buf.getvalue()


def _points(values, x0, y0, w, h, lo, hi):
    n = len(values)
    xs = x0 + (np.arange(n) / max(n - 1, 1)) * w
    span = hi - lo if hi > lo else 1.0
    ys = y0 + h - (values - lo) / span * h
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def _panel(parts, series, x0, y0, w, h, title, log=False):
    vals = [np.log10(np.maximum(v, 1e-300)) if log else v for _, v in series]
    lo = min(float(v.min()) for v in vals)
    hi = max(float(v.max()) for v in vals)
    parts.append(f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#888"/>')
    parts.append(f'<text x="{x0}" y="{y0 - 6}" font-size="12">{escape(title)}</text>')
    top = f"1e{hi:.2g}" if log else f"{hi:.4g}"
    bottom = f"1e{lo:.2g}" if log else f"{lo:.4g}"
    parts.append(f'<text x="{x0 - 4}" y="{y0 + 10}" font-size="10" text-anchor="end">{top}</text>')
    parts.append(f'<text x="{x0 - 4}" y="{y0 + h}" font-size="10" text-anchor="end">{bottom}</text>')
    for k, ((label, _), v) in enumerate(zip(series, vals)):
        color = _COLORS[k % len(_COLORS)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" '
                     f'points="{_points(v, x0, y0, w, h, lo, hi)}"><title>{escape(label)}</title></polyline>')


def _svg(kind, series):
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
             f'viewBox="0 0 {_W} {_H}">',
             f'<rect width="{_W}" height="{_H}" fill="white"/>']
    w = _W - _PAD_L - _PAD_R
    if kind == "loss_curve":
        h = _H - _PAD_T - _PAD_B
        _panel(parts, series, _PAD_L, _PAD_T, w, h, "MSE loss per epoch (log scale)", log=True)
        for k, (label, _) in enumerate(series):
            parts.append(f'<text x="{_PAD_L + 10 + 80 * k}" y="{_H - 12}" font-size="12" '
                         f'fill="{_COLORS[k]}">{escape(label)}</text>')
        parts.append(f'<text x="{_PAD_L + w}" y="{_H - 12}" font-size="12" text-anchor="end">epoch</text>')
    else:
        gap = 28
        h = (_H - _PAD_T - _PAD_B - 2 * gap) / 3
        for k, s in enumerate(series):
            y0 = _PAD_T + k * (h + gap)
            sub = []
            _panel(sub, [s], _PAD_L, y0, w, h, s[0])
            parts.extend(p.replace(_COLORS[0], _COLORS[k]) for p in sub)
        parts.append(f'<text x="{_PAD_L + w}" y="{_H - 12}" font-size="12" text-anchor="end">sample</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_plot(kind, data, path):
    """Write ``<stem>.csv`` and ``<stem>.svg``; returns both paths.

    ``path`` may carry either extension or none.  An unwritable location raises
    the underlying ``OSError``.
    """
    series = _series(kind, data)
    _check(series)
    stem, ext = os.path.splitext(os.fspath(path))
    if ext.lower() not in (".csv", ".svg"):
        stem = os.fspath(path)
    csv_path, svg_path = stem + ".csv", stem + ".svg"
    atomic_write(csv_path, _csv(kind, series), mode="w")
    atomic_write(svg_path, _svg(kind, series), mode="w")
    return csv_path, svg_path
