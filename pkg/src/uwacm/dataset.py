"""Paired transmit/receive frame datasets.

Rows of ``X`` are transmitted frames, rows of ``Y`` the frames received over
the same sample interval.  Sequence models consume a :class:`WindowedDataset`
whose label is the received frame aligned with the *last* frame of the window.

Binary layout (little-endian)::

    "UWAC" | u32 version=1 | u64 N_X | u32 N_S | u8 dtype (1 = float64)
    X row-major | Y row-major | u64 checksum (sum of payload bytes mod 2**64)
"""

from __future__ import annotations

import csv
import math
import os
import struct
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel as chan_mod
from . import signal_chain as sc
from .errors import FormatError, InvalidArgument

MAGIC = b"UWAC"
VERSION = 1
DTYPE_F64 = 1
_HEADER = struct.Struct("<4sIQIB")
_CHECKSUM = struct.Struct("<Q")

# symbols per repeated message block; see generate_dataset
MESSAGE_SYMBOLS = 17


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape != self.Y.shape:
            raise InvalidArgument(f"X {self.X.shape} and Y {self.Y.shape} must be equal 2-D shapes")
        if self.X.shape[1] == 0:
            raise InvalidArgument("frame length must be positive")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise InvalidArgument("dataset contains non-finite values")

    @property
    def n_frames(self):
        return self.X.shape[0]

    @property
    def n_s(self):
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]


@dataclass(frozen=True)
class WindowedDataset:
    Xw: np.ndarray  # (N_X - N_T + 1, N_T, N_S), a strided view of the source X
    Y: np.ndarray
    window: int
    meta: dict = field(default_factory=dict)

    @property
    def n_s(self):
        return self.Xw.shape[2]

    @property
    def last(self):
        """Frame-model view: the last frame of each window."""
        return self.Xw[:, -1, :]

    def __len__(self):
        return self.Xw.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 0

    def validate(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(not 0.0 < f < 1.0 for f in fracs):
            raise InvalidArgument(f"split fractions must lie in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise InvalidArgument(f"split fractions must sum to 1, got {sum(fracs)}")
        return self


@dataclass(frozen=True)
class NormStats:
    x_mean: float
    x_scale: float
    y_mean: float
    y_scale: float

    def as_dict(self):
        return {"x_mean": self.x_mean, "x_scale": self.x_scale,
                "y_mean": self.y_mean, "y_scale": self.y_scale}


def build_dataset(tx_frames, rx_frames, meta=None):
    tx = np.ascontiguousarray(tx_frames, dtype=np.float64)
    rx = np.ascontiguousarray(rx_frames, dtype=np.float64)
    if tx.shape != rx.shape:
        raise InvalidArgument(f"transmit frames {tx.shape} and receive frames {rx.shape} differ")
    return Dataset(tx, rx, dict(meta or {}))


def generate_dataset(scenario="tank-clean", n_frames=2000, seed=0, n_s=sc.FRAME_SAMPLES,
                     message_symbols=MESSAGE_SYMBOLS, channel_config=None,
                     rolloff=sc.ROLLOFF, span=sc.SPAN):
    """Synthesize a dataset for one channel scenario.

    The transmitter sends a seeded random block of ``message_symbols`` QPSK
    symbols cyclically.  Shaping is circular in effect: recording starts once
    the filter is in steady state, so the transmit waveform is exactly
    periodic.  A lead-in of ``max_delay`` samples is propagated and then
    dropped so that delayed paths see prior transmission from frame 0 on.
    """
    if n_frames < 1:
        raise InvalidArgument(f"n_frames must be positive, got {n_frames}")
    if message_symbols < 1:
        raise InvalidArgument("message_symbols must be positive")
    bits_seq, chan_seq = np.random.SeedSequence(seed).spawn(2)
    bits_seed = int(np.random.default_rng(bits_seq).integers(2**63))
    chan_seed = int(np.random.default_rng(chan_seq).integers(2**63))
    if channel_config is None:
        cfg = chan_mod.preset(scenario, seed=chan_seed)
    else:
        cfg = replace(channel_config, seed=chan_seed if channel_config.seed is None else channel_config.seed)
        cfg.validate()

    sps = sc.samples_per_symbol(cfg.sample_rate, sc.SYMBOL_RATE)
    lead = cfg.max_delay
    n_samples = n_frames * n_s
    total = lead + n_samples
    n_sym = -(-total // sps) + 1
    block = sc.qpsk_modulate(sc.generate_bits(2 * message_symbols, bits_seed))
    symbols = np.resize(block, n_sym + span)
    taps = sc.raised_cosine_taps(rolloff, span, sps)
    baseband = sc.pulse_shape(symbols, taps)
    start = span * sps
    tx = sc.upconvert(baseband, cfg.carrier, cfg.sample_rate).samples[start:start + total]

    realization = chan_mod.make_channel(cfg, total)
    rx = chan_mod.propagate(tx, realization)
    meta = {
        "scenario": scenario if channel_config is None else "custom",
        "seed": seed,
        "bits_seed": bits_seed,
        "channel_seed": cfg.seed,
        "noise_seed": realization.noise_seed,
        "preset_version": chan_mod.PRESET_VERSION,
        "n_s": n_s,
        "message_symbols": message_symbols,
        "rolloff": rolloff,
        "span": span,
        "carrier": cfg.carrier,
        "sample_rate": cfg.sample_rate,
        "symbol_rate": sc.SYMBOL_RATE,
    }
    return build_dataset(sc.frame_signal(tx[lead:], n_s), sc.frame_signal(rx[lead:], n_s), meta)


def window_dataset(ds, n_t):
    """Stack ``n_t`` consecutive transmit frames per sample.

    Sample i covers X rows ``[i, i + n_t)`` and is labelled with Y row
    ``i + n_t - 1``.  ``Xw`` is a read-only strided view of ``ds.X``.
    """
    if not 1 <= n_t <= ds.n_frames:
        raise InvalidArgument(f"window must lie in [1, {ds.n_frames}], got {n_t}")
    xw = np.lib.stride_tricks.sliding_window_view(ds.X, (n_t, ds.n_s))[:, 0]
    return WindowedDataset(xw, ds.Y[n_t - 1:], n_t, dict(ds.meta, window=n_t))


def split_sizes(n, spec):
    spec.validate()
    n_val = math.floor(spec.val_frac * n)
    n_test = math.floor(spec.test_frac * n)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise InvalidArgument(f"split of {n} rows by {spec} leaves an empty part")
    return n_train, n_val, n_test


def split(ds, spec=SplitSpec()):
    """Contiguous train/val/test split in time order."""
    n_train, n_val, _ = split_sizes(len(ds), spec)
    cuts = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, len(ds))]
    if isinstance(ds, WindowedDataset):
        return tuple(replace(ds, Xw=ds.Xw[a:b], Y=ds.Y[a:b]) for a, b in cuts)
    return tuple(Dataset(ds.X[a:b], ds.Y[a:b], dict(ds.meta, part=name))
                 for (a, b), name in zip(cuts, ("train", "val", "test")))


def _affine(values):
    mean = float(np.mean(values))
    std = float(np.std(values))
    if std == 0.0:
        warnings.warn("zero variance; scaling by 1", RuntimeWarning, stacklevel=3)
        std = 1.0
    return mean, std


def fit_normalization(train):
    if len(train) == 0:
        raise InvalidArgument("cannot normalize an empty dataset")
    xm, xs = _affine(train.X)
    ym, ys = _affine(train.Y)
    return NormStats(xm, xs, ym, ys)


def normalize(ds, stats=None):
    """Global scalar affine scaling of X and Y.

    Statistics come from ``ds`` itself unless ``stats`` (typically fitted on
    the training split) is given.  Returns ``(normalized, stats)``.
    """
    if stats is None:
        stats = fit_normalization(ds)
    out = Dataset((ds.X - stats.x_mean) / stats.x_scale,
                  (ds.Y - stats.y_mean) / stats.y_scale,
                  dict(ds.meta, normalization=stats.as_dict()))
    return out, stats


def denormalize(frames, stats, which="y"):
    if which == "y":
        return np.asarray(frames) * stats.y_scale + stats.y_mean
    return np.asarray(frames) * stats.x_scale + stats.x_mean


def _checksum(buf):
    return int(np.frombuffer(buf, dtype=np.uint8).sum(dtype=np.uint64))


def to_bytes(ds):
    payload = (np.ascontiguousarray(ds.X, dtype="<f8").tobytes()
               + np.ascontiguousarray(ds.Y, dtype="<f8").tobytes())
    header = _HEADER.pack(MAGIC, VERSION, ds.n_frames, ds.n_s, DTYPE_F64)
    return header + payload + _CHECKSUM.pack(_checksum(payload))


def from_bytes(buf, meta=None):
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header: expected {_HEADER.size} bytes, got {len(buf)}", 0)
    magic, version, n_x, n_s, dtype = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if dtype != DTYPE_F64:
        raise FormatError(f"unsupported dtype code {dtype}", 20)
    payload_len = 2 * n_x * n_s * 8
    expected = _HEADER.size + payload_len + _CHECKSUM.size
    if len(buf) != expected:
        raise FormatError(f"truncated or oversized file: expected {expected} bytes, got {len(buf)}",
                          min(len(buf), expected))
    payload = buf[_HEADER.size:_HEADER.size + payload_len]
    (stored,) = _CHECKSUM.unpack_from(buf, _HEADER.size + payload_len)
    if stored != _checksum(payload):
        raise FormatError("checksum mismatch", _HEADER.size + payload_len)
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    X = arr[: n_x * n_s].reshape(n_x, n_s)
    Y = arr[n_x * n_s:].reshape(n_x, n_s)
    return Dataset(X, Y, dict(meta or {}))


def atomic_write(path, data, mode="wb"):
    """Write to a temporary sibling then rename into place."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def save(ds, path):
    atomic_write(path, to_bytes(ds))


def load(path, meta=None):
    with open(path, "rb") as fh:
        return from_bytes(fh.read(), meta)


def export_csv(frames, path):
    frames = np.atleast_2d(np.asarray(frames))
    lines = [",".join(f"s{i}" for i in range(frames.shape[1]))]
    lines += [",".join(repr(float(v)) for v in row) for row in frames]
    atomic_write(path, "\n".join(lines) + "\n", mode="w")


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r] for r in rows[1:]])
