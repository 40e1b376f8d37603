"""Transmit-side waveform generation.

bits -> Gray-mapped QPSK -> raised-cosine pulse shaping -> real passband.

Defaults follow the acquisition setup being emulated: 1 MHz sampling,
200 kHz carrier, 2000 symbols/s (500 samples per symbol).  Frames are cut at
an independent length (578 samples by default) that is deliberately not tied
to the symbol period.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps_signal

from .errors import InvalidArgument

SAMPLE_RATE = 1_000_000.0
CARRIER = 200_000.0
SYMBOL_RATE = 2_000.0
FRAME_SAMPLES = 578
ROLLOFF = 0.25
SPAN = 8

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
# index = 2*b0 + b1 for the bit pair (b0, b1)
CONSTELLATION = np.array(
    [
        (1 + 1j) * _INV_SQRT2,  # 00
        (-1 + 1j) * _INV_SQRT2,  # 01
        (1 - 1j) * _INV_SQRT2,  # 10
        (-1 - 1j) * _INV_SQRT2,  # 11
    ]
)


@dataclass(frozen=True)
class BitStream:
    bits: np.ndarray
    seed: int | None = None

    def __len__(self):
        return len(self.bits)


@dataclass(frozen=True)
class FilterTaps:
    taps: np.ndarray
    rolloff: float
    span: int
    sps: int


@dataclass(frozen=True)
class PassbandSignal:
    samples: np.ndarray
    sample_rate: float = SAMPLE_RATE
    carrier: float = CARRIER

    def __len__(self):
        return len(self.samples)


def samples_per_symbol(sample_rate=SAMPLE_RATE, symbol_rate=SYMBOL_RATE):
    sps = sample_rate / symbol_rate
    if sps != int(sps) or sps < 2:
        raise InvalidArgument(
            f"sample_rate/symbol_rate must be an integer >= 2, got {sps}"
        )
    return int(sps)


def generate_bits(n, seed):
    """Draw ``n`` uniform random bits from a seeded generator."""
    if n <= 0 or n % 2:
        raise InvalidArgument(f"bit count must be even and positive, got {n}")
    rng = np.random.default_rng(seed)
    return BitStream(rng.integers(0, 2, size=n, dtype=np.uint8), seed)


def _as_bits(bits):
    arr = bits.bits if isinstance(bits, BitStream) else np.asarray(bits)
    return arr.astype(np.uint8, copy=False)


def qpsk_modulate(bits):
    """Map bit pairs onto unit-energy Gray-coded QPSK symbols.

    ``00 -> (1+j)/sqrt2``, ``01 -> (-1+j)/sqrt2``, ``11 -> (-1-j)/sqrt2``,
    ``10 -> (1-j)/sqrt2``.
    """
    b = _as_bits(bits)
    if len(b) % 2:
        raise InvalidArgument(f"QPSK needs an even number of bits, got {len(b)}")
    if b.size and b.max() > 1:
        raise InvalidArgument("bits must be 0 or 1")
    idx = 2 * b[0::2] + b[1::2]
    return CONSTELLATION[idx]


def qpsk_demodulate(symbols):
    """Hard-decision demapping by quadrant (nearest constellation point)."""
    s = np.asarray(symbols)
    bits = np.empty(2 * len(s), dtype=np.uint8)
    bits[0::2] = s.imag < 0
    bits[1::2] = s.real < 0
    return BitStream(bits)


def raised_cosine_taps(rolloff=ROLLOFF, span=SPAN, sps=500):
    """Sample the raised-cosine impulse response over ``span`` symbols.

    h(t) = sinc(t/T) cos(pi*beta*t/T) / (1 - (2*beta*t/T)^2), peak h(0) = 1.
    The removable singularity at t = +-T/(2*beta) takes its limit
    (pi/4) * sinc(1/(2*beta)).
    """
    if not 0.0 <= rolloff <= 1.0:
        raise InvalidArgument(f"rolloff must lie in [0, 1], got {rolloff}")
    if span < 2 or span % 2:
        raise InvalidArgument(f"span must be an even integer >= 2, got {span}")
    if sps < 2:
        raise InvalidArgument(f"sps must be >= 2, got {sps}")
    n = np.arange(span * sps + 1) - span * sps // 2
    t = n / sps  # in symbol periods
    denom = 1.0 - (2.0 * rolloff * t) ** 2
    singular = np.abs(denom) < 1e-10
    safe = np.where(singular, 1.0, denom)
    h = np.sinc(t) * np.cos(np.pi * rolloff * t) / safe
    if rolloff > 0:
        h[singular] = np.pi / 4.0 * np.sinc(1.0 / (2.0 * rolloff))
    return FilterTaps(h, float(rolloff), int(span), int(sps))


def pulse_shape(symbols, taps):
    """Zero-stuff ``symbols`` to ``taps.sps`` and filter with ``taps``.

    Returns complex baseband of length ``len(symbols)*sps + span*sps``.  The
    peak of symbol k sits at index ``k*sps + span*sps//2``.
    """
    s = np.asarray(symbols, dtype=complex)
    if s.size == 0:
        raise InvalidArgument("cannot pulse-shape an empty symbol stream")
    h = taps.taps
    out_len = len(s) * taps.sps + taps.span * taps.sps
    out = np.zeros(out_len, dtype=complex)
    # upfirdn evaluates the polyphase sum directly, so periodic input gives
    # bitwise periodic output
    i = sps_signal.upfirdn(h, s.real, up=taps.sps)
    q = sps_signal.upfirdn(h, s.imag, up=taps.sps)
    out.real[: len(i)] = i
    out.imag[: len(q)] = q
    return out


def carrier_phase(n_samples, carrier, sample_rate, start=0):
    n = np.arange(start, start + n_samples, dtype=np.float64)
    # fmod of exact integer products keeps the phase exactly periodic
    return 2.0 * np.pi * np.fmod(carrier * n, sample_rate) / sample_rate


def upconvert(baseband, carrier=CARRIER, sample_rate=SAMPLE_RATE):
    """s[n] = I[n] cos(2 pi fc n/fs) - Q[n] sin(2 pi fc n/fs)."""
    if carrier >= sample_rate / 2:
        raise InvalidArgument(
            f"carrier {carrier} Hz must be below Nyquist ({sample_rate / 2} Hz)"
        )
    if carrier < 0:
        raise InvalidArgument("carrier must be non-negative")
    bb = np.asarray(baseband, dtype=complex)
    phase = carrier_phase(len(bb), carrier, sample_rate)
    samples = bb.real * np.cos(phase) - bb.imag * np.sin(phase)
    return PassbandSignal(samples, float(sample_rate), float(carrier))


def downconvert(signal, cutoff=50_000.0, numtaps=201):
    """Mix a passband signal back to complex baseband and low-pass it.

    Used only for round-trip checks; there is no synchronisation or matched
    filtering.
    """
    x = np.asarray(signal.samples, dtype=float)
    phase = carrier_phase(len(x), signal.carrier, signal.sample_rate)
    mixed = 2.0 * x * np.exp(-1j * phase)
    lp = sps_signal.firwin(numtaps, cutoff, fs=signal.sample_rate)
    return np.convolve(mixed, lp, mode="same")


def sample_symbols(baseband, n_symbols, taps):
    """Pick the symbol-instant samples out of pulse-shaped baseband."""
    idx = np.arange(n_symbols) * taps.sps + taps.span * taps.sps // 2
    return np.asarray(baseband)[idx]


def frame_signal(signal, n_s=FRAME_SAMPLES):
    """Cut contiguous, non-overlapping frames; the trailing remainder is dropped.

    Returns an ``(n_frames, n_s)`` view of the samples.
    """
    if n_s < 1:
        raise InvalidArgument(f"frame length must be >= 1, got {n_s}")
    x = signal.samples if isinstance(signal, PassbandSignal) else np.asarray(signal)
    n_frames = len(x) // n_s
    return x[: n_frames * n_s].reshape(n_frames, n_s)


def transmit(bits, rolloff=ROLLOFF, span=SPAN, carrier=CARRIER,
             sample_rate=SAMPLE_RATE, symbol_rate=SYMBOL_RATE):
    """Run the whole transmit chain on a bit stream."""
    taps = raised_cosine_taps(rolloff, span, samples_per_symbol(sample_rate, symbol_rate))
    baseband = pulse_shape(qpsk_modulate(bits), taps)
    return upconvert(baseband, carrier, sample_rate)
