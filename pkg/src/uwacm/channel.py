"""Synthetic underwater channel: time-varying tap-delay line plus noise.

Model per output sample::

    y[n] = sum_p g_p[n] * x[n - d_p] + w[n]

Static path gains are attenuated by Thorp absorption at the carrier.  Echo
paths (p >= 1) carry a slow Doppler-induced gain oscillation
``cos(theta_p(t))``; the disturbed preset adds a Gaussian random walk to every
gain and a random-walk jitter to the Doppler phase.  Trajectories are held at
block resolution and linearly interpolated to samples.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgument
from .signal_chain import CARRIER, SAMPLE_RATE, PassbandSignal

PRESET_VERSION = 1
TRAJECTORY_BLOCK = 250
_CHUNK = 1 << 20


class Scenario(str, enum.Enum):
    TANK_CLEAN = "tank-clean"
    LAKE_CLEAN = "lake-clean"
    LAKE_DISTURBED = "lake-disturbed"


@dataclass(frozen=True)
class ChannelConfig:
    scenario: Scenario | None
    paths: tuple[tuple[int, float], ...]
    absorption_distance: float = 0.0  # km
    doppler_rate: float = 0.0  # Doppler phase drift, cycles per second
    noise_snr_db: float | None = 40.0  # None disables noise
    tap_wander_std: float = 0.0  # gain random-walk std per sqrt(second)
    doppler_jitter_std: float = 0.0  # phase random-walk std, rad per sqrt(second)
    seed: int = 0
    carrier: float = CARRIER
    sample_rate: float = SAMPLE_RATE

    def validate(self):
        if not self.paths:
            raise InvalidArgument("channel needs at least one path")
        if self.paths[0][0] != 0:
            raise InvalidArgument("path 0 must have delay 0")
        for delay, gain in self.paths:
            if int(delay) != delay or delay < 0:
                raise InvalidArgument(f"path delay must be a non-negative integer, got {delay}")
            if not np.isfinite(gain):
                raise InvalidArgument(f"path gain must be finite, got {gain}")
        if self.noise_snr_db is not None and not -10.0 <= self.noise_snr_db <= 60.0:
            raise InvalidArgument(f"noise_snr_db must lie in [-10, 60], got {self.noise_snr_db}")
        for name in ("absorption_distance", "tap_wander_std", "doppler_jitter_std"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidArgument(f"{name} must be finite and non-negative, got {value}")
        if not np.isfinite(self.doppler_rate):
            raise InvalidArgument("doppler_rate must be finite")
        return self

    @property
    def max_delay(self):
        return max(d for d, _ in self.paths)

    @property
    def static(self):
        return self.doppler_rate == 0 and self.tap_wander_std == 0 and self.doppler_jitter_std == 0


@dataclass(frozen=True)
class ChannelRealization:
    """Tap gains sampled every ``block`` samples (``n_blocks + 1`` rows)."""

    tap_trajectory: np.ndarray  # (n_blocks + 1, n_paths)
    delays: np.ndarray
    noise_seed: int
    config: ChannelConfig
    n_samples: int
    block: int = TRAJECTORY_BLOCK
    meta: dict = field(default_factory=dict)

    def gains(self, start, stop):
        """Per-sample gains for samples ``[start, stop)``, shape (stop-start, n_paths)."""
        traj = self.tap_trajectory
        if self.config.static:
            return np.broadcast_to(traj[0], (stop - start, traj.shape[1]))
        n = np.arange(start, stop)
        pos = n / self.block
        k = np.minimum(pos.astype(np.int64), len(traj) - 2)
        frac = (pos - k)[:, None]
        return traj[k] * (1.0 - frac) + traj[k + 1] * frac


def thorp_absorption(f):
    """Thorp absorption in dB/km for frequency ``f`` in kHz."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise InvalidArgument("frequency must be positive")
    f2 = f * f
    alpha = 0.11 * f2 / (1 + f2) + 44 * f2 / (4100 + f2) + 2.75e-4 * f2 + 0.003
    return float(alpha) if alpha.ndim == 0 else alpha


_LAKE_PATHS = ((0, 1.0), (37, 0.6), (113, -0.45), (241, 0.3), (389, -0.2))


def preset(name, seed=0):
    """Named, versioned scenario presets (see ``PRESET_VERSION``)."""
    try:
        scenario = Scenario(name)
    except ValueError:
        valid = ", ".join(s.value for s in Scenario)
        raise InvalidArgument(f"unknown scenario {name!r}; valid presets: {valid}") from None
    if scenario is Scenario.TANK_CLEAN:
        cfg = ChannelConfig(scenario, ((0, 1.0), (5, 0.3)), absorption_distance=0.005,
                            noise_snr_db=40.0, seed=seed)
    elif scenario is Scenario.LAKE_CLEAN:
        cfg = ChannelConfig(scenario, _LAKE_PATHS, absorption_distance=0.1,
                            doppler_rate=0.05, noise_snr_db=25.0, seed=seed)
    else:
        cfg = ChannelConfig(scenario, _LAKE_PATHS, absorption_distance=0.1,
                            doppler_rate=0.05, noise_snr_db=25.0, tap_wander_std=0.02,
                            doppler_jitter_std=0.1, seed=seed)
    return cfg.validate()


def preset_names():
    return [s.value for s in Scenario]


def make_channel(config, n_samples, block=TRAJECTORY_BLOCK):
    """Draw the gain trajectory for ``n_samples`` samples from ``config.seed``."""
    if n_samples <= 0:
        raise InvalidArgument(f"n_samples must be positive, got {n_samples}")
    config.validate()
    traj_seq, noise_seq = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(traj_seq)
    noise_seed = int(np.random.default_rng(noise_seq).integers(2**63))

    delays = np.array([d for d, _ in config.paths], dtype=np.int64)
    base = np.array([g for _, g in config.paths], dtype=float)
    base *= 10.0 ** (-thorp_absorption(config.carrier / 1e3) * config.absorption_distance / 20.0)
    n_paths = len(base)
    n_blocks = -(-n_samples // block)
    t = np.arange(n_blocks + 1) * (block / config.sample_rate)
    dt = block / config.sample_rate

    # echo paths drift at individual rates; the direct path is the reference
    speed = rng.uniform(-1.0, 1.0, size=n_paths)
    speed[0] = 0.0
    theta = 2.0 * np.pi * config.doppler_rate * speed[None, :] * t[:, None]
    if config.doppler_jitter_std > 0:
        steps = rng.normal(0.0, config.doppler_jitter_std * np.sqrt(dt), size=(n_blocks, n_paths))
        steps[:, 0] = 0.0
        theta = theta + _walk(steps)
    traj = base[None, :] * np.cos(theta)
    if config.tap_wander_std > 0:
        steps = rng.normal(0.0, config.tap_wander_std * np.sqrt(dt), size=(n_blocks, n_paths))
        traj = traj + _walk(steps)
    return ChannelRealization(traj, delays, noise_seed, config, int(n_samples), block,
                              meta={"preset_version": PRESET_VERSION})


def _walk(steps):
    return np.vstack([np.zeros((1, steps.shape[1])), np.cumsum(steps, axis=0)])


def multipath(x, chan):
    """Noise-free part of :func:`propagate`."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    y = np.zeros(n)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        g = chan.gains(start, stop)
        for p, d in enumerate(chan.delays):
            lo = max(start, d)
            if lo >= stop:
                continue
            y[lo:stop] += g[lo - start:, p] * x[lo - d:stop - d]
    return y


def propagate(signal, chan, noise=True):
    """Send a passband signal through a channel realization.

    Noise power is set relative to the measured multipath output power.
    """
    x = signal.samples if isinstance(signal, PassbandSignal) else np.asarray(signal, dtype=float)
    if len(x) != chan.n_samples:
        raise InvalidArgument(
            f"signal has {len(x)} samples but the realization covers {chan.n_samples}"
        )
    y = multipath(x, chan)
    snr = chan.config.noise_snr_db
    if noise and snr is not None:
        power = np.mean(y * y)
        std = np.sqrt(power / 10.0 ** (snr / 10.0))
        y += std * np.random.default_rng(chan.noise_seed).standard_normal(len(y))
    if isinstance(signal, PassbandSignal):
        return replace(signal, samples=y)
    return y


def measured_snr_db(clean, received):
    noise = np.asarray(received) - np.asarray(clean)
    return 10.0 * np.log10(np.mean(np.square(clean)) / np.mean(noise * noise))
