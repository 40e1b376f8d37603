"""Line-oriented run configuration.

One ``dotted.key = value`` per line; ``#`` starts a comment.  Values are
parsed as int, float, bool (``true``/``false``), ``none``, or a comma list of
those; anything else stays a string.  Example::

    channel.scenario = lake-disturbed
    data.frames = 2000
    models = linreg, knn, lstm2
    model.lstm2.hidden = 64
    train.epochs = 40
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import channel as chan_mod
from . import signal_chain as sc
from .errors import InvalidArgument


class ConfigError(InvalidArgument):
    """Bad configuration; the CLI maps it to exit code 2."""


def parse_value(text):
    text = text.strip()
    if "," in text:
        return [parse_value(p) for p in text.split(",") if p.strip()]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null", ""):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_text(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or any(not part for part in key.split(".")):
            raise ConfigError(f"{source}:{lineno}: malformed key {key!r}")
        out[key] = parse_value(value)
    return out


def read_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def format_config(mapping):
    def fmt(v):
        if isinstance(v, (list, tuple)):
            return ", ".join(fmt(x) for x in v)
        if v is None:
            return "none"
        if isinstance(v, bool):
            return "true" if v else "false"
        return str(v)

    return "".join(f"{k} = {fmt(v)}\n" for k, v in sorted(mapping.items()))


def _as_list(v):
    if v is None:
        return []
    return list(v) if isinstance(v, (list, tuple)) else [v]


@dataclass
class RunConfig:
    scenario: str = "tank-clean"
    n_frames: int = 2000
    n_s: int = sc.FRAME_SAMPLES
    window: int = 4
    seed: int = 1
    models: list = field(default_factory=lambda: ["linreg", "knn", "rf", "mlp", "dnn4", "lstm2"])
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    epochs: int = 100
    lr: float = 1e-3
    batch: int = 64
    hidden: int | None = None  # width override for every neural model
    out: str = "runs"
    threads: int = 1
    model_options: dict = field(default_factory=dict)  # name -> {option: value}
    channel: dict = field(default_factory=dict)  # overrides on top of the preset

    _KEYS = {
        "channel.scenario": "scenario", "scenario": "scenario",
        "data.frames": "n_frames", "data.n_s": "n_s", "data.window": "window",
        "seed": "seed", "models": "models",
        "split.train": "train_frac", "split.val": "val_frac", "split.test": "test_frac",
        "train.epochs": "epochs", "train.lr": "lr", "train.batch": "batch",
        "train.hidden": "hidden", "output.dir": "out", "threads": "threads",
    }
    _CHANNEL_KEYS = ("paths", "absorption_distance", "doppler_rate", "noise_snr_db",
                     "tap_wander_std", "doppler_jitter_std")

    @classmethod
    def from_mapping(cls, mapping):
        cfg = cls()
        for key, value in mapping.items():
            cfg.set(key, value)
        return cfg.validate()

    def set(self, key, value):
        if key in self._KEYS:
            name = self._KEYS[key]
            if name == "models":
                value = [str(v) for v in _as_list(value)]
            setattr(self, name, value)
        elif key.startswith("model."):
            parts = key.split(".")
            if len(parts) != 3:
                raise ConfigError(f"model options look like model.<name>.<option>, got {key!r}")
            self.model_options.setdefault(parts[1], {})[parts[2]] = value
        elif key.startswith("channel."):
            name = key.split(".", 1)[1]
            if name not in self._CHANNEL_KEYS:
                raise ConfigError(f"unknown channel key {key!r}")
            self.channel[name] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")

    def validate(self):
        from .models import PRESETS

        if self.scenario not in chan_mod.preset_names():
            raise ConfigError(f"unknown scenario {self.scenario!r}; valid presets: "
                              f"{', '.join(chan_mod.preset_names())}")
        for name in self.models:
            if name not in PRESETS:
                raise ConfigError(f"unknown model {name!r}; valid models: {', '.join(PRESETS)}")
        for name in self.model_options:
            if name not in PRESETS:
                raise ConfigError(f"options given for unknown model {name!r}")
        ints = ("n_frames", "n_s", "window", "seed", "epochs", "batch", "threads")
        for name in ints:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if self.n_frames < 10 or self.n_s < 1 or self.window < 1 or self.batch < 1 or self.threads < 1:
            raise ConfigError("frames >= 10, n_s, window, batch and threads >= 1 are required")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.hidden is not None and (not isinstance(self.hidden, int) or self.hidden < 1):
            raise ConfigError(f"hidden must be a positive integer, got {self.hidden!r}")
        try:
            self.split_spec()
            self.channel_config()
        except InvalidArgument as exc:
            raise ConfigError(str(exc)) from None
        return self

    def split_spec(self):
        from .dataset import SplitSpec

        return SplitSpec(float(self.train_frac), float(self.val_frac), float(self.test_frac),
                         self.seed).validate()

    def channel_config(self, seed=None):
        cfg = chan_mod.preset(self.scenario, self.seed if seed is None else seed)
        if not self.channel:
            return cfg
        over = dict(self.channel)
        if "paths" in over:
            over["paths"] = parse_paths(over["paths"])
        return replace(cfg, **over).validate()

    def as_mapping(self):
        out = {}
        for key, name in self._KEYS.items():
            if key != "scenario":
                out[key] = getattr(self, name)
        for model, opts in self.model_options.items():
            for k, v in opts.items():
                out[f"model.{model}.{k}"] = v
        for k, v in self.channel.items():
            out[f"channel.{k}"] = v
        return out


def parse_paths(value):
    """``"0:1.0, 5:0.3"`` (or its parsed list form) -> ((0, 1.0), (5, 0.3))."""
    items = _as_list(value)
    paths = []
    for item in items:
        if isinstance(item, (list, tuple)) and len(item) == 2:
            d, g = item
        else:
            try:
                d, g = str(item).split(":")
            except ValueError:
                raise ConfigError(f"path entries look like delay:gain, got {item!r}") from None
        try:
            paths.append((int(d), float(g)))
        except ValueError:
            raise ConfigError(f"path entries look like delay:gain, got {item!r}") from None
    return tuple(paths)


__all__ = ["ConfigError", "RunConfig", "format_config", "parse_paths", "parse_text",
           "parse_value", "read_config"]
