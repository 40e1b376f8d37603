"""Generate, split, normalise, fit and score: the shared experiment path.

Every split is windowed on its own, so no window straddles a split boundary.
All models see the same windowed splits (frame models use the last frame of
each window) and are therefore scored on identical target rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from . import dataset as ds_mod
from .evaluation import evaluate, mape
from .models import LossCurve, TrainHyper, fit_model, get_spec

log = logging.getLogger(__name__)


@dataclass
class Prepared:
    scenario: str
    seed: int
    raw: ds_mod.Dataset
    stats: ds_mod.NormStats
    parts: tuple  # normalised (train, val, test) Datasets
    windows: tuple  # the same parts windowed


@dataclass
class ModelRun:
    name: str
    model: object
    curve: LossCurve
    report: object


@dataclass
class ScenarioResult:
    prepared: Prepared
    runs: dict = field(default_factory=dict)  # name -> ModelRun

    def mape(self, name):
        return self.runs[name].report.mape_percent


def prepare(scenario, n_frames, seed, window=4, split=ds_mod.SplitSpec(), channel_config=None,
            n_s=ds_mod.sc.FRAME_SAMPLES):
    raw = ds_mod.generate_dataset(scenario, n_frames, seed=seed, n_s=n_s,
                                  channel_config=channel_config)
    train, val, test = ds_mod.split(raw, split)
    stats = ds_mod.fit_normalization(train)
    parts = tuple(ds_mod.normalize(p, stats)[0] for p in (train, val, test))
    windows = tuple(ds_mod.window_dataset(p, window) for p in parts)
    return Prepared(scenario, seed, raw, stats, parts, windows)


def mape_scorer(stats):
    """Validation score on denormalised values (used to choose k for k-NN)."""
    return lambda A, F: mape(ds_mod.denormalize(A, stats), ds_mod.denormalize(F, stats))


def run_model(prepared, name, hyper=TrainHyper(), hidden=None, threads=1, options=None,
              on_epoch=None):
    spec = get_spec(name, hidden=hidden if get_spec(name).hidden else None, **(options or {}))
    hyper = replace(hyper, seed=prepared.seed)
    train, val, test = prepared.windows
    model, curve = fit_model(spec, train, val, hyper, threads=threads,
                             score=mape_scorer(prepared.stats), on_epoch=on_epoch)
    report = evaluate(model, test, prepared.stats, name=name, scenario=prepared.scenario,
                      seed=prepared.seed, timestamp="")
    log.info("%s on %s seed %d: MAPE %.3f%%", name, prepared.scenario, prepared.seed,
             report.mape_percent)
    return ModelRun(name, model, curve, report)


def run_scenario(scenario, seed, models, n_frames=2000, window=4, epochs=100, hidden=None,
                 lr=1e-3, batch=64, split=ds_mod.SplitSpec(), threads=1, options=None,
                 channel_config=None, prepared=None):
    """Fit and score each named model on one scenario/seed."""
    if prepared is None:
        prepared = prepare(scenario, n_frames, seed, window, split, channel_config)
    hyper = TrainHyper(lr=lr, batch=batch, epochs=epochs, seed=seed)
    result = ScenarioResult(prepared)
    for name in models:
        result.runs[name] = run_model(prepared, name, hyper, hidden, threads,
                                      (options or {}).get(name))
    return result
