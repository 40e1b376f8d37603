"""Command-line entry point: generate, train, eval, compare, plot, pipeline.

Exit codes: 0 ok, 2 configuration / argument error, 3 file or format error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace

from . import __version__
from . import dataset as ds_mod
from . import evaluation, experiments, plots
from .config import ConfigError, RunConfig, format_config, read_config
from .errors import FormatError, InvalidArgument, NumericError
from .models import TrainHyper, checkpoint, get_spec

log = logging.getLogger("uwacm")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


# ---------------------------------------------------------------- helpers

def _write_json(path, obj):
    ds_mod.atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n", mode="w")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config(args):
    mapping = read_config(args.config) if args.config else {}
    cfg = RunConfig()
    for key, value in mapping.items():
        cfg.set(key, value)
    for flag, attr in (("seed", "seed"), ("threads", "threads"), ("out", "out"),
                       ("scenario", "scenario"), ("frames", "n_frames"), ("n_s", "n_s"),
                       ("window", "window"), ("epochs", "epochs"), ("hidden", "hidden"),
                       ("lr", "lr"), ("batch", "batch")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, value)
    if getattr(args, "models", None):
        cfg.models = [m.strip() for m in args.models.split(",") if m.strip()]
    return cfg.validate()


def _model_options(args, cfg, name):
    opts = dict(cfg.model_options.get(name, {}))
    for flag in ("k", "ridge", "n_trees", "max_depth"):
        value = getattr(args, flag, None)
        if value is not None:
            opts[flag] = value
    return opts


def _stats_from(run):
    try:
        return ds_mod.NormStats(**run["normalization"])
    except (KeyError, TypeError):
        raise FormatError("checkpoint lacks normalisation statistics", 0) from None


def _test_view(data, run):
    """Rebuild the test split exactly as it was seen during training."""
    spec = ds_mod.SplitSpec(*run["split"])
    stats = _stats_from(run)
    _, _, test = ds_mod.split(data, spec)
    test = ds_mod.normalize(test, stats)[0]
    return ds_mod.window_dataset(test, run["window"]), stats


def _load_dataset(path):
    meta_path = path + ".meta.json"
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
    return ds_mod.load(path, meta=meta)


# ---------------------------------------------------------------- commands

def generate(cfg, path):
    data = ds_mod.generate_dataset(cfg.scenario, cfg.n_frames, seed=cfg.seed, n_s=cfg.n_s,
                                   channel_config=cfg.channel_config() if cfg.channel else None)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    ds_mod.save(data, path)
    _write_json(path + ".meta.json", data.meta)
    return data


def cmd_generate(args):
    cfg = _config(args)
    path = args.output or os.path.join(cfg.out, f"{cfg.scenario}-seed{cfg.seed}.uwac")
    data = generate(cfg, path)
    print(f"wrote {path}: {data.n_frames}x{data.n_s} ({cfg.scenario}, seed {cfg.seed})")
    return EXIT_OK


def train_one(cfg, data, name, out_dir, options=None, echo=True):
    """Split, normalise, fit and checkpoint one model.  Returns (ckpt path, ModelRun)."""
    split = cfg.split_spec()
    train, val, test = ds_mod.split(data, split)
    stats = ds_mod.fit_normalization(train)
    parts = tuple(ds_mod.normalize(p, stats)[0] for p in (train, val, test))
    windows = tuple(ds_mod.window_dataset(p, cfg.window) for p in parts)
    scenario = str(data.meta.get("scenario", cfg.scenario))
    prepared = experiments.Prepared(scenario, cfg.seed, data, stats, parts, windows)
    hyper = TrainHyper(lr=cfg.lr, batch=cfg.batch, epochs=cfg.epochs, seed=cfg.seed)

    def on_epoch(epoch, tr, va):
        if echo:
            print(f"{name} epoch {epoch}/{hyper.epochs} train {tr:.6g} val {va:.6g}", flush=True)

    hidden = (options or {}).pop("hidden", None) or cfg.hidden
    run = experiments.run_model(prepared, name, hyper, hidden, cfg.threads, options, on_epoch)
    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, f"{name}.uwam")
    context = {"normalization": stats.as_dict(), "window": cfg.window,
               "split": [split.train_frac, split.val_frac, split.test_frac, split.seed],
               "scenario": scenario, "seed": cfg.seed, "n_s": data.n_s}
    checkpoint.save(run.model, ckpt, run=context)
    if len(run.curve):
        ds_mod.atomic_write(os.path.join(out_dir, f"{name}_loss.csv"),
                            "epoch,train_loss,val_loss\n" + "".join(
                                f"{e},{tr!r},{va!r}\n" for e, tr, va in run.curve.rows()), mode="w")
    return ckpt, run


def cmd_train(args):
    cfg = _config(args)
    get_spec(args.model)
    data = _load_dataset(args.data)
    if data.n_s != cfg.n_s and args.n_s is not None:
        raise ConfigError(f"dataset has N_S={data.n_s}, config asks for {cfg.n_s}")
    ckpt, run = train_one(cfg, data, args.model, cfg.out, _model_options(args, cfg, args.model))
    print(f"wrote {ckpt}; test MAPE {run.report.mape_percent:.4f}%")
    return EXIT_OK


def _score(paths, data_path):
    data = _load_dataset(data_path)
    reports = []
    for path in paths:
        model, run = checkpoint.load_with_run(path)
        if run.get("n_s", data.n_s) != data.n_s or model.n_in != data.n_s:
            raise ConfigError(f"{path} expects N_S={model.n_in}, dataset has {data.n_s}")
        test, stats = _test_view(data, run)
        name = os.path.splitext(os.path.basename(path))[0]
        reports.append(evaluation.evaluate(model, test, stats, name=name,
                                           scenario=run.get("scenario"), seed=run.get("seed"),
                                           timestamp=""))
    return reports


def _emit(reports, out_path):
    print(evaluation.format_table(reports))
    if out_path:
        evaluation.write_reports(reports, out_path)
        print(f"wrote {out_path}")


def cmd_eval(args):
    reports = _score(args.checkpoints, args.data)
    _emit(reports, args.report)
    return EXIT_OK


def cmd_compare(args):
    reports = evaluation.rank(_score(args.checkpoints, args.data))
    _emit(reports, args.report)
    return EXIT_OK


def triptych_data(model, run, data, frame):
    test, stats = _test_view(data, run)
    if not 0 <= frame < len(test):
        raise InvalidArgument(f"frame must lie in [0, {len(test)}), got {frame}")
    view = replace(test, Xw=test.Xw[frame:frame + 1], Y=test.Y[frame:frame + 1])
    pred = ds_mod.denormalize(evaluation.predict_frames(model, view), stats)[0]
    return {"transmitted": ds_mod.denormalize(test.last[frame], stats, which="x"),
            "truth": ds_mod.denormalize(test.Y[frame], stats), "predicted": pred}


def cmd_plot(args):
    if args.kind == "loss_curve":
        if not args.input:
            raise ConfigError("loss_curve needs --input <loss csv>")
        train, val = [], []
        with open(args.input) as fh:
            next(fh)
            for line in fh:
                _, tr, va = line.strip().split(",")
                train.append(float(tr))
                val.append(float(va))
        data = {"train": train, "val": val}
    else:
        if not (args.checkpoint and args.data):
            raise ConfigError("triptych needs --checkpoint and --data")
        model, run = checkpoint.load_with_run(args.checkpoint)
        data = triptych_data(model, run, _load_dataset(args.data), args.frame)
    paths = plots.export_plot(args.kind, data, args.output)
    print("wrote " + ", ".join(paths))
    return EXIT_OK


def pipeline(cfg, run_dir, echo=True):
    """generate -> split -> train every model -> evaluate -> plots, plus a manifest."""
    os.makedirs(run_dir, exist_ok=True)
    mapping = {k: v for k, v in cfg.as_mapping().items() if k != "output.dir"}  # location-free
    ds_mod.atomic_write(os.path.join(run_dir, "config.txt"), format_config(mapping), mode="w")
    data_path = os.path.join(run_dir, "dataset.uwac")
    data = generate(cfg, data_path)
    runs = {}
    for name in cfg.models:
        _, runs[name] = train_one(cfg, data, name, os.path.join(run_dir, "models"),
                                  dict(cfg.model_options.get(name, {})), echo=echo)
    reports = evaluation.rank([r.report for r in runs.values()])
    evaluation.write_reports(reports, os.path.join(run_dir, "report.csv"))
    ds_mod.atomic_write(os.path.join(run_dir, "report.txt"),
                        evaluation.format_table(reports) + "\n", mode="w")
    plot_dir = os.path.join(run_dir, "plots")
    os.makedirs(plot_dir, exist_ok=True)
    for name, run in runs.items():
        if len(run.curve):
            plots.export_plot("loss_curve", run.curve, os.path.join(plot_dir, f"{name}_loss"))
        ckpt_model, ctx = checkpoint.load_with_run(os.path.join(run_dir, "models", f"{name}.uwam"))
        plots.export_plot("triptych", triptych_data(ckpt_model, ctx, data, 0),
                          os.path.join(plot_dir, f"{name}_triptych"))
    write_manifest(run_dir)
    return reports


def write_manifest(run_dir):
    entries = []
    for root, _, files in os.walk(run_dir):
        for f in files:
            if f == "manifest.json":
                continue
            p = os.path.join(root, f)
            entries.append({"path": os.path.relpath(p, run_dir).replace(os.sep, "/"),
                            "sha256": _sha256(p), "bytes": os.path.getsize(p)})
    entries.sort(key=lambda e: e["path"])
    _write_json(os.path.join(run_dir, "manifest.json"), {"version": __version__, "files": entries})
    return entries


def cmd_pipeline(args):
    cfg = _config(args)
    name = args.run_name or time.strftime("run-%Y%m%d-%H%M%S")
    run_dir = os.path.join(cfg.out, name)
    reports = pipeline(cfg, run_dir)
    print(evaluation.format_table(reports))
    print(f"run directory: {run_dir}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="uwacm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="dotted-key config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    data_flags = argparse.ArgumentParser(add_help=False)
    data_flags.add_argument("--scenario")
    data_flags.add_argument("--frames", type=int)
    data_flags.add_argument("--n-s", dest="n_s", type=int)

    train_flags = argparse.ArgumentParser(add_help=False)
    train_flags.add_argument("--window", type=int)
    train_flags.add_argument("--epochs", type=int)
    train_flags.add_argument("--hidden", type=int, help="width of every hidden layer")
    train_flags.add_argument("--lr", type=float)
    train_flags.add_argument("--batch", type=int)

    g = sub.add_parser("generate", parents=[common, data_flags], help="synthesize a dataset")
    g.add_argument("--output", help="dataset path (default <out>/<scenario>-seed<seed>.uwac)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common, train_flags], help="train one model")
    t.add_argument("--data", required=True)
    t.add_argument("--model", required=True)
    t.add_argument("--n-s", dest="n_s", type=int)
    t.add_argument("--k", type=int)
    t.add_argument("--ridge", type=float)
    t.add_argument("--n-trees", dest="n_trees", type=int)
    t.add_argument("--max-depth", dest="max_depth", type=int)
    t.set_defaults(func=cmd_train)

    for name, func, text in (("eval", cmd_eval, "score checkpoints on the test split"),
                             ("compare", cmd_compare, "score and rank checkpoints by MAPE")):
        e = sub.add_parser(name, parents=[common], help=text)
        e.add_argument("--data", required=True)
        e.add_argument("--report", help="write the report CSV here")
        e.add_argument("checkpoints", nargs="+")
        e.set_defaults(func=func)

    pl = sub.add_parser("plot", parents=[common], help="export a figure as CSV + SVG")
    pl.add_argument("kind", choices=plots.KINDS)
    pl.add_argument("--input", help="loss CSV written by train")
    pl.add_argument("--checkpoint")
    pl.add_argument("--data")
    pl.add_argument("--frame", type=int, default=0, help="test-window index for the triptych")
    pl.add_argument("--output", required=True, help="output stem")
    pl.set_defaults(func=cmd_plot)

    pp = sub.add_parser("pipeline", parents=[common, data_flags, train_flags],
                        help="generate, train, evaluate and plot in one run directory")
    pp.add_argument("--models", help="comma-separated model names")
    pp.add_argument("--run-name", help="run directory name (default: timestamp)")
    pp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
