"""Command-line interface: one subcommand per pipeline stage.

Stages communicate through files (IGRM/RAST rasters, CNNW weights, JSON
reports) so every step is rerunnable. All randomness is seeded from the
config, making reruns byte-identical; the one exception is timings.json,
which records wall-clock measurements.

Exit codes: 0 success, 1 usage/config error, 2 data or format error,
3 numeric failure (non-finite loss).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import evaluate, mrf, nn, pipeline, raster, sim
from .errors import (
    DataError,
    FormatError,
    ParameterError,
    TrainingDivergedError,
)

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DEFAULT_CONFIG = {
    "seed": 0,
    "simulate": {"n": 20, "size": 256},
    "training": {
        "patches_per_image": 500,
        "batch_size": 100,
        "initial_lr": 1e-3,
        "lr_halving_period": 10,
        "denoiser_epochs": pipeline.DENOISER_EPOCHS,
        "classifier_epochs": pipeline.CLASSIFIER_EPOCHS,
        "denoiser_patch_size": pipeline.DENOISER_PATCH_SIZE,
        "classifier_patch_size": pipeline.CLASSIFIER_PATCH_SIZE,
    },
    "mrf": {"alpha": mrf.DEFAULT_ALPHA, "init_threshold": mrf.DEFAULT_INIT_THRESHOLD},
    "classifier_depth": 4,
    "boxcar": {"window": 7, "reference": "denoised"},
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _merge_config(base: dict, override: dict, path: str = "") -> dict:
    merged = dict(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise _UsageError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise _UsageError(f"config key {where!r} must be an object")
            merged[key] = _merge_config(base[key], value, where)
        else:
            merged[key] = value
    return merged


def load_config(path=None) -> dict:
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    with open(path) as fh:
        return _merge_config(DEFAULT_CONFIG, json.load(fh))


def _config_epilog() -> str:
    lines = ["config keys and defaults:"]
    def walk(d, prefix=""):
        for key, value in d.items():
            name = f"{prefix}{key}"
            if isinstance(value, dict):
                walk(value, name + ".")
            else:
                lines.append(f"  {name} = {value}")
    walk(DEFAULT_CONFIG)
    return "\n".join(lines)


def _progress(stage):
    def callback(epoch, lr, value):
        print(f"{stage} epoch={epoch} lr={lr:.3e} loss={value:.6f}", file=sys.stderr)
    return callback


def _sample_dirs(root):
    dirs = sorted(
        os.path.join(root, name)
        for name in os.listdir(root)
        if os.path.isdir(os.path.join(root, name))
        and os.path.exists(os.path.join(root, name, "manifest.json"))
    )
    if not dirs:
        raise DataError(f"no sample directories with manifests under {root}")
    return dirs


def _training_config(cfg: dict, role: str, seed) -> pipeline.TrainingConfig:
    tr = cfg["training"]
    make = pipeline.denoiser_config if role == "denoiser" else pipeline.classifier_config
    return make(
        patches_per_image=tr["patches_per_image"],
        patch_size=tr[f"{role}_patch_size"],
        batch_size=tr["batch_size"],
        initial_lr=tr["initial_lr"],
        lr_halving_period=tr["lr_halving_period"],
        epochs=tr[f"{role}_epochs"],
        seed=seed,
    )


def _cmd_simulate(args, cfg):
    n = args.n if args.n is not None else cfg["simulate"]["n"]
    size = args.size if args.size is not None else cfg["simulate"]["size"]
    seed = args.seed if args.seed is not None else cfg["seed"]
    samples = sim.generate_dataset(n, size, seed)
    for i, sample in enumerate(samples):
        sim.save_sample(sample, os.path.join(args.out, f"sample_{i:03d}"))
    print(f"wrote {n} samples of {size}x{size} under {args.out}", file=sys.stderr)
    return 0


def _cmd_train_denoiser(args, cfg):
    seed = args.seed if args.seed is not None else cfg["seed"]
    images = [sim.load_sample(d).noisy for d in _sample_dirs(args.train)]
    tcfg = _training_config(cfg, "denoiser", seed)
    params, _ = pipeline.train_network(
        pipeline.denoiser_role(), images, tcfg, progress=_progress("denoiser")
    )
    with open(args.out, "wb") as fh:
        fh.write(nn.save_weights(params))
    return 0


def _cmd_prepare_labels(args, cfg):
    with open(args.weights, "rb") as fh:
        params = nn.load_weights(fh.read())
    mrf_cfg = mrf.MrfConfig(cfg["mrf"]["alpha"], cfg["mrf"]["init_threshold"])
    for d in _sample_dirs(args.train):
        noisy = sim.load_sample(d).noisy
        denoised = pipeline.denoise_image(params, noisy)
        labels = pipeline.prepare_labels(noisy, denoised, mrf_cfg)
        raster.write_raster(os.path.join(d, "labels.rast"), labels.astype(np.float32))
        print(f"labels written for {d}", file=sys.stderr)
    return 0


def _cmd_train_classifier(args, cfg):
    seed = args.seed if args.seed is not None else cfg["seed"]
    images = []
    labels = []
    for d in _sample_dirs(args.train):
        label_path = os.path.join(d, "labels.rast")
        if not os.path.exists(label_path):
            raise DataError(f"{d} has no labels.rast; run prepare-labels first")
        images.append(sim.load_sample(d).noisy)
        labels.append(raster.read_raster(label_path).astype(np.uint8))
    tcfg = _training_config(cfg, "classifier", seed)
    role = pipeline.classifier_role(depth=cfg["classifier_depth"])
    params, _ = pipeline.train_network(
        role, images, tcfg, labels=labels, progress=_progress("classifier")
    )
    with open(args.out, "wb") as fh:
        fh.write(nn.save_weights(params))
    return 0


def _cmd_classify(args, cfg):
    with open(args.weights, "rb") as fh:
        params = nn.load_weights(fh.read())
    scores = pipeline.classify_image(params, raster.read_raster(args.input))
    raster.write_raster(args.out, scores.astype(np.float32))
    return 0


def _cmd_evaluate(args, cfg):
    with open(args.weights, "rb") as fh:
        classifier = nn.load_weights(fh.read())
    denoiser = None
    if args.denoiser:
        with open(args.denoiser, "rb") as fh:
            denoiser = nn.load_weights(fh.read())
    samples = [sim.load_sample(d) for d in _sample_dirs(args.test)]
    reports = evaluate.compare_methods(
        samples,
        classifier,
        denoiser_params=denoiser,
        boxcar_window=cfg["boxcar"]["window"],
        boxcar_reference=cfg["boxcar"]["reference"],
    )
    table = evaluate.render_table(reports)
    print(table, end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.json"), "w") as fh:
            fh.write(evaluate.report_json(reports, {"samples": len(samples)}))
        with open(os.path.join(args.out, "table.txt"), "w") as fh:
            fh.write(table)
        with open(os.path.join(args.out, "timings.json"), "w") as fh:
            fh.write(evaluate.timings_json(reports))
    return 0


def _cmd_export_png(args, cfg):
    raster.export_phase_png(raster.read_raster(args.input), args.out)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(
        prog="cohclass",
        description="Coherence classification pipeline for complex interferograms.",
        epilog=_config_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON config file (unknown keys are rejected)")
        p.set_defaults(handler=handler)
        return p

    p = add("simulate", _cmd_simulate, "generate synthetic interferogram samples")
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--size", type=int, help="image side length in pixels")
    p.add_argument("--seed", type=int, help="dataset seed")
    p.add_argument("--out", required=True, help="output directory")

    p = add("train-denoiser", _cmd_train_denoiser, "train the filtering autoencoder")
    p.add_argument("--train", required=True, help="directory of training samples")
    p.add_argument("--out", required=True, help="output CNNW weights file")
    p.add_argument("--seed", type=int, help="training seed")

    p = add("prepare-labels", _cmd_prepare_labels,
            "denoise, correlate and MRF-threshold training labels")
    p.add_argument("--train", required=True, help="directory of training samples")
    p.add_argument("--weights", required=True, help="denoiser CNNW weights")

    p = add("train-classifier", _cmd_train_classifier, "train the coherence classifier")
    p.add_argument("--train", required=True, help="directory with labels.rast per sample")
    p.add_argument("--out", required=True, help="output CNNW weights file")
    p.add_argument("--seed", type=int, help="training seed")

    p = add("classify", _cmd_classify, "score one interferogram")
    p.add_argument("--weights", required=True, help="classifier CNNW weights")
    p.add_argument("--input", required=True, help="IGRM interferogram")
    p.add_argument("--out", required=True, help="output RAST score map")

    p = add("evaluate", _cmd_evaluate, "compare boxcar and CNN on test samples")
    p.add_argument("--test", required=True, help="directory of test samples")
    p.add_argument("--weights", required=True, help="classifier CNNW weights")
    p.add_argument("--denoiser", help="denoiser CNNW weights (for the boxcar pairing)")
    p.add_argument("--out", help="directory for report.json/table.txt/timings.json")

    p = add("export-png", _cmd_export_png, "render the wrapped phase as a PNG")
    p.add_argument("--input", required=True, help="IGRM interferogram")
    p.add_argument("--out", required=True, help="output PNG path")

    return parser


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        return args.handler(args, cfg)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (json.JSONDecodeError,) as exc:
        print(f"error: bad config JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, DataError, ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main(argv=None) -> int:
    code = run_command(sys.argv[1:] if argv is None else argv)
    if argv is None:
        sys.exit(code)
    return code
