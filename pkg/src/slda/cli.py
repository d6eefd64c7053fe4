"""Command-line pipeline: generate, train, evaluate, predict, report."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import cascade as csc
from . import evaluate as ev
from .config import RunConfig, load_config
from .datafile import read_dataset, write_dataset
from .optics import CameraFrame, read_pgm, simulate_frame
from .scene import ParticleSpec, SceneSpec, ShapeKind, place_particles, rasterize


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slda",
        description=(
            "Synthetic laser-diffraction analysis: far-field patterns of random "
            "particle scenes, classified by cascaded feed-forward networks."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--experiment", type=int, choices=(1, 2), help="experiment id")
        p.add_argument("--config", type=str, help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--samples-per-category", type=int, dest="samples_per_category")
        p.add_argument("--out", type=str, dest="out_dir", help="output directory")
        p.add_argument("--dataset", type=str, dest="dataset_path", help="dataset file")
        p.add_argument("--models", type=str, dest="model_dir", help="model directory")
        p.add_argument("--threads", type=int, help="parallel workers for generation")
        p.add_argument("--keep-frames", action="store_true", dest="keep_frames",
                       default=None, help="store raw frames in the dataset")
        p.add_argument("--max-epochs", type=int, dest="max_epochs")
        p.add_argument("--patience", type=int)
        p.add_argument("--noise-sigma", type=float, dest="noise_sigma")
        strict = p.add_mutually_exclusive_group()
        strict.add_argument("--strict", action="store_true", dest="strict", default=None,
                            help="non-zero exit when a stage misses its accuracy floor")
        strict.add_argument("--no-strict", action="store_false", dest="strict",
                            default=None, help="downgrade accuracy misses to warnings")
        return p

    add_common(sub.add_parser("generate", help="synthesize the dataset file"))
    add_common(sub.add_parser("train", help="train every network of the experiment"))
    add_common(sub.add_parser("evaluate", help="confusion matrices and accuracy report"))
    p_pred = add_common(sub.add_parser("predict", help="classify one scene or frame"))
    p_pred.add_argument("--input", type=str, required=True,
                        help="scene JSON file or PGM camera frame")
    p_pred.add_argument("--power", type=float, default=None,
                        help="power-meter reading (required with a PGM frame)")
    add_common(sub.add_parser("report", help="re-print a stored accuracy report"))
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key in RunConfig.__dataclass_fields__ and value is not None
    }
    if args.config:
        return load_config(args.config, **overrides)
    return dataclasses.replace(RunConfig(), **overrides)


def cmd_generate(cfg: RunConfig) -> int:
    manifest = csc.DatasetManifest(
        experiment=cfg.experiment,
        grid_rows=cfg.grid_rows,
        grid_cols=cfg.grid_cols,
        samples_per_category=cfg.samples_per_category,
        seed=cfg.seed,
        optics=cfg.optics(),
        keep_frames=cfg.keep_frames,
    )
    path = cfg.resolved_dataset_path
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg.write_echo(cfg.out_dir)
    started = time.perf_counter()
    written = write_dataset(path, manifest, csc.generate_records(manifest, cfg.threads))
    elapsed = time.perf_counter() - started
    print(
        f"wrote {written} records ({len(manifest.categories)} categories x "
        f"{manifest.samples_per_category}) to {path} in {elapsed:.1f}s"
    )
    return 0


def cmd_train(cfg: RunConfig) -> int:
    dataset = read_dataset(cfg.resolved_dataset_path)
    if dataset.manifest.experiment != cfg.experiment:
        print(
            f"error: dataset is experiment {dataset.manifest.experiment}, "
            f"config asks for {cfg.experiment}",
            file=sys.stderr,
        )
        return 2
    cfg.write_echo(cfg.out_dir)
    plan = ev.split(dataset, seed=csc.derive_seed(cfg.seed, 1))
    ev.assert_no_leakage(plan)
    started = time.perf_counter()
    bundle = ev.train_all(dataset, plan, cfg.training())
    ev.save_bundle(cfg.resolved_model_dir, bundle)
    elapsed = time.perf_counter() - started
    for name, ts in bundle.stages.items():
        print(
            f"{name}: {ts.report.epochs_run} epochs, stop={ts.report.stop_reason}, "
            f"best val loss {ts.report.best_val_loss:.4g} @ epoch {ts.report.best_epoch}"
        )
    print(f"saved {len(bundle.stages)} model files to {cfg.resolved_model_dir} "
          f"({elapsed:.1f}s)")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    dataset = read_dataset(cfg.resolved_dataset_path)
    models = ev.load_bundle(cfg.resolved_model_dir, cfg.experiment)
    plan = ev.split(dataset, seed=csc.derive_seed(cfg.seed, 1))
    ev.assert_no_leakage(plan)
    results = ev.evaluate_cascade(dataset, plan, models)
    reports = ev.load_train_reports(cfg.resolved_model_dir, cfg.experiment)
    frames = ev.sample_frames(dataset, plan)
    summary = ev.export_report(
        results,
        cfg.report_dir,
        cfg.experiment,
        train_reports=reports,
        frames=frames,
    )
    cfg.write_echo(cfg.out_dir)
    print(ev.format_report(summary))
    print(f"reports written to {cfg.report_dir}")
    return _band_exit(summary, cfg.strict)


def _band_exit(summary: dict, strict: bool) -> int:
    if summary["all_pass"]:
        return 0
    misses = [name for name, e in summary["stages"].items() if not e["pass"]]
    message = f"stages below their accuracy floor: {', '.join(misses)}"
    if strict:
        print(f"error: {message}", file=sys.stderr)
        return 1
    print(f"warning: {message}", file=sys.stderr)
    return 0


def _load_scene(path: Path, cfg: RunConfig) -> SceneSpec:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    rows = data.get("grid_rows", cfg.grid_rows)
    cols = data.get("grid_cols", cfg.grid_cols)
    seed = data.get("seed", cfg.seed)
    if "particles" in data:
        particles = tuple(
            ParticleSpec(ShapeKind(p["kind"]), p["size"], p["row"], p["col"])
            for p in data["particles"]
        )
        return SceneSpec(rows, cols, particles, seed)
    if "requests" in data:
        requests = [(ShapeKind(k), s) for k, s in data["requests"]]
        return place_particles(rows, cols, requests, seed)
    raise ValueError("scene file needs a 'particles' or 'requests' entry")


def _load_frame(path: Path, cfg: RunConfig, power: float | None) -> CameraFrame:
    image = read_pgm(path)
    if image.shape != (cfg.crop_size, cfg.crop_size):
        raise ValueError(
            f"frame is {image.shape[0]}x{image.shape[1]}, "
            f"expected {cfg.crop_size}x{cfg.crop_size}"
        )
    if power is None:
        raise ValueError("a raw frame needs --power (the unquantized power reading)")
    return CameraFrame(image, float(power))


def cmd_predict(cfg: RunConfig, input_path: str, power: float | None) -> int:
    models = ev.load_bundle(cfg.resolved_model_dir, cfg.experiment)
    path = Path(input_path)
    if path.suffix.lower() == ".pgm":
        frame = _load_frame(path, cfg, power)
    else:
        scene = _load_scene(path, cfg)
        rng = (
            np.random.default_rng([scene.seed, 1]) if cfg.noise_sigma > 0.0 else None
        )
        frame = simulate_frame(rasterize(scene), cfg.optics(), rng)
    predictor = csc.predict_exp1 if cfg.experiment == 1 else csc.predict_exp2
    predictor(frame, models)  # warm-up so the timing below is steady-state
    started = time.perf_counter()
    labels, probabilities = predictor(frame, models)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    stage_names = ("geometry", "size", "count") if cfg.experiment == 1 else (
        "pair", "total", "dominant")
    for name, value, probs in zip(stage_names, labels, probabilities):
        shown = value.label if isinstance(value, ShapeKind) else value
        dist = ", ".join(f"{p:.4f}" for p in probs)
        print(f"{name}: {shown}  [{dist}]")
    print(f"inference time: {elapsed_ms:.3f} ms")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    path = cfg.report_dir / f"exp{cfg.experiment}_accuracy.json"
    if not path.exists():
        print(f"error: no stored report at {path}; run evaluate first", file=sys.stderr)
        return 2
    with open(path, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    print(ev.format_report(summary))
    return _band_exit(summary, cfg.strict)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "predict":
            return cmd_predict(cfg, args.input, args.power)
        if args.command == "report":
            return cmd_report(cfg)
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
