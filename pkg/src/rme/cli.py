"""Command line harness.

`rme <command>` drives the whole experiment loop: dataset generation,
training, evaluation sweeps against tuned classical baselines, ablations,
cross-resolution evaluation and heatmap export.  Every command accepts
`--config FILE` (key = value text, see config.py) plus repeatable
`--set key=value` overrides, and is deterministic given config and seed:
rerunning writes byte-identical files.  Timing and progress go to stderr
only, never into result files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
import time
from dataclasses import replace

import numpy as np

from .baselines import METHODS, tune_baseline
from .config import apply_overrides, load_config, take
from .dataset import (
    DatasetConfig,
    TEST_FILE,
    TRAIN_FILE,
    VAL_FILE,
    build_dataset,
    check_disjoint_pools,
    read_manifest,
    read_rmds,
    scenes_match,
)
from .errors import (
    ConfigurationError,
    ContractError,
    DegenerateInputError,
    RangeError,
    RmeError,
)
from .evaluate import (
    baseline_predictor,
    ensure_parent_dir,
    evaluate_predictor,
    model_predictor,
    write_eval_csv,
    write_per_map_csv,
)
from .grid import nearest_cells
from .model import (
    ModelConfig,
    forward,
    init_model,
    load_model,
    save_model,
    with_standardization,
)
from .render import write_pgm
from .scene import PropagationConfig, SceneGenConfig, ShadowingConfig
from .sse import VARIANTS, SseConfig
from .train import TrainConfig, stderr_log, train_model, write_history_csv

DEFAULT_FACTORS = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)

VARIANT_LABELS = {
    "full": "Full CGFormer",
    "no-posenc": "w/o PosEnc",
    "no-b": "w/o B",
    "no-s": "w/o S",
}

BASELINE_LABELS = {"knn": "KNN", "idw": "IDW", "kriging": "Kriging", "gpr": "GPR"}


def note(message: str) -> None:
    print(f"[rme] {message}", file=sys.stderr)


# -- config plumbing ---------------------------------------------------------

def merged_config(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    return apply_overrides(cfg, args.set or [])


def resolve_seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    return take(cfg, "seed", 0, int)


def config_hash(cfg: dict, seed: int) -> str:
    blob = json.dumps({"config": cfg, "seed": seed}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _int_tuple(value, key: str) -> tuple[int, ...]:
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ConfigurationError(f"config key {key!r} must be a list of ints, got {value!r}")
    return tuple(value)


def _float_tuple(value, key: str) -> tuple[float, ...]:
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigurationError(
                f"config key {key!r} must be a list of numbers, got {value!r}")
        out.append(float(v))
    return tuple(out)


def scene_gen_from(cfg) -> SceneGenConfig:
    prop = PropagationConfig(
        path_loss_exponent=take(cfg, "propagation.exponent", 3.0, float),
        reference_distance_m=take(cfg, "propagation.reference_distance_m", 1.0, float),
        wall_loss_db=take(cfg, "propagation.wall_loss_db", 18.0, float),
    )
    return SceneGenConfig(
        width_m=take(cfg, "scene.width_m", 416.0, float),
        height_m=take(cfg, "scene.height_m", 416.0, float),
        delta_m=take(cfg, "scene.delta_m", 3.25, float),
        min_buildings=take(cfg, "scene.min_buildings", 8, int),
        max_buildings=take(cfg, "scene.max_buildings", 13, int),
        min_building_m=take(cfg, "scene.min_building_m", 24.0, float),
        max_building_m=take(cfg, "scene.max_building_m", 78.0, float),
        margin_m=take(cfg, "scene.margin_m", 12.0, float),
        num_transmitters=take(cfg, "scene.num_transmitters", 9, int),
        min_power_dbm=take(cfg, "scene.min_power_dbm", 25.0, float),
        max_power_dbm=take(cfg, "scene.max_power_dbm", 35.0, float),
        propagation=prop,
    )


def shadowing_from(cfg) -> ShadowingConfig:
    return ShadowingConfig(
        sigma_db=take(cfg, "shadowing.sigma_db", 4.0, float),
        correlation_m=take(cfg, "shadowing.correlation_m", 26.0, float),
        lattice_m=take(cfg, "shadowing.lattice_m", 1.625, float),
        enabled=take(cfg, "shadowing.enabled", True, bool),
    )


def dataset_config_from(cfg) -> DatasetConfig:
    return DatasetConfig(
        scene=scene_gen_from(cfg),
        shadowing=shadowing_from(cfg),
        train_pool=_int_tuple(
            take(cfg, "data.train_pool", (0, 1, 2, 3, 4, 5), tuple), "data.train_pool"),
        test_pool=_int_tuple(
            take(cfg, "data.test_pool", (6, 7, 8), tuple), "data.test_pool"),
        subregion_cells=take(cfg, "data.subregion_cells", 16, int),
        align_delta_m=take(cfg, "data.align_delta_m", 0.0, float),
        train_maps=take(cfg, "data.train_maps", 500, int),
        splits_per_region=take(cfg, "data.splits_per_region", 10, int),
        val_fraction=take(cfg, "data.val_fraction", 0.1, float),
        test_maps=take(cfg, "data.test_maps", 100, int),
        factor_min=take(cfg, "data.factor_min", 0.04, float),
        factor_max=take(cfg, "data.factor_max", 0.8, float),
        split_ratio=take(cfg, "data.split_ratio", 0.5, float),
        max_building_fraction=take(cfg, "data.max_building_fraction", 0.75, float),
    )


def model_config_from(cfg, variant: str, value_mean: float, value_std: float) -> ModelConfig:
    sse = SseConfig(
        freq_count=take(cfg, "sse.freq_count", 16, int),
        prior_channels=take(cfg, "sse.prior_channels", 16, int),
        conv_hidden=take(cfg, "sse.conv_hidden", 8, int),
        mlp_hidden=take(cfg, "sse.mlp_hidden", 64, int),
        embed_dim=take(cfg, "sse.embed_dim", 32, int),
        variant=variant,
    )
    base = ModelConfig(
        sse=sse,
        model_dim=take(cfg, "model.dim", 64, int),
        num_heads=take(cfg, "model.heads", 4, int),
        num_blocks=take(cfg, "model.blocks", 2, int),
        value_hidden=take(cfg, "model.value_hidden", 64, int),
        norm_keys=take(cfg, "model.norm_keys", False, bool),
    )
    return with_standardization(base, value_mean, value_std)


def train_config_from(cfg) -> TrainConfig:
    return TrainConfig(
        epochs=take(cfg, "train.epochs", 200, int),
        batch_size=take(cfg, "train.batch_size", 64, int),
        lr=take(cfg, "train.lr", 5e-4, float),
        patience=take(cfg, "train.patience", 10, int),
        min_delta=take(cfg, "train.min_delta", 0.0, float),
        shuffle_seed=take(cfg, "train.shuffle_seed", 0, int),
    )


def factors_from(args, cfg, key: str, default=DEFAULT_FACTORS) -> tuple[float, ...]:
    if getattr(args, "factors", None):
        from .config import parse_value
        raw = parse_value(args.factors)
        value = raw if isinstance(raw, tuple) else (raw,)
    else:
        value = take(cfg, key, default, tuple)
    factors = _float_tuple(value, key)
    for f in factors:
        if not (0.0 < f < 1.0):
            raise ConfigurationError(
                f"evaluation factors must be in (0, 1), got {f}")
    if len(set(factors)) != len(factors):
        raise ConfigurationError(f"duplicate evaluation factors in {factors}")
    return factors


def variant_from(args, cfg) -> str:
    variant = getattr(args, "variant", None) or take(cfg, "model.variant", "full", str)
    if variant not in VARIANTS:
        raise ConfigurationError(
            f"unknown variant {variant!r}, expected one of {VARIANTS}")
    return variant


def write_meta(path: str, payload: dict) -> None:
    ensure_parent_dir(path)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def sidecar(path: str, suffix: str) -> str:
    stem, _ = os.path.splitext(path)
    return stem + suffix


# -- dataset access ----------------------------------------------------------

def load_split(dataset_dir: str, filename: str):
    return read_rmds(os.path.join(dataset_dir, filename))


def open_dataset(dataset_dir: str) -> dict:
    manifest = read_manifest(dataset_dir)
    check_disjoint_pools(manifest)
    return manifest


def check_model_matches(model_cfg: ModelConfig, manifest: dict, what: str) -> None:
    # standardization constants are burned into the checkpoint at training
    # time, so an exact match identifies the dataset the model was fit to
    if (model_cfg.value_mean != manifest["value_mean"]
            or model_cfg.value_std != manifest["value_std"]):
        raise ContractError(
            f"model standardization (mean {model_cfg.value_mean}, "
            f"std {model_cfg.value_std}) does not match {what} "
            f"(mean {manifest['value_mean']}, std {manifest['value_std']}); "
            "the model was trained on a different dataset")


# -- commands ----------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = merged_config(args)
    seed = resolve_seed(args, cfg)
    dcfg = dataset_config_from(cfg)
    t0 = time.perf_counter()
    manifest = build_dataset(dcfg, seed, args.out)
    counts = manifest["counts"]
    note(f"gen: {counts['train']} train / {counts['val']} val / "
         f"{counts['test']} test records -> {args.out} "
         f"({time.perf_counter() - t0:.1f}s)")
    return 0


def cmd_train(args) -> int:
    cfg = merged_config(args)
    seed = resolve_seed(args, cfg)
    manifest = open_dataset(args.data)
    train = load_split(args.data, TRAIN_FILE)
    val = load_split(args.data, VAL_FILE)

    if args.resume:
        model = load_model(args.out)
        note(f"train: resuming {args.out} at epoch {model.epochs_trained}")
    else:
        variant = variant_from(args, cfg)
        mcfg = model_config_from(cfg, variant,
                                 manifest["value_mean"], manifest["value_std"])
        model = init_model(mcfg, seed)

    tcfg = train_config_from(cfg)
    log = None if args.quiet else stderr_log
    t0 = time.perf_counter()
    result = train_model(model, train, val, tcfg, log=log)
    save_model(model, args.out)
    write_history_csv(result.history, sidecar(args.out, ".history.csv"))
    note(f"train: variant={model.cfg.sse.variant} best val {result.best_val:.6g} "
         f"at epoch {result.best_epoch}, {len(result.history)} epochs run, "
         f"early stop {result.stopped_early} "
         f"({time.perf_counter() - t0:.1f}s)")
    return 0


def _tag_list(text: str, allowed, what: str) -> list[str]:
    tags = [t.strip() for t in text.split(",") if t.strip()]
    if not tags:
        raise ConfigurationError(f"no {what} named")
    for tag in tags:
        if tag not in allowed:
            raise ConfigurationError(
                f"unknown {what} {tag!r}, expected one of {tuple(allowed)}")
    if len(set(tags)) != len(tags):
        raise ConfigurationError(f"duplicate {what} in {tags}")
    return tags


def _run_sweep(args, cfg, model_path: str | None, baseline_tags: list[str]) -> int:
    seed = resolve_seed(args, cfg)
    manifest = open_dataset(args.data)
    test = load_split(args.data, TEST_FILE)
    factors = factors_from(args, cfg, "eval.factors")

    results: dict[str, dict] = {}
    meta_methods: dict[str, dict] = {}

    if model_path is not None:
        model = load_model(model_path)
        check_model_matches(model.cfg, manifest, f"dataset {args.data}")
        label = VARIANT_LABELS[model.cfg.sse.variant]
        t0 = time.perf_counter()
        results[label] = evaluate_predictor(model_predictor(model), test, factors, seed)
        note(f"eval: {label} ({time.perf_counter() - t0:.1f}s)")
        meta_methods[label] = {"kind": "model", "path": model_path,
                               "epochs_trained": model.epochs_trained}

    if baseline_tags:
        val = load_split(args.data, VAL_FILE)
        for tag in baseline_tags:
            t0 = time.perf_counter()
            tuned = tune_baseline(tag, val)
            label = BASELINE_LABELS[tag]
            results[label] = evaluate_predictor(
                baseline_predictor(tag, tuned.hyper), test, factors, seed)
            note(f"eval: {label} hyper={tuned.hyper} "
                 f"val rmse {tuned.val_rmse:.4g} ({time.perf_counter() - t0:.1f}s)")
            meta_methods[label] = {"kind": "baseline", "method": tag,
                                   "hyper": tuned.hyper, "val_rmse": tuned.val_rmse}

    ensure_parent_dir(args.out)
    write_eval_csv(results, args.out)
    write_per_map_csv(results, sidecar(args.out, ".per_map.csv"))
    write_meta(sidecar(args.out, ".meta.json"), {
        "config_hash": config_hash(cfg, seed),
        "dataset": args.data,
        "factors": list(factors),
        "maps": len(test),
        "methods": meta_methods,
        "seed": seed,
    })
    return 0


def cmd_eval(args) -> int:
    cfg = merged_config(args)
    tags = _tag_list(args.baselines, BASELINE_LABELS, "baseline") if args.baselines else []
    return _run_sweep(args, cfg, args.model, tags)


def cmd_baseline(args) -> int:
    cfg = merged_config(args)
    tags = _tag_list(args.methods or ",".join(METHODS), BASELINE_LABELS, "baseline")
    return _run_sweep(args, cfg, None, tags)


def cmd_ablate(args) -> int:
    cfg = merged_config(args)
    seed = resolve_seed(args, cfg)
    manifest = open_dataset(args.data)
    train = load_split(args.data, TRAIN_FILE)
    val = load_split(args.data, VAL_FILE)
    test = load_split(args.data, TEST_FILE)

    if args.seeds:
        from .config import parse_value
        raw = parse_value(args.seeds)
        seeds = _int_tuple(raw if isinstance(raw, tuple) else (raw,), "--seeds")
    else:
        seeds = _int_tuple(take(cfg, "ablate.seeds", (0, 1, 2), tuple), "ablate.seeds")
    factors = factors_from(args, cfg, "ablate.factors", default=(0.25,))
    tcfg_base = train_config_from(cfg)

    os.makedirs(args.out, exist_ok=True)
    run_rows: list[tuple[str, int, float, float]] = []
    table_rows: list[tuple[str, float]] = []

    def flush(partial: bool) -> None:
        with open(os.path.join(args.out, "ablation.csv"), "w") as fh:
            fh.write("variant,mean_rmse_db\n")
            for label, mean_rmse in table_rows:
                fh.write(f"{label},{mean_rmse:.12g}\n")
        with open(os.path.join(args.out, "ablation_runs.csv"), "w") as fh:
            fh.write("variant,seed,factor,rmse_mean\n")
            for label, run_seed, factor, value in run_rows:
                fh.write(f"{label},{run_seed},{factor:.12g},{value:.12g}\n")
        write_meta(os.path.join(args.out, "ablation_meta.json"), {
            "config_hash": config_hash(cfg, seed),
            "dataset": args.data,
            "eval_seed": seed,
            "factors": list(factors),
            "partial": partial,
            "seeds": list(seeds),
            "variants": list(VARIANTS),
        })

    try:
        for variant in VARIANTS:
            label = VARIANT_LABELS[variant]
            per_seed: list[float] = []
            for run_seed in seeds:
                mcfg = model_config_from(cfg, variant,
                                         manifest["value_mean"], manifest["value_std"])
                model = init_model(mcfg, run_seed)
                tcfg = replace(tcfg_base, shuffle_seed=run_seed)
                t0 = time.perf_counter()
                result = train_model(model, train, val, tcfg)
                sweep = evaluate_predictor(model_predictor(model), test, factors, seed)
                for factor in sorted(sweep):
                    run_rows.append((label, run_seed, factor, sweep[factor]["rmse_mean"]))
                per_seed.append(float(np.mean(
                    [sweep[f]["rmse_mean"] for f in sweep])))
                note(f"ablate: {label} seed {run_seed} rmse {per_seed[-1]:.4g} "
                     f"(best val {result.best_val:.4g}, "
                     f"{time.perf_counter() - t0:.1f}s)")
            table_rows.append((label, float(np.mean(per_seed))))
    except Exception:
        flush(partial=True)
        note(f"ablate: aborted, partial results in {args.out}")
        raise
    flush(partial=False)
    note(f"ablate: table in {args.out}/ablation.csv")
    return 0


def cmd_offgrid(args) -> int:
    cfg = merged_config(args)
    seed = resolve_seed(args, cfg)
    coarse_manifest = open_dataset(args.coarse)
    fine_manifest = open_dataset(args.fine)
    if not scenes_match(coarse_manifest, fine_manifest):
        raise ContractError(
            f"datasets {args.coarse} and {args.fine} describe different scenes; "
            "cross-resolution evaluation needs the same layout seed, region, "
            "pools and propagation settings")

    model = load_model(args.model)
    check_model_matches(model.cfg, coarse_manifest, f"coarse dataset {args.coarse}")

    coarse_test = load_split(args.coarse, TEST_FILE)
    fine_test = load_split(args.fine, TEST_FILE)
    factors = factors_from(args, cfg, "offgrid.factors", default=(0.25,))
    predict = model_predictor(model)

    # spacing ratio sets how much denser the fine grid samples at equal
    # factor; the matched-count entry divides the factor back out
    ratio = (coarse_manifest["delta_m"] / fine_manifest["delta_m"]) ** 2
    fine_factors = sorted({f for f in factors} | {f / ratio for f in factors})

    t0 = time.perf_counter()
    coarse_sweep = evaluate_predictor(predict, coarse_test, sorted(factors), seed)
    fine_sweep = evaluate_predictor(predict, fine_test, fine_factors, seed)
    note(f"offgrid: {len(coarse_test)} coarse + {len(fine_test)} fine maps "
         f"({time.perf_counter() - t0:.1f}s)")

    ensure_parent_dir(args.out)
    with open(args.out, "w") as fh:
        fh.write("dataset,delta_m,factor,rmse_mean,maps\n")
        for name, manifest, sweep in (("coarse", coarse_manifest, coarse_sweep),
                                      ("fine", fine_manifest, fine_sweep)):
            for factor in sorted(sweep):
                entry = sweep[factor]
                fh.write(f"{name},{manifest['delta_m']:.12g},{factor:.12g},"
                         f"{entry['rmse_mean']:.12g},{len(entry['per_map'])}\n")
    with open(sidecar(args.out, ".per_map.csv"), "w") as fh:
        fh.write("dataset,factor,map_index,rmse\n")
        for name, sweep in (("coarse", coarse_sweep), ("fine", fine_sweep)):
            for factor in sorted(sweep):
                for mi, value in enumerate(sweep[factor]["per_map"]):
                    fh.write(f"{name},{factor:.12g},{mi},{value:.12g}\n")
    write_meta(sidecar(args.out, ".meta.json"), {
        "coarse": {"path": args.coarse, "delta_m": coarse_manifest["delta_m"]},
        "config_hash": config_hash(cfg, seed),
        "factors": list(factors),
        "fine": {"path": args.fine, "delta_m": fine_manifest["delta_m"],
                 "matched_count_factors": [f / ratio for f in factors]},
        "model": args.model,
        "seed": seed,
    })
    return 0


def _record_for_render(args):
    files = {"train": TRAIN_FILE, "val": VAL_FILE, "test": TEST_FILE}
    if args.split not in files:
        raise ConfigurationError(
            f"unknown split {args.split!r}, expected one of {tuple(files)}")
    records = load_split(args.data, files[args.split])
    if not (0 <= args.index < len(records)):
        raise RangeError(
            f"record index {args.index} out of range for "
            f"{len(records)} {args.split} records")
    return records[args.index]


def cmd_render(args) -> int:
    record = _record_for_render(args)
    spec = record.grid_spec()
    b_mask = record.b_mask.astype(bool)
    values = np.zeros((spec.rows, spec.cols))

    if args.model:
        model = load_model(args.model)
        open_rows, open_cols = np.nonzero(~b_mask)
        xs = spec.origin_x + (open_cols + 0.5) * spec.delta_x
        ys = spec.origin_y + (open_rows + 0.5) * spec.delta_y
        query_xy = np.column_stack([xs, ys])
        pred = forward(model, record, query_xy).data
        values[open_rows, open_cols] = pred
    else:
        xy = np.vstack([record.meas_xy, record.target_xy])
        vals = np.concatenate([record.meas_values, record.target_values])
        rows, cols, _ = nearest_cells(xy[:, 0], xy[:, 1], spec)
        seen = np.zeros_like(b_mask)
        values[rows, cols] = vals
        seen[rows, cols] = True
        if not np.all(seen | b_mask):
            missing = int((~(seen | b_mask)).sum())
            raise DegenerateInputError(
                f"record leaves {missing} open cells without a value; "
                "render a full-coverage test record or pass --model")

    ensure_parent_dir(args.out)
    write_pgm(args.out, values, b_mask)
    note(f"render: {spec.rows}x{spec.cols} -> {args.out}")
    return 0


# -- argument parsing --------------------------------------------------------

def _add_common(sub) -> None:
    sub.add_argument("--config", help="key = value config file")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override one config entry (repeatable)")
    sub.add_argument("--seed", type=int, help="master seed (default: config seed or 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rme", description="grid-free radio map estimation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train an estimator")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="model checkpoint path (.rmod)")
    p.add_argument("--variant", choices=VARIANTS, help="embedding variant")
    p.add_argument("--resume", action="store_true",
                   help="continue training the checkpoint at --out")
    p.add_argument("--quiet", action="store_true", help="no per-epoch log lines")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="RMSE sweep for a trained model")
    _add_common(p)
    p.add_argument("--model", required=True, help="model checkpoint (.rmod)")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--baselines", help="comma list of baselines to run alongside")
    p.add_argument("--factors", help="comma list of sampling factors")
    p.add_argument("--out", required=True, help="summary CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="tune and evaluate classical baselines")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--methods", help=f"comma list from {METHODS} (default: all)")
    p.add_argument("--factors", help="comma list of sampling factors")
    p.add_argument("--out", required=True, help="summary CSV path")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("ablate", help="train and compare embedding variants")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--seeds", help="comma list of training seeds")
    p.add_argument("--factors", help="comma list of sampling factors")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("offgrid", help="evaluate one model at two resolutions")
    _add_common(p)
    p.add_argument("--model", required=True, help="model checkpoint (.rmod)")
    p.add_argument("--coarse", required=True, help="training-resolution dataset dir")
    p.add_argument("--fine", required=True, help="finer-resolution dataset dir")
    p.add_argument("--factors", help="comma list of sampling factors")
    p.add_argument("--out", required=True, help="summary CSV path")
    p.set_defaults(func=cmd_offgrid)

    p = sub.add_parser("render", help="export a heatmap image")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", default="test", help="train, val or test (default test)")
    p.add_argument("--index", type=int, default=0, help="record index (default 0)")
    p.add_argument("--model", help="render model predictions instead of stored values")
    p.add_argument("--out", required=True, help="output image path (.pgm)")
    p.set_defaults(func=cmd_render)

    return parser


def _error_category(exc: RmeError) -> str:
    name = type(exc).__name__
    if name.endswith("Error"):
        name = name[: -len("Error")]
    return re.sub(r"(?<!^)(?=[A-Z])", "-", name).lower()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RmeError as exc:
        print(f"error: {_error_category(exc)}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
