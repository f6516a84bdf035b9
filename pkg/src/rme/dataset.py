"""Dataset files and the generation pipeline.

Sample container format (extension ``.rmds``): magic ``RMDS``, a u16 format
version, then records back to back until end of file.  Every number is
little-endian; floats are f64.  One record is

    extent            4 x f64   (x0, y0, width, height in meters)
    sampling factor   f64
    counts            u32 n_meas, u32 n_target
    meas coords       2*n_meas x f64, (x, y) pairs
    meas values       n_meas x f64
    target coords     2*n_target x f64
    target values     n_target x f64
    b_mask            u32 rows, u32 cols, rows*cols x u8
    s_mask            u32 rows, u32 cols, rows*cols x u8

A generation run writes train/val/test files plus ``manifest.json`` carrying
full provenance: master seed, scene and shadowing parameters, transmitter
pools, the per-map pairings and sampling factors, and the value statistics
used for standardization.
"""

from __future__ import annotations

import json
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataFormatError, DegenerateInputError
from .scene import (
    RadioMap,
    Sample,
    Scene,
    SceneGenConfig,
    ShadowingConfig,
    Extent,
    aggregate_two_tx,
    draw_subregion_origin,
    extract_subregion,
    generate_single_tx_map,
    open_area_fraction,
    random_scene,
    sample_cells,
    split_cells,
)
from .seeding import derive_seed, make_rng

MAGIC = b"RMDS"
FORMAT_VERSION = 1

TRAIN_FILE = "train.rmds"
VAL_FILE = "val.rmds"
TEST_FILE = "test.rmds"
MANIFEST_FILE = "manifest.json"


def worker_count() -> int:
    """Parallelism cap: RME_THREADS if set, else the logical core count."""
    raw = os.environ.get("RME_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise ConfigurationError(f"RME_THREADS must be an integer, got {raw!r}") from exc
        if n < 1:
            raise ConfigurationError(f"RME_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _pack_mask(mask: np.ndarray) -> bytes:
    rows, cols = mask.shape
    return struct.pack("<II", rows, cols) + np.ascontiguousarray(
        mask, dtype=np.uint8).tobytes()


def sample_to_bytes(sample: Sample) -> bytes:
    parts = [
        struct.pack("<4d", sample.extent.x0, sample.extent.y0,
                    sample.extent.width, sample.extent.height),
        struct.pack("<d", sample.sampling_factor),
        struct.pack("<II", len(sample.meas_values), len(sample.target_values)),
        np.ascontiguousarray(sample.meas_xy, dtype="<f8").tobytes(),
        np.ascontiguousarray(sample.meas_values, dtype="<f8").tobytes(),
        np.ascontiguousarray(sample.target_xy, dtype="<f8").tobytes(),
        np.ascontiguousarray(sample.target_values, dtype="<f8").tobytes(),
        _pack_mask(sample.b_mask),
        _pack_mask(sample.s_mask),
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.at = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.at + n > len(self.blob):
            raise DataFormatError(f"{self.path}: truncated record at byte {self.at}")
        out = self.blob[self.at:self.at + n]
        self.at += n
        return out

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").copy()

    def u32(self, count: int) -> tuple:
        return struct.unpack(f"<{count}I", self.take(4 * count))

    def mask(self) -> np.ndarray:
        rows, cols = self.u32(2)
        if rows * cols > len(self.blob):
            raise DataFormatError(f"{self.path}: implausible mask dims {rows}x{cols}")
        data = np.frombuffer(self.take(rows * cols), dtype=np.uint8)
        return data.reshape(rows, cols).copy()

    @property
    def done(self) -> bool:
        return self.at >= len(self.blob)


def write_rmds(samples: list[Sample], path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        for sample in samples:
            fh.write(sample_to_bytes(sample))


def read_rmds(path: str) -> list[Sample]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataFormatError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<H", blob[4:6])
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported format version {version}")
    reader = _Reader(blob, path)
    reader.at = 6
    samples: list[Sample] = []
    while not reader.done:
        x0, y0, width, height = struct.unpack("<4d", reader.take(32))
        (factor,) = struct.unpack("<d", reader.take(8))
        n, q = reader.u32(2)
        meas_xy = reader.f64(2 * n).reshape(n, 2)
        meas_values = reader.f64(n)
        target_xy = reader.f64(2 * q).reshape(q, 2)
        target_values = reader.f64(q)
        b_mask = reader.mask()
        s_mask = reader.mask()
        if s_mask.shape != b_mask.shape:
            raise DataFormatError(f"{path}: mask shapes differ in record {len(samples)}")
        samples.append(Sample(
            extent=Extent(x0, y0, width, height),
            meas_xy=meas_xy, meas_values=meas_values,
            target_xy=target_xy, target_values=target_values,
            b_mask=b_mask, s_mask=s_mask,
            sampling_factor=factor,
        ))
    return samples


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetConfig:
    scene: SceneGenConfig = field(default_factory=SceneGenConfig)
    shadowing: ShadowingConfig = field(default_factory=ShadowingConfig)
    train_pool: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    test_pool: tuple[int, ...] = (6, 7, 8)
    subregion_cells: int = 16
    align_delta_m: float = 0.0   # 0 means "use the map spacing"
    train_maps: int = 500
    splits_per_region: int = 10
    val_fraction: float = 0.1
    test_maps: int = 100
    factor_min: float = 0.04
    factor_max: float = 0.8
    split_ratio: float = 0.5
    max_building_fraction: float = 0.75

    def validate(self) -> None:
        if not self.train_pool or not self.test_pool:
            raise ConfigurationError("both transmitter pools must be non-empty")
        if set(self.train_pool) & set(self.test_pool):
            raise ConfigurationError(
                f"transmitter pools overlap: {sorted(set(self.train_pool) & set(self.test_pool))}")
        needed = max(max(self.train_pool), max(self.test_pool)) + 1
        if needed > self.scene.num_transmitters:
            raise ConfigurationError(
                f"pools reference transmitter {needed - 1} but the scene has "
                f"{self.scene.num_transmitters}")
        if len(self.train_pool) < 2 or len(self.test_pool) < 2:
            raise ConfigurationError("each pool needs at least 2 transmitters to pair")
        if not (0.0 < self.factor_min <= self.factor_max <= 1.0):
            raise ConfigurationError(
                f"bad factor range [{self.factor_min}, {self.factor_max}]")
        if self.subregion_cells < 2:
            raise ConfigurationError(f"sub-region must be >= 2 cells, got {self.subregion_cells}")
        if self.train_maps < 1 or self.test_maps < 1 or self.splits_per_region < 1:
            raise ConfigurationError("map and split counts must be positive")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ConfigurationError(f"bad validation fraction {self.val_fraction}")
        if not (0.0 <= self.max_building_fraction < 1.0):
            raise ConfigurationError(
                f"bad building fraction limit {self.max_building_fraction}")

    def align_cells(self) -> int:
        if self.align_delta_m <= 0.0:
            return 1
        ratio = self.align_delta_m / self.scene.delta_m
        cells = round(ratio)
        if cells < 1 or abs(ratio - cells) > 1e-9:
            raise ConfigurationError(
                f"alignment spacing {self.align_delta_m} is not an integer multiple "
                f"of the map spacing {self.scene.delta_m}")
        return cells


def _raw_maps(cfg: DatasetConfig, scene: Scene, seed: int,
              workers: int) -> dict[int, RadioMap]:
    indices = sorted(set(cfg.train_pool) | set(cfg.test_pool))

    def build(idx: int) -> RadioMap:
        return generate_single_tx_map(scene, idx, cfg.shadowing,
                                      derive_seed(seed, "shadow", idx))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            maps = list(pool.map(build, indices))
    else:
        maps = [build(i) for i in indices]
    return dict(zip(indices, maps))


def _build_region_samples(cfg: DatasetConfig, scene: Scene, seed: int, tag: str,
                          map_index: int, raw: dict[int, RadioMap],
                          pool: tuple[int, ...], factor: float | None,
                          n_splits: int):
    """Samples plus provenance for one aggregated map; deterministic per index.

    Window rejection uses building coverage by area, not by cell count, so
    builds of the same scene at different spacings draw identical windows.
    """
    rng = make_rng(seed, tag, map_index)
    pair_positions = rng.choice(len(pool), size=2, replace=False)
    pair = (pool[int(pair_positions[0])], pool[int(pair_positions[1])])
    agg = aggregate_two_tx(raw[pair[0]], raw[pair[1]])
    size = (cfg.subregion_cells, cfg.subregion_cells)
    align = cfg.align_cells()

    sub = None
    for _ in range(200):
        origin = draw_subregion_origin(agg, size, rng, align)
        candidate = extract_subregion(agg, origin, size)
        free = open_area_fraction(candidate.extent, scene.buildings)
        if 1.0 - free <= cfg.max_building_fraction:
            sub = candidate
            break
    if sub is None:
        raise DegenerateInputError(
            f"no {size} window with <= {cfg.max_building_fraction:.0%} building "
            "coverage found; buildings fill too much of the scene")

    used_factor = float(rng.uniform(cfg.factor_min, cfg.factor_max)) if factor is None else factor
    chosen = sample_cells(sub, used_factor, rng)
    samples = [split_cells(sub, chosen, cfg.split_ratio, rng, used_factor)
               for _ in range(n_splits)]
    meta = {"pair": list(pair), "factor": used_factor, "origin": [int(origin[0]), int(origin[1])]}
    return samples, meta


def build_dataset(cfg: DatasetConfig, seed: int, out_dir: str) -> dict:
    """Generate train/val/test files plus the manifest; returns the manifest."""
    cfg.validate()
    workers = worker_count()
    os.makedirs(out_dir, exist_ok=True)
    scene = random_scene(cfg.scene, derive_seed(seed, "scene"))
    raw = _raw_maps(cfg, scene, seed, workers)

    def run(tag, count, pool, factor, n_splits):
        def one(i):
            return _build_region_samples(cfg, scene, seed, tag, i, raw, pool,
                                         factor, n_splits)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                return list(ex.map(one, range(count)))
        return [one(i) for i in range(count)]

    train_built = run("train-map", cfg.train_maps, cfg.train_pool, None,
                      cfg.splits_per_region)
    test_built = run("test-map", cfg.test_maps, cfg.test_pool, 1.0, 1)

    train_all: list[Sample] = []
    train_meta = []
    for samples, meta in train_built:
        train_all.extend(samples)
        train_meta.append(meta)
    test_all = [samples[0] for samples, _ in test_built]
    test_meta = [meta for _, meta in test_built]

    perm = make_rng(seed, "train-val-split").permutation(len(train_all))
    n_val = int(round(cfg.val_fraction * len(train_all)))
    val_samples = [train_all[i] for i in perm[:n_val]]
    train_samples = [train_all[i] for i in perm[n_val:]]

    joined = np.concatenate([
        np.concatenate([s.meas_values, s.target_values]) for s in train_samples
    ])
    value_mean = float(joined.mean())
    value_std = float(max(joined.std(), 1e-6))

    write_rmds(train_samples, os.path.join(out_dir, TRAIN_FILE))
    write_rmds(val_samples, os.path.join(out_dir, VAL_FILE))
    write_rmds(test_all, os.path.join(out_dir, TEST_FILE))

    manifest = {
        "format": "rme-dataset",
        "version": FORMAT_VERSION,
        "seed": int(seed),
        "scene_seed": derive_seed(seed, "scene"),
        "region_m": [cfg.scene.width_m, cfg.scene.height_m],
        "delta_m": cfg.scene.delta_m,
        "align_delta_m": cfg.align_delta_m if cfg.align_delta_m > 0.0 else cfg.scene.delta_m,
        "subregion_cells": cfg.subregion_cells,
        "train_pool": list(cfg.train_pool),
        "test_pool": list(cfg.test_pool),
        "splits_per_region": cfg.splits_per_region,
        "factor_range": [cfg.factor_min, cfg.factor_max],
        "split_ratio": cfg.split_ratio,
        "counts": {"train": len(train_samples), "val": len(val_samples),
                   "test": len(test_all)},
        "value_mean": value_mean,
        "value_std": value_std,
        "propagation": {
            "path_loss_exponent": cfg.scene.propagation.path_loss_exponent,
            "reference_distance_m": cfg.scene.propagation.reference_distance_m,
            "wall_loss_db": cfg.scene.propagation.wall_loss_db,
        },
        "shadowing": {
            "sigma_db": cfg.shadowing.sigma_db,
            "correlation_m": cfg.shadowing.correlation_m,
            "lattice_m": cfg.shadowing.lattice_m,
            "enabled": cfg.shadowing.enabled,
        },
        "scene_gen": {
            "min_buildings": cfg.scene.min_buildings,
            "max_buildings": cfg.scene.max_buildings,
            "min_building_m": cfg.scene.min_building_m,
            "max_building_m": cfg.scene.max_building_m,
            "margin_m": cfg.scene.margin_m,
            "num_transmitters": cfg.scene.num_transmitters,
            "power_range_dbm": [cfg.scene.min_power_dbm, cfg.scene.max_power_dbm],
        },
        "train_regions": train_meta,
        "test_regions": test_meta,
    }
    with open(os.path.join(out_dir, MANIFEST_FILE), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def read_manifest(dataset_dir: str) -> dict:
    path = os.path.join(dataset_dir, MANIFEST_FILE)
    if not os.path.exists(path):
        raise DataFormatError(f"no manifest at {path}")
    with open(path) as fh:
        return json.load(fh)


def manifest_for(rmds_path: str) -> dict:
    """Manifest that sits next to a dataset file."""
    return read_manifest(os.path.dirname(os.path.abspath(rmds_path)))


def check_disjoint_pools(manifest: dict) -> None:
    overlap = set(manifest.get("train_pool", [])) & set(manifest.get("test_pool", []))
    if overlap:
        raise ConfigurationError(f"manifest pools overlap: {sorted(overlap)}")


def scenes_match(a: dict, b: dict) -> bool:
    """Same physical scene: layout seed, region, pools; spacing may differ."""
    keys = ["scene_seed", "region_m", "train_pool", "test_pool", "scene_gen",
            "propagation", "shadowing"]
    return all(a.get(k) == b.get(k) for k in keys)
