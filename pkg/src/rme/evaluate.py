"""Held-out evaluation at configurable measurement densities.

Test records store full coverage: every open cell of a window appears with
its true value.  Evaluation resamples each record down to a measurement
fraction, predicts the remaining cells, and reports per-map RMSE averaged
over maps.  The resampling seed is derived from (master seed, map index,
factor), so every factor sweep is reproducible in isolation and adding
factors never disturbs existing ones.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigurationError, ContractError, DegenerateInputError
from .grid import nearest_cells
from .scene import Sample
from .seeding import make_rng


def resample_record(record: Sample, factor: float, rng) -> Sample:
    """Split a full-coverage record into measurements and prediction targets."""
    if not (0.0 < factor < 1.0):
        raise ConfigurationError(
            f"evaluation factor must be in (0, 1), got {factor}")
    xy = np.vstack([record.meas_xy, record.target_xy])
    values = np.concatenate([record.meas_values, record.target_values])
    n_open = len(values)
    k = math.ceil(factor * n_open)
    if k >= n_open:
        raise DegenerateInputError(
            f"factor {factor} leaves no target cells in a {n_open}-cell record")

    perm = rng.permutation(n_open)
    obs, tgt = perm[:k], perm[k:]
    spec = record.grid_spec()
    s_mask = np.zeros_like(record.s_mask)
    rows, cols, _ = nearest_cells(xy[obs, 0], xy[obs, 1], spec)
    s_mask[rows, cols] = 1

    return Sample(
        extent=record.extent,
        meas_xy=xy[obs], meas_values=values[obs],
        target_xy=xy[tgt], target_values=values[tgt],
        b_mask=record.b_mask, s_mask=s_mask,
        sampling_factor=factor,
    )


def rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ConfigurationError(f"prediction {pred.shape} vs truth {truth.shape}")
    if pred.size == 0:
        raise DegenerateInputError("empty prediction set")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def _eval_workers() -> int:
    from .dataset import worker_count
    return worker_count()


def evaluate_predictor(predict, records: list[Sample], factors: list[float],
                       master_seed: int) -> dict[float, dict]:
    """Sweep factors x records; predict(sample) -> values at sample.target_xy.

    Returns {factor: {"rmse_mean": float, "per_map": [float, ...]}}.
    Resampled splits depend only on (master_seed, map index, factor), never
    on worker count or method.
    """
    if not records:
        raise DegenerateInputError("no evaluation records")
    workers = _eval_workers()
    out: dict[float, dict] = {}
    for factor in factors:
        resampled = [
            resample_record(rec, factor, make_rng(master_seed, "eval", mi, factor))
            for mi, rec in enumerate(records)
        ]

        def one(sample: Sample) -> float:
            return rmse(predict(sample), sample.target_values)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                per_map = list(ex.map(one, resampled))
        else:
            per_map = [one(s) for s in resampled]
        out[factor] = {"rmse_mean": float(np.mean(per_map)), "per_map": per_map}
    return out


def model_predictor(model):
    """Adapter: a trained model as an evaluate_predictor callable."""
    from .model import forward

    def predict(sample: Sample) -> np.ndarray:
        return forward(model, sample, sample.target_xy).data

    return predict


def baseline_predictor(method: str, hyper: dict):
    from .baselines import predict_baseline

    def predict(sample: Sample) -> np.ndarray:
        return predict_baseline(method, hyper, sample.meas_xy,
                                sample.meas_values, sample.target_xy)

    return predict


def write_eval_csv(results: dict[str, dict[float, dict]], path: str) -> None:
    """Wide summary table: one row per factor, one column per method.

    Column order follows the dict's insertion order so callers control the
    layout; every method must cover the same factor set.
    """
    methods = list(results)
    if not methods:
        raise DegenerateInputError("no results to write")
    factor_sets = {tuple(sorted(results[m])) for m in methods}
    if len(factor_sets) > 1:
        raise ContractError("methods were evaluated at different factor sets")
    with open(path, "w") as fh:
        fh.write("factor," + ",".join(methods) + "\n")
        for factor in sorted(results[methods[0]]):
            cells = ",".join(f"{results[m][factor]['rmse_mean']:.12g}" for m in methods)
            fh.write(f"{factor:.12g},{cells}\n")


def write_per_map_csv(results: dict[str, dict[float, dict]], path: str) -> None:
    """Long detail table: (method, factor, map index) -> RMSE."""
    with open(path, "w") as fh:
        fh.write("method,factor,map_index,rmse\n")
        for method in results:
            sweep = results[method]
            for factor in sorted(sweep):
                for mi, value in enumerate(sweep[factor]["per_map"]):
                    fh.write(f"{method},{factor:.12g},{mi},{value:.12g}\n")


def ensure_parent_dir(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
