"""Classical interpolators used as comparison points.

All four share one calling shape: measurement coordinates and readings in,
predictions at query coordinates out.  Hyperparameters come from a small,
fixed grid tuned on held-out validation samples; ties keep the first grid
entry so tuning is reproducible.

Kriging weights are invariant under scaling of the variogram, and the GP
posterior mean is invariant under joint scaling of signal and noise, so both
grids fix the overall scale and only search shape parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, NumericError
from .scene import Sample

METHODS = ("knn", "idw", "kriging", "gpr")

EXACT_HIT = 1e-12

KNN_GRID = (1, 3, 5, 9, 15)
IDW_GRID = (1.0, 2.0, 3.0)
KRIGING_RANGE_CELLS = (1.0, 2.0, 4.0, 8.0, 16.0)
KRIGING_NUGGET_RATIOS = (0.0, 0.01, 0.1)
GPR_LENGTH_CELLS = (1.0, 2.0, 4.0, 8.0, 16.0)
GPR_NOISE_RATIOS = (1e-4, 1e-2, 1e-1)


def _pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(len(a), len(b)) Euclidean distances."""
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def _check_inputs(meas_xy, meas_values, query_xy):
    meas_xy = np.asarray(meas_xy, dtype=np.float64)
    meas_values = np.asarray(meas_values, dtype=np.float64)
    query_xy = np.asarray(query_xy, dtype=np.float64)
    if meas_xy.ndim != 2 or meas_xy.shape[1] != 2 or query_xy.ndim != 2 \
            or query_xy.shape[1] != 2:
        raise ConfigurationError("coordinates must be (n, 2) arrays")
    if meas_values.shape != (meas_xy.shape[0],):
        raise ConfigurationError(
            f"{meas_xy.shape[0]} points but {meas_values.shape} values")
    if meas_xy.shape[0] < 1:
        raise DegenerateInputError("no measurements to interpolate from")
    if not (np.all(np.isfinite(meas_xy)) and np.all(np.isfinite(meas_values))
            and np.all(np.isfinite(query_xy))):
        raise NumericError("non-finite baseline inputs")
    return meas_xy, meas_values, query_xy


def knn_predict(meas_xy, meas_values, query_xy, k: int) -> np.ndarray:
    """Unweighted mean of the k nearest measurements; index breaks ties."""
    meas_xy, meas_values, query_xy = _check_inputs(meas_xy, meas_values, query_xy)
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    if k > meas_xy.shape[0]:
        raise DegenerateInputError(
            f"k={k} neighbors requested from {meas_xy.shape[0]} measurements")
    d = _pairwise_dist(query_xy, meas_xy)
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return meas_values[order].mean(axis=1)


def idw_predict(meas_xy, meas_values, query_xy, power: float) -> np.ndarray:
    """Inverse-distance weighting; a query on top of a measurement copies it."""
    meas_xy, meas_values, query_xy = _check_inputs(meas_xy, meas_values, query_xy)
    if power <= 0.0:
        raise ConfigurationError(f"power must be positive, got {power}")
    d = _pairwise_dist(query_xy, meas_xy)
    out = np.zeros(query_xy.shape[0])
    for qi in range(query_xy.shape[0]):
        row = d[qi]
        hits = np.flatnonzero(row < EXACT_HIT)
        if hits.size:
            out[qi] = meas_values[hits[0]]
            continue
        w = 1.0 / row ** power
        out[qi] = (w @ meas_values) / w.sum()
    return out


def variogram(d: np.ndarray, nugget: float, sill: float, range_m: float) -> np.ndarray:
    """Exponential model; identically zero at zero lag."""
    out = nugget + (sill - nugget) * (1.0 - np.exp(-d / range_m))
    return np.where(d == 0.0, 0.0, out)


def kriging_predict(meas_xy, meas_values, query_xy, nugget: float, sill: float,
                    range_m: float) -> tuple[np.ndarray, bool]:
    """Ordinary kriging; returns (predictions, fell_back_to_idw).

    The (n+1)^2 system enforces weights summing to one.  A singular system
    (duplicate points with no nugget, degenerate layouts) falls back to
    inverse-distance weighting with power 2 and reports it.
    """
    meas_xy, meas_values, query_xy = _check_inputs(meas_xy, meas_values, query_xy)
    if range_m <= 0.0 or sill <= 0.0 or nugget < 0.0 or nugget > sill:
        raise ConfigurationError(
            f"bad variogram: nugget={nugget}, sill={sill}, range={range_m}")
    n = meas_xy.shape[0]
    a = np.ones((n + 1, n + 1))
    a[:n, :n] = variogram(_pairwise_dist(meas_xy, meas_xy), nugget, sill, range_m)
    a[n, n] = 0.0
    b = np.ones((n + 1, query_xy.shape[0]))
    b[:n, :] = variogram(_pairwise_dist(meas_xy, query_xy), nugget, sill, range_m)
    try:
        lam = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return idw_predict(meas_xy, meas_values, query_xy, power=2.0), True
    return lam[:n, :].T @ meas_values, False


def gpr_predict(meas_xy, meas_values, query_xy, length_scale: float,
                signal_var: float, noise_var: float) -> np.ndarray:
    """GP posterior mean with an RBF kernel around the data mean.

    Cholesky jitter escalates by 10x at most three times before giving up;
    anything that unstable is a configuration problem, not a prediction.
    """
    meas_xy, meas_values, query_xy = _check_inputs(meas_xy, meas_values, query_xy)
    if length_scale <= 0.0 or signal_var <= 0.0 or noise_var < 0.0:
        raise ConfigurationError(
            f"bad kernel: length={length_scale}, signal={signal_var}, "
            f"noise={noise_var}")
    d2 = _pairwise_dist(meas_xy, meas_xy) ** 2
    k = signal_var * np.exp(-d2 / (2.0 * length_scale ** 2))
    mu = float(meas_values.mean())
    centered = meas_values - mu

    jitter = 0.0
    base = noise_var if noise_var > 0.0 else 1e-10 * signal_var
    for attempt in range(4):
        try:
            chol = np.linalg.cholesky(k + (noise_var + jitter) * np.eye(len(centered)))
            break
        except np.linalg.LinAlgError:
            if attempt == 3:
                raise NumericError(
                    f"kernel matrix stayed indefinite after jitter {jitter}")
            jitter = base if jitter == 0.0 else jitter * 10.0

    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, centered))
    d2q = _pairwise_dist(query_xy, meas_xy) ** 2
    ks = signal_var * np.exp(-d2q / (2.0 * length_scale ** 2))
    return mu + ks @ alpha


# ---------------------------------------------------------------------------
# dispatch and tuning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TunedBaseline:
    method: str
    hyper: dict
    val_rmse: float


def predict_baseline(method: str, hyper: dict, meas_xy, meas_values,
                     query_xy) -> np.ndarray:
    if method == "knn":
        return knn_predict(meas_xy, meas_values, query_xy, k=hyper["k"])
    if method == "idw":
        return idw_predict(meas_xy, meas_values, query_xy, power=hyper["power"])
    if method == "kriging":
        pred, _ = kriging_predict(meas_xy, meas_values, query_xy,
                                  nugget=hyper["nugget"], sill=hyper["sill"],
                                  range_m=hyper["range_m"])
        return pred
    if method == "gpr":
        return gpr_predict(meas_xy, meas_values, query_xy,
                           length_scale=hyper["length_scale"],
                           signal_var=hyper["signal_var"],
                           noise_var=hyper["noise_var"])
    raise ConfigurationError(f"unknown baseline {method!r}, expected one of {METHODS}")


def hyper_grid(method: str, samples: list[Sample]) -> list[dict]:
    """Candidate hyperparameters; spacings come from the samples themselves."""
    if method == "knn":
        smallest = min(len(s.meas_values) for s in samples)
        ks = [k for k in KNN_GRID if k <= smallest]
        if not ks:
            raise DegenerateInputError(
                f"fewest measurements per sample is {smallest}; no usable k")
        return [{"k": k} for k in ks]
    if method == "idw":
        return [{"power": p} for p in IDW_GRID]

    delta = float(np.mean([s.grid_spec().delta_x for s in samples]))
    if method == "kriging":
        return [{"nugget": ratio, "sill": 1.0, "range_m": cells * delta}
                for cells in KRIGING_RANGE_CELLS
                for ratio in KRIGING_NUGGET_RATIOS]
    if method == "gpr":
        var = float(np.var(np.concatenate([s.meas_values for s in samples])))
        signal = max(var, 1e-6)
        return [{"length_scale": cells * delta, "signal_var": signal,
                 "noise_var": ratio * signal}
                for cells in GPR_LENGTH_CELLS
                for ratio in GPR_NOISE_RATIOS]
    raise ConfigurationError(f"unknown baseline {method!r}, expected one of {METHODS}")


def sample_rmse(method: str, hyper: dict, sample: Sample) -> float:
    pred = predict_baseline(method, hyper, sample.meas_xy, sample.meas_values,
                            sample.target_xy)
    return float(np.sqrt(np.mean((pred - sample.target_values) ** 2)))


def tune_baseline(method: str, val_samples: list[Sample]) -> TunedBaseline:
    """Pick the grid entry with the lowest mean per-sample validation RMSE."""
    if not val_samples:
        raise DegenerateInputError("no validation samples to tune on")
    best = None
    for hyper in hyper_grid(method, val_samples):
        rmse = float(np.mean([sample_rmse(method, hyper, s) for s in val_samples]))
        if best is None or rmse < best.val_rmse:
            best = TunedBaseline(method=method, hyper=hyper, val_rmse=rmse)
    return best
