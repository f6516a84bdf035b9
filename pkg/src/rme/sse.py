"""Spatial semantic embedding: continuous coordinates -> feature vectors.

A point is described by three ingredients before any attention runs:

  * a multi-frequency sinusoidal encoding of its window-normalized
    coordinates, injective on the window and smooth off the grid,
  * a building-context vector pulled from a small CNN over the building mask,
  * a coverage-context vector pulled from a second CNN over the mask of
    cells that hold measurements.

The three are concatenated and pushed through a residual MLP down to the
embedding width.  Ablation variants drop one ingredient: "no-posenc" feeds
the two raw coordinates instead of the sinusoids, "no-b" and "no-s" replace
the respective context vector with zeros (widths stay fixed so checkpoints
remain layout-compatible).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError
from .grid import GridSpec, nearest_cells
from .layers import ConvLayer, LinearLayer, init_conv, init_linear, items_of, rebind_all
from .scene import Extent
from .tensor import Tensor, add, concat_last_axis, gather_cells, relu, zeros

VARIANTS = ("full", "no-posenc", "no-b", "no-s")


@dataclass(frozen=True)
class SseConfig:
    freq_count: int = 16       # sinusoid octaves per coordinate
    prior_channels: int = 16   # width of each context vector
    conv_hidden: int = 8
    mlp_hidden: int = 64
    embed_dim: int = 32
    variant: str = "full"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        for name in ("freq_count", "prior_channels", "conv_hidden",
                     "mlp_hidden", "embed_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")

    @property
    def coord_dim(self) -> int:
        if self.variant == "no-posenc":
            return 2
        return 2 * (2 * self.freq_count + 1)

    @property
    def point_dim(self) -> int:
        return self.coord_dim + 2 * self.prior_channels


def sin_encode(x: np.ndarray, freq_count: int) -> np.ndarray:
    """Columns [x, sin(pi x), cos(pi x), sin(2 pi x), ..., cos(2^(L-1) pi x)]."""
    x = np.asarray(x, dtype=np.float64)
    cols = [x]
    for k in range(freq_count):
        arg = (2.0 ** k) * np.pi * x
        cols.append(np.sin(arg))
        cols.append(np.cos(arg))
    return np.stack(cols, axis=-1)


@dataclass
class SseParams:
    building_convs: list[ConvLayer] = field(default_factory=list)
    coverage_convs: list[ConvLayer] = field(default_factory=list)
    mlp: list[LinearLayer] = field(default_factory=list)

    def items(self, prefix: str = "sse"):
        yield from items_of(self.building_convs, prefix + ".building")
        yield from items_of(self.coverage_convs, prefix + ".coverage")
        yield from items_of(self.mlp, prefix + ".mlp")

    def rebind(self, store: dict, prefix: str = "sse"):
        rebind_all(self.building_convs, prefix + ".building", store)
        rebind_all(self.coverage_convs, prefix + ".coverage", store)
        rebind_all(self.mlp, prefix + ".mlp", store)


def _conv_stack(rng, c_hidden: int, c_out: int) -> list[ConvLayer]:
    return [init_conv(rng, 1, c_hidden, 5),
            init_conv(rng, c_hidden, c_hidden, 3),
            init_conv(rng, c_hidden, c_out, 3)]


def init_sse_params(rng: np.random.Generator, cfg: SseConfig) -> SseParams:
    h = cfg.mlp_hidden
    mlp = [init_linear(rng, cfg.point_dim, h),
           init_linear(rng, h, h),
           init_linear(rng, h, h),
           init_linear(rng, h, h),
           init_linear(rng, h, cfg.embed_dim)]
    return SseParams(
        building_convs=_conv_stack(rng, cfg.conv_hidden, cfg.prior_channels),
        coverage_convs=_conv_stack(rng, cfg.conv_hidden, cfg.prior_channels),
        mlp=mlp,
    )


def encode_priors(params: SseParams, b_mask: np.ndarray,
                  s_mask: np.ndarray) -> tuple[Tensor, Tensor]:
    """Run both mask CNNs once per window; grids are reused for every point."""
    if b_mask.shape != s_mask.shape:
        raise ConfigurationError(
            f"mask shapes differ: {b_mask.shape} vs {s_mask.shape}")

    def run(convs, mask):
        x = Tensor(np.asarray(mask, dtype=np.float64)[None, :, :])
        x = relu(convs[0](x))
        x = relu(convs[1](x))
        return convs[2](x)

    return run(params.building_convs, b_mask), run(params.coverage_convs, s_mask)


def embed_points(params: SseParams, cfg: SseConfig, xy: np.ndarray,
                 extent: Extent, spec: GridSpec,
                 prior_b: Tensor, prior_s: Tensor) -> Tensor:
    """Feature vectors (m, embed_dim) for continuous points in meters."""
    xy = np.asarray(xy, dtype=np.float64)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ConfigurationError(f"points must be (m, 2), got {xy.shape}")
    if not np.all(np.isfinite(xy)):
        raise NumericError("non-finite point coordinates")

    coords = point_coords(cfg, xy, extent)
    rows, cols, _ = nearest_cells(xy[:, 0], xy[:, 1], spec)
    m = xy.shape[0]
    if cfg.variant == "no-b":
        b_rows = zeros((m, cfg.prior_channels))
    else:
        b_rows = gather_cells(prior_b, rows, cols)
    if cfg.variant == "no-s":
        s_rows = zeros((m, cfg.prior_channels))
    else:
        s_rows = gather_cells(prior_s, rows, cols)

    h = concat_last_axis(Tensor(coords), b_rows, s_rows)
    return mlp_chain(params, h)


def point_coords(cfg: SseConfig, xy: np.ndarray, extent: Extent) -> np.ndarray:
    """Coordinate feature columns for points in meters; plain data, no grads."""
    nx = (xy[:, 0] - extent.x0) / extent.width
    ny = (xy[:, 1] - extent.y0) / extent.height
    if cfg.variant == "no-posenc":
        return np.column_stack([nx, ny])
    return np.concatenate(
        [sin_encode(nx, cfg.freq_count), sin_encode(ny, cfg.freq_count)],
        axis=1)


def mlp_chain(params: SseParams, h: Tensor) -> Tensor:
    """The shared residual MLP mapping point features to embeddings."""
    l1, l2, l3, l4, l5 = params.mlp
    a1 = relu(l1(h))
    a2 = relu(l2(a1))
    a3 = relu(add(l3(a2), a1))   # skip from the first hidden activation
    a4 = relu(l4(a3))
    return l5(a4)
