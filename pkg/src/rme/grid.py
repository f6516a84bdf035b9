"""Regular-grid geometry: cell centers, nearest-cell mapping, aggregation.

Cell (i, j) of a grid with origin (ox, oy) and spacing (dx, dy) is centered
at (ox + (j + 0.5) dx, oy + (i + 0.5) dy); i runs over rows (y), j over
columns (x).  Points on the midline between two centers map to the smaller
index, which makes ties resolve to the lexicographically smallest (i, j).
Points outside the grid clamp to the boundary cell and are flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError

Array = np.ndarray


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    delta_x: float
    delta_y: float
    origin_x: float = 0.0
    origin_y: float = 0.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigurationError(f"grid needs positive dims, got {self.rows}x{self.cols}")
        if not (self.delta_x > 0.0 and self.delta_y > 0.0):
            raise ConfigurationError(
                f"grid spacing must be positive, got {self.delta_x}, {self.delta_y}")

    @property
    def width(self) -> float:
        return self.cols * self.delta_x

    @property
    def height(self) -> float:
        return self.rows * self.delta_y

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin_x + (j + 0.5) * self.delta_x,
                self.origin_y + (i + 0.5) * self.delta_y)

    def center_arrays(self) -> tuple[Array, Array]:
        """(x, y) center coordinate arrays, each rows x cols."""
        xs = self.origin_x + (np.arange(self.cols) + 0.5) * self.delta_x
        ys = self.origin_y + (np.arange(self.rows) + 0.5) * self.delta_y
        return np.broadcast_to(xs, (self.rows, self.cols)).copy(), \
            np.broadcast_to(ys[:, None], (self.rows, self.cols)).copy()


class CellIndex(NamedTuple):
    row: int
    col: int
    clamped: bool


def _axis_index(coord: float, origin: float, delta: float, count: int) -> tuple[int, bool]:
    # ceil(u) - 1 sends exact cell-boundary hits to the lower cell, which is
    # the tie-break toward the smaller index
    u = (coord - origin) / delta
    idx = math.ceil(u) - 1
    if idx < 0:
        return 0, u < 0.0
    if idx >= count:
        return count - 1, True
    return idx, False


def nearest_cell(x: float, y: float, spec: GridSpec) -> CellIndex:
    """Nearest cell center; ties go to the smaller index, outside clamps."""
    j, cx = _axis_index(x, spec.origin_x, spec.delta_x, spec.cols)
    i, cy = _axis_index(y, spec.origin_y, spec.delta_y, spec.rows)
    return CellIndex(i, j, cx or cy)


def nearest_cells(xs: Array, ys: Array, spec: GridSpec) -> tuple[Array, Array, Array]:
    """Vectorized nearest_cell: (rows, cols, clamped) integer/bool arrays."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape:
        raise DimensionError(f"coordinate arrays differ: {xs.shape} vs {ys.shape}")
    uj = np.ceil((xs - spec.origin_x) / spec.delta_x) - 1.0
    ui = np.ceil((ys - spec.origin_y) / spec.delta_y) - 1.0
    clamped = (uj < 0) | (uj >= spec.cols) | (ui < 0) | (ui >= spec.rows)
    cols = np.clip(uj, 0, spec.cols - 1).astype(np.intp)
    rows = np.clip(ui, 0, spec.rows - 1).astype(np.intp)
    return rows, cols, clamped


@dataclass
class AggregatedGrid:
    values: Array  # rows x cols, mean of mapped measurements, 0 where empty
    counts: Array  # rows x cols, int measurement counts


def aggregate(coords: Sequence[tuple[float, float]] | Array, values: Sequence[float] | Array,
              spec: GridSpec) -> AggregatedGrid:
    """Average measurements into their nearest cells; empty cells stay 0.

    Per-cell sums run over the cell's contributions sorted by value, so the
    result is bit-identical under any permutation of the input measurements.
    """
    coords = np.asarray(coords, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise DimensionError(f"coords must be (n, 2), got {coords.shape}")
    if vals.shape != (coords.shape[0],):
        raise DimensionError(f"need one value per coordinate, got {vals.shape}")

    out_values = np.zeros((spec.rows, spec.cols))
    out_counts = np.zeros((spec.rows, spec.cols), dtype=np.int64)
    if coords.shape[0] == 0:
        return AggregatedGrid(out_values, out_counts)

    rows, cols, _ = nearest_cells(coords[:, 0], coords[:, 1], spec)
    buckets: dict[tuple[int, int], list[float]] = {}
    for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
        buckets.setdefault((i, j), []).append(v)
    for (i, j), bucket in buckets.items():
        acc = 0.0
        for v in sorted(bucket):
            acc += v
        out_values[i, j] = acc / len(bucket)
        out_counts[i, j] = len(bucket)
    return AggregatedGrid(out_values, out_counts)


def lookup_feature(x: float, y: float, feature_grid: Array, spec: GridSpec) -> Array:
    """Feature column of the nearest cell from a (c, rows, cols) grid."""
    grid = np.asarray(feature_grid)
    if grid.ndim != 3:
        raise DimensionError(f"feature grid must be (c, rows, cols), got {grid.shape}")
    if grid.shape[1] != spec.rows or grid.shape[2] != spec.cols:
        raise DimensionError(
            f"feature grid {grid.shape[1:]} does not match grid spec {spec.rows}x{spec.cols}")
    cell = nearest_cell(x, y, spec)
    return grid[:, cell.row, cell.col].copy()
