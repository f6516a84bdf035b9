"""Synthetic urban scenes and the propagation model behind every dataset.

One scene is a rectangular region with axis-aligned rectangular buildings
and a list of candidate transmitter deployments.  The received power at a
point p from transmitter t is

    power_dbm(t) - 10 n log10(max(d, d0) / d0) - wall_db * crossings(t, p) + shadow(p)

where crossings counts proper intersections of the segment t->p with
building edges, and shadow is a zero-mean Gaussian field smoothed to a
configurable correlation length.  The shadow field lives on its own master
lattice in meters and is sampled bilinearly, so maps of the same scene at
different grid spacings see the same underlying field.  Cells whose centers
fall strictly inside a building carry -inf and are masked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ConfigurationError,
    ContractError,
    DegenerateInputError,
    DimensionError,
    RangeError,
)
from .grid import GridSpec
from .seeding import make_rng

Array = np.ndarray

BUILDING_SENTINEL = -np.inf


@dataclass(frozen=True)
class Building:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ConfigurationError(f"degenerate building rectangle {self}")

    def contains(self, x: float, y: float) -> bool:
        """Strict interior: centers exactly on a wall stay outdoor cells."""
        return self.x0 < x < self.x1 and self.y0 < y < self.y1


@dataclass(frozen=True)
class Transmitter:
    x: float
    y: float
    power_dbm: float


@dataclass(frozen=True)
class PropagationConfig:
    path_loss_exponent: float = 3.0
    reference_distance_m: float = 1.0
    # typical exterior-wall penetration loss for mid-band urban concrete;
    # building shadows dominate the maps, as in dense ray-traced scenes
    wall_loss_db: float = 18.0


@dataclass(frozen=True)
class ShadowingConfig:
    sigma_db: float = 4.0
    correlation_m: float = 26.0
    lattice_m: float = 1.625
    enabled: bool = True


@dataclass(frozen=True)
class Scene:
    width_m: float
    height_m: float
    delta_m: float
    buildings: tuple[Building, ...]
    transmitters: tuple[Transmitter, ...]
    propagation: PropagationConfig = field(default_factory=PropagationConfig)

    def __post_init__(self):
        if self.delta_m <= 0.0:
            raise ConfigurationError(f"grid spacing must be positive, got {self.delta_m}")
        rows, cols = self.grid_rows, self.grid_cols
        if abs(rows * self.delta_m - self.height_m) > self.delta_m or \
           abs(cols * self.delta_m - self.width_m) > self.delta_m:
            raise ConfigurationError("region size is not within one cell of the grid extent")
        for b in self.buildings:
            if b.x0 < 0 or b.y0 < 0 or b.x1 > self.width_m or b.y1 > self.height_m:
                raise ConfigurationError(f"building {b} sticks out of the region")
        for t in self.transmitters:
            if not (0.0 <= t.x <= self.width_m and 0.0 <= t.y <= self.height_m):
                raise ConfigurationError(f"transmitter at ({t.x}, {t.y}) outside the region")
            for b in self.buildings:
                if b.contains(t.x, t.y):
                    raise ConfigurationError(f"transmitter at ({t.x}, {t.y}) inside building {b}")

    @property
    def grid_rows(self) -> int:
        return int(round(self.height_m / self.delta_m))

    @property
    def grid_cols(self) -> int:
        return int(round(self.width_m / self.delta_m))

    def grid_spec(self) -> GridSpec:
        return GridSpec(rows=self.grid_rows, cols=self.grid_cols,
                        delta_x=self.delta_m, delta_y=self.delta_m)


@dataclass(frozen=True)
class SceneGenConfig:
    width_m: float = 416.0
    height_m: float = 416.0
    delta_m: float = 3.25
    min_buildings: int = 8
    max_buildings: int = 13
    min_building_m: float = 24.0
    max_building_m: float = 78.0
    margin_m: float = 12.0
    num_transmitters: int = 9
    min_power_dbm: float = 25.0
    max_power_dbm: float = 35.0
    propagation: PropagationConfig = field(default_factory=PropagationConfig)


def random_scene(cfg: SceneGenConfig, seed: int) -> Scene:
    """Draw buildings and transmitter deployments from a named seed."""
    rng = make_rng(seed, "scene-layout")
    count = int(rng.integers(cfg.min_buildings, cfg.max_buildings + 1))
    buildings = []
    for _ in range(count):
        w = rng.uniform(cfg.min_building_m, cfg.max_building_m)
        h = rng.uniform(cfg.min_building_m, cfg.max_building_m)
        x0 = rng.uniform(cfg.margin_m, cfg.width_m - cfg.margin_m - w)
        y0 = rng.uniform(cfg.margin_m, cfg.height_m - cfg.margin_m - h)
        buildings.append(Building(x0, y0, x0 + w, y0 + h))

    transmitters = []
    attempts = 0
    while len(transmitters) < cfg.num_transmitters:
        attempts += 1
        if attempts > 10000:
            raise DegenerateInputError("could not place transmitters outside buildings")
        x = rng.uniform(0.0, cfg.width_m)
        y = rng.uniform(0.0, cfg.height_m)
        if any(b.contains(x, y) for b in buildings):
            continue
        power = rng.uniform(cfg.min_power_dbm, cfg.max_power_dbm)
        transmitters.append(Transmitter(x, y, power))

    return Scene(cfg.width_m, cfg.height_m, cfg.delta_m, tuple(buildings),
                 tuple(transmitters), cfg.propagation)


# ---------------------------------------------------------------------------
# shadow field
# ---------------------------------------------------------------------------

class ShadowField:
    """Smoothed Gaussian field on a fixed lattice, sampled bilinearly.

    White noise on lattice nodes is smoothed separably with a truncated
    Gaussian kernel (rows renormalized at the borders) and rescaled to the
    requested marginal standard deviation.  Because the lattice depends only
    on the region and the config, the field is identical for any map
    resolution over the same scene.
    """

    def __init__(self, width_m: float, height_m: float, cfg: ShadowingConfig, seed: int):
        if cfg.lattice_m <= 0.0 or cfg.correlation_m <= 0.0 or cfg.sigma_db < 0.0:
            raise ConfigurationError(f"bad shadowing config {cfg}")
        self.cfg = cfg
        self.nx = int(math.ceil(width_m / cfg.lattice_m)) + 1
        self.ny = int(math.ceil(height_m / cfg.lattice_m)) + 1
        rng = np.random.Generator(np.random.PCG64(seed))
        noise = rng.standard_normal((self.ny, self.nx))
        sigma_cells = cfg.correlation_m / cfg.lattice_m
        ky = _smoothing_matrix(self.ny, sigma_cells)
        kx = _smoothing_matrix(self.nx, sigma_cells)
        smooth = ky @ noise @ kx.T
        std = smooth.std()
        if std > 0.0:
            smooth = (smooth - smooth.mean()) / std * cfg.sigma_db
        self.field = smooth

    def sample(self, xs: Array, ys: Array) -> Array:
        """Bilinear interpolation at meter coordinates, clamped to the hull."""
        u = np.clip(np.asarray(xs) / self.cfg.lattice_m, 0.0, self.nx - 1.0)
        v = np.clip(np.asarray(ys) / self.cfg.lattice_m, 0.0, self.ny - 1.0)
        j0 = np.minimum(u.astype(np.intp), self.nx - 2) if self.nx > 1 else np.zeros_like(u, dtype=np.intp)
        i0 = np.minimum(v.astype(np.intp), self.ny - 2) if self.ny > 1 else np.zeros_like(v, dtype=np.intp)
        fu = u - j0
        fv = v - i0
        f = self.field
        return ((1 - fv) * ((1 - fu) * f[i0, j0] + fu * f[i0, j0 + 1])
                + fv * ((1 - fu) * f[i0 + 1, j0] + fu * f[i0 + 1, j0 + 1]))


def _smoothing_matrix(n: int, sigma_cells: float) -> Array:
    radius = max(1, int(math.ceil(3.0 * sigma_cells)))
    offsets = np.arange(n)[:, None] - np.arange(n)[None, :]
    kernel = np.exp(-(offsets.astype(np.float64) ** 2) / (2.0 * sigma_cells ** 2))
    kernel[np.abs(offsets) > radius] = 0.0
    return kernel / kernel.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# wall crossings
# ---------------------------------------------------------------------------

def count_wall_crossings(px: float, py: float, qx: Array, qy: Array,
                         buildings: tuple[Building, ...]) -> Array:
    """Edge crossings of segments (px, py)->(qx[i], qy[i]) with building walls.

    A crossing counts when the segment parameter t is strictly inside (0, 1),
    so a segment that merely ends on a wall does not cross it.  Each wall's
    span is half-open toward increasing coordinate; exact corner hits are
    measure-zero and resolved by that convention (a diagonal entering at one
    corner and leaving at the opposite one still totals two crossings).
    """
    qx = np.asarray(qx, dtype=np.float64)
    qy = np.asarray(qy, dtype=np.float64)
    counts = np.zeros(qx.shape, dtype=np.int64)
    # inf * 0 products from parallel segments turn into nan and fail every
    # comparison, which is the wanted outcome; suppress the warnings only
    with np.errstate(divide="ignore", invalid="ignore"):
        for b in buildings:
            for ex, ya, yb in ((b.x0, b.y0, b.y1), (b.x1, b.y0, b.y1)):
                dx = qx - px
                t = np.where(dx != 0.0, (ex - px) / dx, np.inf)
                hit = (t > 0.0) & (t < 1.0)
                y_at = py + t * (qy - py)
                counts += (hit & (y_at >= ya) & (y_at < yb)).astype(np.int64)
            for ey, xa, xb in ((b.y0, b.x0, b.x1), (b.y1, b.x0, b.x1)):
                dy = qy - py
                t = np.where(dy != 0.0, (ey - py) / dy, np.inf)
                hit = (t > 0.0) & (t < 1.0)
                x_at = px + t * (qx - px)
                counts += (hit & (x_at >= xa) & (x_at < xb)).astype(np.int64)
    return counts


# ---------------------------------------------------------------------------
# map generation
# ---------------------------------------------------------------------------

@dataclass
class RadioMap:
    values: Array          # rows x cols dBm, -inf inside buildings
    building_mask: Array   # rows x cols bool
    spec: GridSpec
    tx_index: Optional[int] = None


def building_mask_for(spec: GridSpec, buildings: tuple[Building, ...]) -> Array:
    xs, ys = spec.center_arrays()
    mask = np.zeros((spec.rows, spec.cols), dtype=bool)
    for b in buildings:
        mask |= (xs > b.x0) & (xs < b.x1) & (ys > b.y0) & (ys < b.y1)
    return mask


def generate_single_tx_map(scene: Scene, tx_index: int, shadowing: ShadowingConfig,
                           seed: int) -> RadioMap:
    """Deterministic received-power map for one transmitter deployment."""
    if not (0 <= tx_index < len(scene.transmitters)):
        raise RangeError(f"tx_index {tx_index} outside 0..{len(scene.transmitters) - 1}")
    tx = scene.transmitters[tx_index]
    prop = scene.propagation
    spec = scene.grid_spec()
    xs, ys = spec.center_arrays()

    d = np.hypot(xs - tx.x, ys - tx.y)
    d = np.maximum(d, prop.reference_distance_m)
    values = tx.power_dbm - 10.0 * prop.path_loss_exponent * np.log10(
        d / prop.reference_distance_m)
    crossings = count_wall_crossings(tx.x, tx.y, xs.ravel(), ys.ravel(), scene.buildings)
    values -= prop.wall_loss_db * crossings.reshape(values.shape)
    if shadowing.enabled and shadowing.sigma_db > 0.0:
        shadow = ShadowField(scene.width_m, scene.height_m, shadowing, seed)
        values += shadow.sample(xs, ys)

    mask = building_mask_for(spec, scene.buildings)
    values[mask] = BUILDING_SENTINEL
    return RadioMap(values=values, building_mask=mask, spec=spec, tx_index=tx_index)


def aggregate_two_tx(a: RadioMap, b: RadioMap) -> RadioMap:
    """Combine two single-transmitter maps by summing received linear power."""
    if a.values.shape != b.values.shape:
        raise DimensionError(f"map shapes differ: {a.values.shape} vs {b.values.shape}")
    if a.spec != b.spec:
        raise DimensionError("maps use different grids")
    if not np.array_equal(a.building_mask, b.building_mask):
        raise ContractError("maps describe different scenes (building masks differ)")
    with np.errstate(divide="ignore"):
        lin = np.power(10.0, a.values / 10.0) + np.power(10.0, b.values / 10.0)
        values = 10.0 * np.log10(lin)
    values[a.building_mask] = BUILDING_SENTINEL
    return RadioMap(values=values, building_mask=a.building_mask.copy(), spec=a.spec,
                    tx_index=None)


# ---------------------------------------------------------------------------
# sub-regions and samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Extent:
    x0: float
    y0: float
    width: float
    height: float


@dataclass
class SubRegion:
    values: Array
    b_mask: Array
    extent: Extent
    spec: GridSpec


def extract_subregion(radio_map: RadioMap, origin_cells: tuple[int, int],
                      size: tuple[int, int]) -> SubRegion:
    """Copy a (rows, cols) window starting at origin_cells = (row, col)."""
    r0, c0 = origin_cells
    h, w = size
    if h < 1 or w < 1:
        raise ConfigurationError(f"window size must be positive, got {size}")
    spec = radio_map.spec
    if r0 < 0 or c0 < 0 or r0 + h > spec.rows or c0 + w > spec.cols:
        raise RangeError(
            f"window {size} at {origin_cells} outside {spec.rows}x{spec.cols} grid")
    extent = Extent(
        x0=spec.origin_x + c0 * spec.delta_x,
        y0=spec.origin_y + r0 * spec.delta_y,
        width=w * spec.delta_x,
        height=h * spec.delta_y,
    )
    sub_spec = GridSpec(rows=h, cols=w, delta_x=spec.delta_x, delta_y=spec.delta_y,
                        origin_x=extent.x0, origin_y=extent.y0)
    return SubRegion(
        values=radio_map.values[r0:r0 + h, c0:c0 + w].copy(),
        b_mask=radio_map.building_mask[r0:r0 + h, c0:c0 + w].copy(),
        extent=extent,
        spec=sub_spec,
    )


def open_area_fraction(extent: Extent, buildings: tuple[Building, ...]) -> float:
    """Fraction of the window area not covered by buildings.

    Overlapping buildings are double counted, so this is a conservative
    estimate; it depends only on geometry in meters, never on the grid, which
    keeps accept/reject decisions identical across map resolutions.
    """
    area = extent.width * extent.height
    covered = 0.0
    x1 = extent.x0 + extent.width
    y1 = extent.y0 + extent.height
    for b in buildings:
        dx = min(b.x1, x1) - max(b.x0, extent.x0)
        dy = min(b.y1, y1) - max(b.y0, extent.y0)
        if dx > 0.0 and dy > 0.0:
            covered += dx * dy
    return max(0.0, 1.0 - covered / area)


def draw_subregion_origin(radio_map: RadioMap, size: tuple[int, int],
                          rng: np.random.Generator, align_cells: int = 1) -> tuple[int, int]:
    """Uniform window origin, optionally snapped to a coarser alignment lattice."""
    h, w = size
    spec = radio_map.spec
    if align_cells < 1:
        raise ConfigurationError(f"alignment must be >= 1 cell, got {align_cells}")
    max_r = (spec.rows - h) // align_cells
    max_c = (spec.cols - w) // align_cells
    if max_r < 0 or max_c < 0:
        raise RangeError(f"window {size} larger than {spec.rows}x{spec.cols} map")
    r0 = int(rng.integers(0, max_r + 1)) * align_cells
    c0 = int(rng.integers(0, max_c + 1)) * align_cells
    return r0, c0


@dataclass
class Sample:
    """One training/evaluation instance over a sub-region.

    Coordinates are absolute meters.  s_mask marks grid cells holding at
    least one measurement; b_mask marks building cells.
    """

    extent: Extent
    meas_xy: Array       # (n, 2)
    meas_values: Array   # (n,)
    target_xy: Array     # (q, 2)
    target_values: Array  # (q,)
    b_mask: Array        # (rows, cols) uint8
    s_mask: Array        # (rows, cols) uint8
    sampling_factor: float

    def grid_spec(self) -> GridSpec:
        rows, cols = self.b_mask.shape
        return GridSpec(rows=rows, cols=cols,
                        delta_x=self.extent.width / cols,
                        delta_y=self.extent.height / rows,
                        origin_x=self.extent.x0, origin_y=self.extent.y0)


def sample_cells(sub: SubRegion, sampling_factor: float,
                 rng: np.random.Generator) -> Array:
    """Choose ceil(factor * open_cells) distinct open cells (flat indices)."""
    if not (0.0 < sampling_factor <= 1.0):
        raise ConfigurationError(f"sampling factor must be in (0, 1], got {sampling_factor}")
    open_flat = np.flatnonzero(~sub.b_mask.ravel())
    n_open = open_flat.size
    k = int(math.ceil(sampling_factor * n_open))
    if k < 2:
        raise DegenerateInputError(
            f"only {k} cells sampled from {n_open} open cells; need at least 2")
    return rng.choice(open_flat, size=k, replace=False)


def split_cells(sub: SubRegion, chosen_flat: Array, split_ratio: float,
                rng: np.random.Generator, sampling_factor: float) -> Sample:
    """Split chosen cells into measurements and targets, build the Sample."""
    if not (0.0 < split_ratio < 1.0):
        raise ConfigurationError(f"split ratio must be in (0, 1), got {split_ratio}")
    k = chosen_flat.size
    if k < 2:
        raise DegenerateInputError("need at least 2 sampled cells to split")
    n_obs = int(np.clip(round(k * split_ratio), 1, k - 1))
    perm = rng.permutation(k)
    obs_flat = chosen_flat[perm[:n_obs]]
    tgt_flat = chosen_flat[perm[n_obs:]]

    rows, cols = sub.b_mask.shape

    def cells_to_xy(flat: Array) -> Array:
        r = flat // cols
        c = flat % cols
        x = sub.extent.x0 + (c + 0.5) * sub.spec.delta_x
        y = sub.extent.y0 + (r + 0.5) * sub.spec.delta_y
        return np.column_stack([x, y])

    s_mask = np.zeros((rows, cols), dtype=np.uint8)
    s_mask.ravel()[obs_flat] = 1
    flat_values = sub.values.ravel()
    return Sample(
        extent=sub.extent,
        meas_xy=cells_to_xy(obs_flat),
        meas_values=flat_values[obs_flat].copy(),
        target_xy=cells_to_xy(tgt_flat),
        target_values=flat_values[tgt_flat].copy(),
        b_mask=sub.b_mask.astype(np.uint8),
        s_mask=s_mask,
        sampling_factor=float(sampling_factor),
    )


def make_sample(sub: SubRegion, sampling_factor: float, split_ratio: float,
                rng: np.random.Generator) -> Sample:
    """Sample open cells at the given factor and split them in one go."""
    chosen = sample_cells(sub, sampling_factor, rng)
    return split_cells(sub, chosen, split_ratio, rng, sampling_factor)
