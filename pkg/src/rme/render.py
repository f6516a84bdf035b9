"""Grayscale heatmap export.

Writes binary portable graymaps (P5), which every image viewer and no
dependency can read.  Open cells are min-max scaled to 1..255, building
cells are forced to pure white, and a constant field lands on mid-gray so
the output stays well defined for degenerate inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericError

Array = np.ndarray

BUILDING_GRAY = 255
CONSTANT_GRAY = 128
GRAY_LO = 1
GRAY_HI = 255


def scale_to_gray(values: Array, b_mask: Array) -> Array:
    """Map a value grid to uint8 gray levels, buildings white."""
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(b_mask, dtype=bool)
    if values.ndim != 2:
        raise DimensionError(f"value grid must be 2-d, got shape {values.shape}")
    if mask.shape != values.shape:
        raise DimensionError(
            f"building mask {mask.shape} does not match value grid {values.shape}")

    gray = np.full(values.shape, BUILDING_GRAY, dtype=np.uint8)
    open_cells = ~mask
    if not open_cells.any():
        return gray

    open_vals = values[open_cells]
    if not np.all(np.isfinite(open_vals)):
        raise NumericError("non-finite values outside building cells")

    lo = float(open_vals.min())
    hi = float(open_vals.max())
    if hi == lo:
        gray[open_cells] = CONSTANT_GRAY
        return gray

    span = GRAY_HI - GRAY_LO
    scaled = GRAY_LO + np.rint((values[open_cells] - lo) / (hi - lo) * span)
    gray[open_cells] = scaled.astype(np.uint8)
    return gray


def render_pgm(values: Array, b_mask: Array) -> bytes:
    """Serialize a value grid as a binary PGM image.

    Image rows run top to bottom while grid rows run south to north, so the
    grid is flipped vertically to make the image read like a map.
    """
    gray = scale_to_gray(values, b_mask)
    rows, cols = gray.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    return header + gray[::-1].tobytes()


def write_pgm(path, values: Array, b_mask: Array) -> None:
    data = render_pgm(values, b_mask)
    with open(path, "wb") as fh:
        fh.write(data)
