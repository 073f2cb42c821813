"""
Spatial stationarity across the array: normalized element correlation,
per-element correlation maps on the physical grid and thresholded regions.
"""
from __future__ import annotations

import csv

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, NumericError
from .geochannel import element_grid, element_index
from .temporal import AntennaCorrMatrix


@dataclass(frozen=True, eq=False)
class SpatialCorr:
    """rho_ij = |R_ij| / sqrt(R_ii R_jj) with the index <-> (row, col) mapping."""

    rho: np.ndarray
    rows: int = 8
    cols: int = 8
    stacking: str = "column"

    def grid_of(self, index):
        return element_grid(index, self.rows, self.cols, self.stacking)

    def index_of(self, row, col):
        return element_index(row, col, self.rows, self.cols, self.stacking)


def spatial_corr(Ra, rows=8, cols=8, stacking="column") -> SpatialCorr:
    R = Ra.matrix if isinstance(Ra, AntennaCorrMatrix) else np.asarray(Ra)
    if R.shape != (rows * cols, rows * cols):
        raise ConfigError(f"correlation matrix {R.shape} does not fit a {rows}x{cols} array",
                          module="spatial")
    d = np.real(np.diagonal(R))
    dead = np.flatnonzero(d <= 0)
    if dead.size:
        raise NumericError(f"non-positive diagonal (dead element) at index {int(dead[0])}",
                           module="spatial")
    s = np.sqrt(d)
    rho = np.abs(R) / np.outer(s, s)
    rho = np.clip(0.5 * (rho + rho.T), 0.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return SpatialCorr(rho, rows, cols, stacking)


def element_map(corr: SpatialCorr, element) -> np.ndarray:
    """Correlation of every element with ``element`` = (row, col), laid out as a grid."""
    r, c = element
    if not (0 <= r < corr.rows and 0 <= c < corr.cols):
        raise ConfigError(f"element {element} outside the {corr.rows}x{corr.cols} grid",
                          module="spatial")
    ref = int(corr.index_of(r, c))
    rr, cc = np.meshgrid(np.arange(corr.rows), np.arange(corr.cols), indexing="ij")
    return corr.rho[ref, corr.index_of(rr, cc)]


def corr_region(grid, threshold: float, reference=None, connected=False):
    """Elements with rho > threshold, excluding the reference element.

    ``reference`` defaults to the grid maximum. With ``connected`` only the
    4-connected region grown from the reference counts. Returns (count, mask).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if reference is None:
        reference = np.unravel_index(np.argmax(grid), grid.shape)
    reference = tuple(int(v) for v in reference)
    mask = grid > threshold
    if connected:
        seed = mask.copy()
        seed[reference] = True
        labels, _ = ndimage.label(seed)
        mask = labels == labels[reference]
    mask[reference] = False
    return int(mask.sum()), mask


def offset_diagonal_score(corr: SpatialCorr, offset: int) -> float:
    """Mean rho on the +/-offset diagonals (symmetric, so one side suffices)."""
    M = corr.rho.shape[0]
    if not 0 < offset < M:
        raise ConfigError(f"offset must satisfy 0 < offset < {M}", module="spatial")
    return float(np.mean(np.diagonal(corr.rho, offset)))


def neighbor_contrast(corr: SpatialCorr):
    """Mean rho over 4-connected grid-neighbor pairs and over all other pairs."""
    M = corr.rho.shape[0]
    r, c = corr.grid_of(np.arange(M))
    dist = np.abs(r[:, None] - r[None, :]) + np.abs(c[:, None] - c[None, :])
    iu = np.triu_indices(M, 1)
    near = dist[iu] == 1
    vals = corr.rho[iu]
    return float(vals[near].mean()), float(vals[~near].mean())


def write_matrix_csv(matrix, path, header=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in np.atleast_2d(matrix):
            w.writerow([f"{v:.9g}" for v in row])
