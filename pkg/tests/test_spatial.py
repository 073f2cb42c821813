import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from a2gchan.errors import ConfigError, NumericError
from a2gchan.geochannel import boresight_cluster_scene, element_grid, synth_csi
from a2gchan.spatial import (corr_region, element_map, neighbor_contrast, offset_diagonal_score,
                             spatial_corr, write_matrix_csv)
from a2gchan.temporal import antenna_corr

# Field-measured correlation of element (row 3, col 3) with the rest of an
# 8x8 array at the 90 degree position; grid[row, col].
MEASURED_GRID = np.array([
    [0.54, 0.54, 0.61, 0.75, 0.79, 0.62, 0.20, 0.22],
    [0.79, 0.56, 0.55, 0.84, 0.76, 0.79, 0.34, 0.43],
    [0.80, 0.72, 0.79, 0.89, 0.81, 0.87, 0.64, 0.71],
    [0.69, 0.69, 0.86, 1.00, 0.87, 0.81, 0.85, 0.84],
    [0.73, 0.63, 0.77, 0.92, 0.85, 0.55, 0.67, 0.72],
    [0.74, 0.72, 0.67, 0.60, 0.75, 0.39, 0.50, 0.77],
    [0.70, 0.65, 0.79, 0.53, 0.55, 0.29, 0.69, 0.80],
    [0.65, 0.60, 0.68, 0.00, 0.55, 0.53, 0.80, 0.72],
])


def random_psd(rng, M, rank):
    A = rng.standard_normal((M, rank)) + 1j * rng.standard_normal((M, rank))
    return A @ A.conj().T


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 64))
def test_rho_is_normalized(seed, rank):
    rng = np.random.default_rng(seed)
    R = random_psd(rng, 64, rank) * 10.0 ** rng.uniform(-6, 6)
    c = spatial_corr(R)
    assert np.all(np.abs(np.diag(c.rho) - 1) <= 1e-9)
    assert np.all((c.rho >= 0) & (c.rho <= 1))
    raw = np.abs(R) / np.sqrt(np.outer(np.diag(R).real, np.diag(R).real))
    assert np.all(raw <= 1 + 1e-9)
    assert np.allclose(c.rho, raw, atol=1e-9)


def test_dead_element_reported():
    R = np.eye(4, dtype=complex)
    R[2, 2] = 0
    with pytest.raises(NumericError, match="index 2"):
        spatial_corr(R, 2, 2)
    with pytest.raises(ConfigError):
        spatial_corr(np.eye(4), 8, 8)


def test_element_map_layout():
    rho = np.zeros((6, 6))
    idx = np.arange(6)
    rho[1] = idx / 10                    # element 1 = (row 1, col 0) in a 2x3 column-stacked grid
    rho[:, 1] = idx / 10
    rho[1, 1] = 0.0
    c = spatial_corr(rho + np.eye(6), rows=2, cols=3)
    g = element_map(c, (1, 0))
    r, col = element_grid(idx, 2, 3)
    for i in idx:
        if i != 1:
            assert g[r[i], col[i]] == pytest.approx(i / 10)
    with pytest.raises(ConfigError):
        element_map(c, (2, 0))


def test_measured_grid_region_counts():
    # isolated cells above the threshold do not join the region around the reference
    assert corr_region(MEASURED_GRID, 0.85, (3, 3), connected=True)[0] == 4
    assert corr_region(MEASURED_GRID, 0.80, (3, 3), connected=True)[0] == 11
    assert corr_region(MEASURED_GRID, 0.85, (3, 3))[0] == 5
    count, mask = corr_region(MEASURED_GRID, 0.85)
    assert not mask[3, 3] and count == 5


def test_region_count_is_monotone_in_threshold():
    rng = np.random.default_rng(1)
    g = rng.random((8, 8))
    counts = [corr_region(g, t, (3, 3), connected=True)[0] for t in (0.9, 0.7, 0.5, 0.3, 0.0)]
    assert counts == sorted(counts) and counts[-1] == 63


def test_diagonal_scores_and_contrast():
    rho = np.eye(4)
    rho[0, 1] = rho[1, 0] = 0.5
    rho[0, 3] = rho[3, 0] = 0.2
    c = spatial_corr(rho, 2, 2)
    assert offset_diagonal_score(c, 1) == pytest.approx((0.5 + 0 + 0) / 3)
    assert offset_diagonal_score(c, 3) == pytest.approx(0.2)
    near, far = neighbor_contrast(c)
    # 2x2 grid: pairs (0,1),(0,2),(1,3),(2,3) are neighbors, (0,3),(1,2) are not
    assert near == pytest.approx(0.5 / 4) and far == pytest.approx(0.2 / 2)
    with pytest.raises(ConfigError):
        offset_diagonal_score(c, 0)


@pytest.fixture(scope="module")
def boresight_corr():
    x = synth_csi(boresight_cluster_scene(8.0), duration=0.6)
    return spatial_corr(antenna_corr(x, 200, 200))


def test_boresight_neighbors_beat_non_neighbors(boresight_corr):
    c = boresight_corr
    r, col = c.grid_of(np.arange(64))
    dist = np.abs(r[:, None] - r[None]) + np.abs(col[:, None] - col[None])
    for i in range(64):
        assert c.rho[i, dist[i] == 1].min() > c.rho[i, dist[i] > 1].mean()
    near, far = neighbor_contrast(c)
    assert near > far


def test_boresight_horizontal_offset_diagonals(boresight_corr):
    s8 = offset_diagonal_score(boresight_corr, 8)
    assert all(s8 > offset_diagonal_score(boresight_corr, k) for k in (2, 3, 4, 5, 6, 7))


def test_boresight_correlation_falls_with_separation(boresight_corr):
    g = element_map(boresight_corr, (3, 3))
    r, c = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    ring = np.maximum(np.abs(r - 3), np.abs(c - 3))
    means = [g[ring == k].mean() for k in range(5)]
    assert all(a > b for a, b in zip(means, means[1:]))


def test_matrix_csv(tmp_path):
    write_matrix_csv(np.eye(3), tmp_path / "m.csv", header=["a", "b", "c"])
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0] == ["a", "b", "c"] and rows[2] == ["0", "1", "0"]
