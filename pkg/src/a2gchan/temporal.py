"""
Temporal stationarity from antenna correlation matrices.

The averaged correlation matrix of a window of W snapshots is compared
against every other window with the correlation matrix distance (CMD).
Along a trajectory this gives a CMD map indexed by traveled distance or by
angle to the base station, from which stationary distance/angle regions and
the normalized stationarity S_N are extracted.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .csi import CsiTensor
from .errors import ConfigError, DataError, GeometryError, NumericError


@dataclass(frozen=True, eq=False)
class AntennaCorrMatrix:
    matrix: np.ndarray
    t_index: int
    window: int
    band: tuple


def _band(band, F):
    if band is None:
        return 0, F
    start, stop = (band.start, band.stop) if isinstance(band, (slice, range)) else band
    start = 0 if start is None else int(start)
    stop = F if stop is None else int(stop)
    if stop <= start:
        raise ConfigError(f"empty frequency band [{start}, {stop})", module="temporal")
    if start < 0 or stop > F:
        raise ConfigError(f"band [{start}, {stop}) outside [0, {F})", module="temporal")
    return start, stop


def antenna_corr(tensor, t_i: int, W: int, band=None) -> AntennaCorrMatrix:
    """R_a(t_i) = 1/(|band| W) sum_f sum_{k=i}^{i+W-1} h(t_k, f) h(t_k, f)^H."""
    H = tensor.data if isinstance(tensor, CsiTensor) else np.asarray(tensor)
    T, M, F = H.shape
    b0, b1 = _band(band, F)
    if W < 1 or t_i < 0 or t_i + W > T:
        raise ConfigError(f"window [{t_i}, {t_i + W}) overruns T={T}", module="temporal")
    R = antenna_corr_stack(H, [t_i], W, (b0, b1))[0]
    return AntennaCorrMatrix(R, t_i, W, (b0, b1))


def antenna_corr_stack(H, starts, W: int, band=None, chunk=64) -> np.ndarray:
    """R_a for many window starts at once, shape (N, M, M), complex128."""
    H = np.asarray(H)
    T, M, F = H.shape
    b0, b1 = _band(band, F)
    starts = np.asarray(starts, dtype=np.int64)
    if starts.size and (starts.min() < 0 or starts.max() + W > T):
        raise ConfigError(f"window of {W} snapshots overruns T={T}", module="temporal")
    norm = 1.0 / ((b1 - b0) * W)
    out = np.empty((starts.size, M, M), dtype=np.complex128)
    offs = np.arange(W)
    # single-precision input stays single precision inside the Gram products
    work = np.complex64 if H.dtype == np.complex64 else np.complex128
    for s in range(0, starts.size, chunk):
        idx = starts[s:s + chunk, None] + offs                      # (n, W)
        X = H[idx, :, b0:b1].astype(work, copy=False)                # (n, W, M, nb)
        X = X.transpose(0, 2, 1, 3).reshape(idx.shape[0], M, -1)     # (n, M, W*nb)
        out[s:s + chunk] = np.matmul(X, X.conj().transpose(0, 2, 1)) * norm
    return out


def _matrix(R):
    return R.matrix if isinstance(R, AntennaCorrMatrix) else np.asarray(R)


def cmd(Ra_i, Ra_j) -> float:
    """Correlation matrix distance 1 - tr(R_i R_j) / (||R_i||_F ||R_j||_F)."""
    A, B = _matrix(Ra_i), _matrix(Ra_j)
    na, nb = np.linalg.norm(A), np.linalg.norm(B)
    if na == 0 or nb == 0:
        raise NumericError("CMD undefined for a zero-norm correlation matrix", module="temporal")
    tr = np.einsum("ij,ji->", A, B).real
    return float(min(1.0, max(0.0, 1.0 - tr / (na * nb))))


def cmd_matrix(stack) -> np.ndarray:
    """Pairwise CMD for a stack of Hermitian matrices (N, M, M) -> (N, N)."""
    stack = np.asarray(stack)
    N = stack.shape[0]
    V = stack.reshape(N, -1)
    norms = np.linalg.norm(V, axis=1)
    if np.any(norms == 0):
        raise NumericError(f"zero-norm correlation matrix at position {int(np.argmin(norms))}",
                           module="temporal")
    V = V / norms[:, None]
    # tr(A B) = sum A_kl B_lk = <vec B^H, vec A>; for Hermitian B this is vdot(B, A)
    G = (V.conj() @ V.T).real
    D = 1.0 - 0.5 * (G + G.T)
    np.clip(D, 0.0, 1.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def angle_to_bs(position, bs, direction) -> np.ndarray:
    """Horizontal angle [deg] between the travel direction and the UAV-to-BS vector.

    Broadside crossing is 90 deg; far before the array it tends to 0 deg and
    far past it to 180 deg. Vectorized over leading axes of ``position``.
    """
    p = np.asarray(position, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)[:2]
    to_bs = np.asarray(bs, dtype=np.float64)[:2] - p[..., :2]
    nd = np.linalg.norm(d)
    nb = np.linalg.norm(to_bs, axis=-1)
    if nd < 1e-12:
        raise GeometryError("travel direction has no horizontal component", module="temporal")
    if np.any(nb < 1e-9):
        raise GeometryError("UAV is directly above/below the BS; angle undefined",
                            module="temporal")
    cosang = (to_bs @ d) / (nb * nd)
    return np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))


@dataclass(frozen=True, eq=False)
class CmdMap:
    """Pairwise CMD over reference positions.

    ``positions`` is the map axis (along-track distance in m, or angle in deg),
    ``indices`` the snapshot where each averaging window starts and ``times``
    its timestamp.
    """

    axis: str
    positions: np.ndarray
    indices: np.ndarray
    times: np.ndarray
    values: np.ndarray
    window: int

    def __len__(self):
        return self.positions.size


def along_track(positions) -> np.ndarray:
    p = np.asarray(positions, dtype=np.float64)
    steps = np.linalg.norm(np.diff(p, axis=0), axis=1)
    return np.concatenate(([0.0], np.cumsum(steps)))


def reference_indices(tensor: CsiTensor, positions, axis="distance", W=20, stride=None,
                      angle_step=0.1, angle_span=(40.0, 140.0), bs=None, direction=None):
    """Snapshot indices and axis coordinates of the map's reference positions.

    Distance axis: every ``stride`` snapshots (default W). Angle axis: a
    uniform grid over ``angle_span`` with ``angle_step``, each grid angle
    taking the nearest snapshot (no CSI interpolation).
    """
    T = tensor.num_snapshots
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != (T, 3):
        raise DataError(f"need one 3-D position per snapshot, got {positions.shape}",
                        module="temporal")
    last = T - W
    if last < 0:
        raise ConfigError(f"window W={W} longer than record T={T}", module="temporal")
    if axis == "distance":
        stride = stride or W
        idx = np.arange(0, last + 1, stride)
        return idx, along_track(positions)[idx]
    if axis != "angle":
        raise ConfigError(f"unknown map axis {axis!r}", module="temporal")
    bs = tensor.config.bs_position if bs is None else bs
    if direction is None:
        direction = positions[-1] - positions[0]
    ang = angle_to_bs(positions[:last + 1], bs, direction)
    lo, hi = angle_span
    if not angle_step > 0 or hi <= lo:
        raise ConfigError("angle span must be increasing with a positive step", module="temporal")
    if ang.min() > lo + angle_step / 2 or ang.max() < hi - angle_step / 2:
        raise DataError(
            f"angle span [{lo}, {hi}] deg outside trajectory coverage "
            f"[{ang.min():.2f}, {ang.max():.2f}] deg", module="temporal")
    grid = lo + angle_step * np.arange(int(np.floor((hi - lo) / angle_step + 1e-9)) + 1)
    order = np.argsort(ang, kind="stable")
    sorted_ang = ang[order]
    pos = np.clip(np.searchsorted(sorted_ang, grid), 1, sorted_ang.size - 1)
    left, right = sorted_ang[pos - 1], sorted_ang[pos]
    pick = np.where(grid - left <= right - grid, pos - 1, pos)
    return order[pick], grid


def cmd_map(tensor: CsiTensor, positions, axis="distance", W=20, band=None, angle_step=0.1,
            angle_span=(40.0, 140.0), stride=None, bs=None, direction=None) -> CmdMap:
    idx, coord = reference_indices(tensor, positions, axis, W, stride, angle_step,
                                   angle_span, bs, direction)
    stack = antenna_corr_stack(tensor.data, idx, W, band)
    return CmdMap(axis, coord, idx, tensor.timestamps[idx], cmd_matrix(stack), W)


@dataclass(frozen=True, eq=False)
class StationaryRegion:
    """Per-position region bounds (inclusive map indices) and derived metrics."""

    lower: np.ndarray
    upper: np.ndarray
    t_min: np.ndarray
    t_max: np.ndarray
    sd: np.ndarray
    sa: np.ndarray
    sn: np.ndarray
    axis: str


def stationary_region(cmap: CmdMap, c_th: float = 0.2, v: float = 1.5) -> StationaryRegion:
    """Contiguous low-CMD region around every reference position.

    Scanning outward from position i, the region stops just before the first
    position whose CMD to i reaches ``c_th`` (or at the record edge). The
    stationary distance is SD = v (t_max - t_min); on an angle map the
    stationary angle SA is the angle span of the region. S_N divides SD by
    the total distance (distance map) or SA by the total angle (angle map).
    """
    if not 0 < c_th < 1:
        raise ConfigError(f"c_th must lie in (0, 1), got {c_th}", module="temporal")
    D = cmap.values
    N = D.shape[0]
    above = D >= c_th
    j = np.arange(N)
    # nearest crossing below i: largest j < i flagged
    lower_hit = np.where(above & (j[None, :] < j[:, None]), j[None, :], -1).max(axis=1)
    upper_hit = np.where(above & (j[None, :] > j[:, None]), j[None, :], N).min(axis=1)
    lower = lower_hit + 1
    upper = upper_hit - 1
    t_min, t_max = cmap.times[lower], cmap.times[upper]
    sd = v * (t_max - t_min)
    if cmap.axis == "angle":
        sa = np.abs(cmap.positions[upper] - cmap.positions[lower])
        total = abs(cmap.positions[-1] - cmap.positions[0])
        sn = sa / total if total > 0 else np.ones(N)
    else:
        sa = np.full(N, np.nan)
        total = v * (cmap.times[-1] - cmap.times[0])
        sn = sd / total if total > 0 else np.ones(N)
    return StationaryRegion(lower, upper, t_min, t_max, sd, sa, sn, cmap.axis)


def write_cmd_csv(cmap: CmdMap, path) -> None:
    unit = "m" if cmap.axis == "distance" else "deg"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"pos_i_{unit}", f"pos_j_{unit}", "d_corr"])
        for i, pi in enumerate(cmap.positions):
            for j, pj in enumerate(cmap.positions):
                w.writerow([f"{pi:.6f}", f"{pj:.6f}", f"{cmap.values[i, j]:.9f}"])


def edge_center_ratio(region: StationaryRegion, cmap: CmdMap, center_position: float,
                      edge_fraction=0.1, center_fraction=0.05) -> float:
    """Mean low-CMD band width near the trajectory ends over the width at ``center_position``.

    Band width is the region span along the map axis. Positions whose region
    is cut by the edge of the record are skipped, since their width says
    nothing about the channel. Ends are the first/last ``edge_fraction`` of the
    axis, the center is +/- ``center_fraction`` of the axis around
    ``center_position``.
    """
    pos = cmap.positions
    span = abs(pos[-1] - pos[0])
    width = np.abs(pos[region.upper] - pos[region.lower])
    whole = (region.lower > 0) & (region.upper < len(cmap) - 1)
    rel = np.abs(pos - pos[0])
    ends = whole & ((rel <= edge_fraction * span) | (rel >= (1 - edge_fraction) * span))
    mid = whole & (np.abs(pos - center_position) <= center_fraction * span)
    if not ends.any() or not mid.any():
        raise NumericError("no unclipped positions at the ends or the center",
                           module="temporal")
    center = width[mid].mean()
    if center == 0:
        raise NumericError("zero band width at the center", module="temporal")
    return float(width[ends].mean() / center)
