"""
Frequency stationarity: RMS delay spread, frequency correlation function,
coherence bandwidth and the delay-spread/coherence-bandwidth scaling factor.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .csi import CsiTensor
from .errors import ConfigError, NumericError

INV_E = float(np.exp(-1.0))


@dataclass(frozen=True, eq=False)
class DelayStats:
    """Total power P_m, mean delay T_m [s] and RMS delay spread S_tau [s]."""

    power: np.ndarray
    mean_delay: np.ndarray
    rms_delay: np.ndarray


def delay_spread(P_h, delays) -> DelayStats:
    """Moments of (already clipped) averaged PDPs; rows are positions.

    The second central moment is evaluated with normalized weights, which is
    algebraically the same as sqrt(E[tau^2] - T_m^2) but returns exactly 0
    for a single tap and avoids cancellation for narrow profiles.
    """
    P = np.atleast_2d(np.asarray(P_h, dtype=np.float64))
    tau = np.asarray(delays, dtype=np.float64)
    if P.shape[-1] != tau.size:
        raise ConfigError(f"{P.shape[-1]} taps but {tau.size} delays", module="frequency")
    if np.any(P < 0):
        raise ConfigError("PDP values must be non-negative", module="frequency")
    Pm = P.sum(axis=-1)
    if np.any(Pm <= 0):
        raise NumericError(f"all-zero profile at position {int(np.argmin(Pm))}",
                           module="frequency")
    w = P / Pm[:, None]
    Tm = w @ tau
    var = np.einsum("nk,nk->n", w, (tau[None, :] - Tm[:, None]) ** 2)
    return DelayStats(Pm, Tm, np.sqrt(var))


def freq_corr(tensor, t_i: int, W: int, normalization="overlap"):
    """Frequency correlation R_f(t_i, delta) over lags -(F-1) .. F-1.

    R_f(delta) = mean over antennas and the W window snapshots of
    sum_f H(f) conj(H(f + delta)), divided by the overlap count F - |delta|
    (``overlap``) or by F (``biased``). Complex values are averaged before
    any modulus is taken. Returns (lag_bins, R_f).
    """
    H = tensor.data if isinstance(tensor, CsiTensor) else np.asarray(tensor)
    T, M, F = H.shape
    if W < 1 or t_i < 0 or t_i + W > T:
        raise ConfigError(f"window [{t_i}, {t_i + W}) overruns T={T}", module="frequency")
    X = H[t_i:t_i + W].reshape(-1, F).astype(np.complex128)
    n = 2 * F
    spec = np.sum(np.abs(np.fft.fft(X, n, axis=-1)) ** 2, axis=0) / X.shape[0]
    s = np.fft.ifft(spec)                                  # s[d] = sum conj(H_f) H_{f+d}
    lags = np.arange(-(F - 1), F)
    R = np.conj(s[lags % n])                               # sum H_f conj(H_{f+d})
    if normalization == "overlap":
        R = R / (F - np.abs(lags))
    elif normalization == "biased":
        R = R / F
    else:
        raise ConfigError(f"unknown normalization {normalization!r}", module="frequency")
    R[F - 1] = R[F - 1].real
    return lags, R


@dataclass(frozen=True)
class CoherenceResult:
    bandwidth: float
    saturated: bool
    upper: float
    lower: float


def _first_crossing(lag_hz, ratio, level):
    """Linear-interpolated first lag where ``ratio`` drops to ``level``; None if never."""
    below = np.flatnonzero(ratio <= level)
    if below.size == 0:
        return None
    k = int(below[0])
    if k == 0:
        return float(lag_hz[0])
    r0, r1 = ratio[k - 1], ratio[k]
    frac = (r0 - level) / (r0 - r1)
    return float(lag_hz[k - 1] + frac * (lag_hz[k] - lag_hz[k - 1]))


def coherence_bandwidth(lags, R_f, bin_spacing: float, full_bandwidth: float | None = None,
                        level: float = INV_E) -> CoherenceResult:
    """Half the two-sided span between the first 1/e crossings of |R_f|/R_f(0).

    Without a crossing on either side the result saturates to
    ``full_bandwidth`` (default: number of bins x spacing) and is flagged.
    """
    lags = np.asarray(lags)
    R = np.asarray(R_f)
    zero = np.flatnonzero(lags == 0)
    if zero.size != 1:
        raise ConfigError("lag axis must contain zero exactly once", module="frequency")
    z = int(zero[0])
    r0 = R[z].real
    if not r0 > 0:
        raise NumericError("R_f(0) must be positive", module="frequency")
    ratio = np.abs(R) / r0
    hz = lags * bin_spacing
    pos = _first_crossing(hz[z + 1:], ratio[z + 1:], level)
    neg = _first_crossing(hz[:z][::-1], ratio[:z][::-1], level)
    if full_bandwidth is None:
        full_bandwidth = (lags.max() + 1) * bin_spacing
    if pos is None or neg is None:
        return CoherenceResult(float(full_bandwidth), True,
                               float("nan") if pos is None else pos,
                               float("nan") if neg is None else neg)
    return CoherenceResult(0.5 * (pos - neg), False, pos, neg)


def alpha_factor(mean_delay_spread: float, mean_coherence_bw: float) -> float:
    """Scaling factor alpha in B_coh = 1 / (alpha S_tau)."""
    if not mean_delay_spread > 0 or not mean_coherence_bw > 0:
        raise NumericError("alpha needs positive mean delay spread and coherence bandwidth",
                           module="frequency")
    return 1.0 / (mean_coherence_bw * mean_delay_spread)


@dataclass(frozen=True, eq=False)
class CoherenceStats:
    times: np.ndarray
    bandwidth: np.ndarray
    saturated: np.ndarray
    alpha: float | None


def coherence_stats(tensor: CsiTensor, starts, W: int, delay_stats: DelayStats | None = None,
                    normalization="overlap") -> CoherenceStats:
    cfg = tensor.config
    bw, sat = [], []
    for i in starts:
        lags, R = freq_corr(tensor, int(i), W, normalization)
        res = coherence_bandwidth(lags, R, cfg.bin_spacing, cfg.bandwidth)
        bw.append(res.bandwidth)
        sat.append(res.saturated)
    bw = np.asarray(bw)
    alpha = None
    if delay_stats is not None and bw.size:
        mean_s = float(np.mean(delay_stats.rms_delay))
        if mean_s > 0:
            alpha = alpha_factor(mean_s, float(np.mean(bw)))
    return CoherenceStats(tensor.timestamps[np.asarray(starts, dtype=int)], bw,
                          np.asarray(sat, dtype=bool), alpha)


def write_frequency_csv(times, delay_stats: DelayStats, coh: CoherenceStats, path,
                        positions=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "position", "S_tau_ns", "B_coh_MHz", "saturated_flag"])
        pos = positions if positions is not None else times
        for t, p, s, b, f in zip(times, pos, delay_stats.rms_delay, coh.bandwidth, coh.saturated):
            w.writerow([f"{t:.6f}", f"{p:.6f}", f"{s * 1e9:.6f}", f"{b / 1e6:.6f}", int(f)])
