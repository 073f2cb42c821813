"""
Delay-domain processing: impulse responses, instantaneous and averaged power
delay profiles, delay re-referencing, noise clipping and received power.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .csi import CsiTensor
from .errors import ConfigError, NumericError


def _data(tensor_or_array):
    return tensor_or_array.data if isinstance(tensor_or_array, CsiTensor) else np.asarray(tensor_or_array)


def taper(num_bins: int, window=None) -> np.ndarray | None:
    """Frequency-domain taper with unit mean power, or None for a rectangular window."""
    if window in (None, "none", "rect"):
        return None
    if window == "hann":
        w = np.hanning(num_bins + 2)[1:-1]
    elif window == "hamming":
        w = np.hamming(num_bins)
    else:
        raise ConfigError(f"unknown window {window!r}", module="pdp")
    return w / np.sqrt(np.mean(w ** 2))


def impulse_response(tensor, window=None) -> np.ndarray:
    """Unitary inverse DFT of H(t, m, f) over the frequency axis -> h(t, m, tau)."""
    H = _data(tensor)
    w = taper(H.shape[-1], window)
    if w is not None:
        H = H * w
    return np.fft.ifft(H, axis=-1, norm="ortho")


def instantaneous_pdp(h) -> np.ndarray:
    h = np.asarray(h)
    return h.real.astype(np.float64) ** 2 + h.imag.astype(np.float64) ** 2


def averaged_pdp(P, W: int) -> np.ndarray:
    """Mean over W consecutive snapshots and all antennas.

    ``P`` is (T, M, tau); the result is (T - W + 1, tau) with row i averaging
    snapshots i .. i+W-1.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim == 2:
        P = P[:, None, :]
    T = P.shape[0]
    if not 1 <= W <= T:
        raise ConfigError(f"window W={W} must satisfy 1 <= W <= T={T}", module="pdp")
    per_snapshot = P.mean(axis=1)
    return sliding_window_view(per_snapshot, W, axis=0).mean(axis=-1)


def antenna_mean_pdp(tensor, window=None, chunk=1024) -> np.ndarray:
    """Instantaneous PDP averaged over antennas, (T, F), computed in snapshot chunks."""
    H = _data(tensor)
    out = np.empty((H.shape[0], H.shape[-1]))
    for s in range(0, H.shape[0], chunk):
        out[s:s + chunk] = instantaneous_pdp(impulse_response(H[s:s + chunk], window)).mean(axis=1)
    return out


def relative_delays(num_bins: int, bandwidth: float) -> np.ndarray:
    """Signed delay of each IDFT bin: bins past F/2 wrap to negative delays."""
    return np.fft.fftfreq(num_bins, d=1.0 / num_bins) / bandwidth


def rereference(P_h, mode="global"):
    """Circularly shift the delay axis so the strongest tap lands on bin 0.

    ``global`` uses a single shift for the whole record (the strongest tap over
    all positions), ``snapshot`` shifts every profile independently. Returns the
    shifted profiles and the shift(s) applied.
    """
    P_h = np.asarray(P_h)
    if mode == "global":
        shift = int(np.unravel_index(np.argmax(P_h), P_h.shape)[-1])
        return np.roll(P_h, -shift, axis=-1), shift
    if mode == "snapshot":
        shifts = np.argmax(P_h, axis=-1)
        idx = (np.arange(P_h.shape[-1]) + shifts[..., None]) % P_h.shape[-1]
        return np.take_along_axis(P_h, idx, axis=-1), shifts
    if mode in (None, "none"):
        return P_h, 0
    raise ConfigError(f"unknown re-referencing mode {mode!r}", module="pdp")


def clip_noise(P_h, clip_db=30.0) -> np.ndarray:
    """Zero taps more than ``clip_db`` below each profile's peak (None disables)."""
    P_h = np.asarray(P_h, dtype=np.float64)
    if clip_db is None:
        return P_h
    peak = P_h.max(axis=-1, keepdims=True)
    return np.where(P_h >= peak * 10 ** (-clip_db / 10), P_h, 0.0)


def received_power(P_h, mode="total", db=False) -> np.ndarray:
    """Per-position received power from averaged PDPs.

    ``los_tap`` reads relative delay 0, so the profiles should already be
    re-referenced. With ``db`` the trajectory maximum is set to 0 dB.
    """
    P_h = np.atleast_2d(np.asarray(P_h, dtype=np.float64))
    if mode == "total":
        p = P_h.sum(axis=-1)
    elif mode == "los_tap":
        p = P_h[:, 0].copy()
    else:
        raise ConfigError(f"unknown received power mode {mode!r}", module="pdp")
    if db:
        peak = p.max()
        if not peak > 0:
            raise NumericError("all-zero profile cannot be dB-normalized", module="pdp")
        with np.errstate(divide="ignore"):
            p = 10 * np.log10(p / peak)
    return p


@dataclass(frozen=True, eq=False)
class PdpSeries:
    """Averaged PDPs along a trajectory.

    ``averaged`` is (T - W + 1, F) and re-referenced; ``delays`` holds the
    signed relative delay of each column and ``times`` the start time of
    each averaging window. ``instantaneous`` is kept only when requested.
    """

    delays: np.ndarray
    times: np.ndarray
    averaged: np.ndarray
    window: int
    shift: object
    instantaneous: np.ndarray | None = None


def pdp_series(tensor: CsiTensor, W: int, window=None, reference="global",
               keep_instantaneous=False) -> PdpSeries:
    H = tensor.data
    inst = None
    if keep_instantaneous:
        inst = instantaneous_pdp(impulse_response(H, window))
        per = inst.mean(axis=1)
    else:
        per = antenna_mean_pdp(H, window)
    avg = averaged_pdp(per, W)
    avg, shift = rereference(avg, reference)
    if inst is not None and reference == "global":
        inst = np.roll(inst, -shift, axis=-1)
    delays = relative_delays(H.shape[-1], tensor.config.bandwidth)
    return PdpSeries(delays, tensor.timestamps[:avg.shape[0]], avg, W, shift, inst)


def write_pdp_csv(series: PdpSeries, path, db=False, floor_db=-200.0) -> None:
    """Long-format export (time_s, delay_s, value), delays sorted ascending.

    With ``db`` values are normalized to the global maximum and floored.
    """
    order = np.argsort(series.delays)
    vals = series.averaged[:, order]
    if db:
        peak = vals.max()
        if not peak > 0:
            raise NumericError("all-zero PDP cannot be dB-normalized", module="pdp")
        with np.errstate(divide="ignore"):
            vals = np.maximum(10 * np.log10(vals / peak), floor_db)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "delay_s", "power_db" if db else "power"])
        for t, row in zip(series.times, vals):
            for d, v in zip(series.delays[order], row):
                w.writerow([f"{t:.6f}", f"{d:.6e}", f"{v:.9e}"])
