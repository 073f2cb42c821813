"""
Uplink sounding chain: Zadoff-Chu sequences, PSS frame detection by
cross-correlation and least-squares channel estimation.

Frame layout used by :func:`sound` for each CSI snapshot::

    | idle (random offset) | PSS (time-domain ZC) | CP | OFDM pilot symbol (F) | tail |

The pilot symbol carries a cyclically extended Zadoff-Chu sequence on the
F subcarriers. The channel acts on it as a circular convolution (delays are
well within the cyclic prefix), so after PSS timing and CP removal an FFT
yields ``H * X + noise`` per antenna and subcarrier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .csi import CsiTensor
from .errors import ConfigError, NumericError, SyncError


@dataclass(frozen=True, eq=False)
class PilotSequence:
    root: int
    length: int
    samples: np.ndarray


def zadoff_chu(root: int = 25, length: int = 63) -> PilotSequence:
    if length < 1 or not 0 < root < length:
        raise ConfigError(f"root must satisfy 0 < root < length, got {root}/{length}",
                          module="sounder-sim")
    if math.gcd(root, length) != 1:
        raise ConfigError(f"root {root} and length {length} are not coprime",
                          module="sounder-sim")
    k = np.arange(length, dtype=np.int64)
    # reduce the quadratic phase modulo 2N before scaling to keep it exact for long sequences
    if length % 2:
        num = (root * k * (k + 1)) % (2 * length)
    else:
        num = (root * k * k) % (2 * length)
    return PilotSequence(root, length, np.exp(-1j * np.pi * num / length))


def _largest_prime_at_most(n):
    for p in range(n, 1, -1):
        if all(p % d for d in range(2, int(p ** 0.5) + 1)):
            return p
    raise ConfigError(f"no prime <= {n}", module="sounder-sim")


def pilot_symbol(num_bins: int, root: int = 25) -> np.ndarray:
    """Frequency-domain pilot: ZC of the largest prime length <= F, cyclically extended."""
    n_zc = _largest_prime_at_most(num_bins)
    zc = zadoff_chu(root % n_zc or 1, n_zc).samples
    return zc[np.arange(num_bins) % n_zc]


@dataclass(frozen=True)
class SyncResult:
    offset: int
    peak: float
    threshold: float
    detected: bool

    def require(self) -> int:
        if not self.detected:
            raise SyncError(f"no PSS peak above threshold {self.threshold:g} "
                            f"(best {self.peak:.3f} at {self.offset})")
        return self.offset


def pss_detect(received, reference, threshold: float = 0.7) -> SyncResult:
    """Locate ``reference`` in ``received``.

    The offset is the argmax of |cross-correlation|; detection is reported
    only when the correlation there, normalized by both signal energies
    (a value in [0, 1]), reaches ``threshold``.
    """
    x = reference.samples if isinstance(reference, PilotSequence) else np.asarray(reference)
    r = np.asarray(received, dtype=np.complex128)
    L = x.size
    if r.size < L:
        raise ConfigError("received sequence shorter than reference", module="sounder-sim")
    xc = np.abs(signal.correlate(r, x, mode="valid"))
    offset = int(np.argmax(xc))
    e = np.concatenate(([0.0], np.cumsum(np.abs(r) ** 2)))
    window = e[offset + L] - e[offset]
    denom = np.sqrt(window * np.vdot(x, x).real)
    peak = float(xc[offset] / denom) if denom > 0 else 0.0
    return SyncResult(offset, peak, threshold, peak >= threshold)


def ls_estimate(rx_pilot, tx_pilot) -> np.ndarray:
    """Per-subcarrier least squares: H = rx / tx, broadcast over leading axes."""
    tx = np.asarray(tx_pilot)
    zero = np.flatnonzero(np.abs(tx) == 0)
    if zero.size:
        raise NumericError(f"transmit pilot is zero at bin(s) {zero.tolist()}",
                           module="sounder-sim")
    return np.asarray(rx_pilot) / tx


def nmse_db(estimate, truth, chunk=1 << 20) -> float:
    """10 log10(||estimate - truth||^2 / ||truth||^2), accumulated in blocks."""
    est = np.asarray(estimate).reshape(-1)
    ref = np.asarray(truth).reshape(-1)
    if est.size != ref.size:
        raise ConfigError(f"estimate has {est.size} samples, truth {ref.size}",
                          module="sounder-sim")
    err = energy = 0.0
    for s in range(0, ref.size, chunk):
        r = ref[s:s + chunk].astype(np.complex128)
        err += float(np.sum(np.abs(est[s:s + chunk] - r) ** 2))
        energy += float(np.sum(np.abs(r) ** 2))
    if energy == 0:
        raise NumericError("reference channel has zero energy", module="sounder-sim")
    with np.errstate(divide="ignore"):
        return float(10 * np.log10(err / energy))


@dataclass(frozen=True)
class SoundingReport:
    nmse_db: float
    snr_db: float | None
    timing_errors: int


def sound(tensor: CsiTensor, snr_db=None, seed: int = 0, pss: PilotSequence | None = None,
          pilot_root: int = 25, cp: int = 16, max_offset: int = 64,
          threshold: float = 0.7):
    """Run every snapshot of ``tensor`` through the sounding chain.

    Returns the LS-estimated tensor and a :class:`SoundingReport`. ``snr_db``
    is the per-subcarrier SNR relative to the mean channel power; ``None``
    disables noise. Snapshot ``i`` uses its own generator seeded by
    (seed, i).
    """
    pss = pss or zadoff_chu(25, 63)
    T, M, F = tensor.shape
    X = pilot_symbol(F, pilot_root)
    H = tensor.data
    power = float(np.mean(np.abs(H) ** 2))
    if power == 0:
        raise NumericError("cannot sound an all-zero channel", module="sounder-sim")
    sigma = 0.0 if snr_db is None else np.sqrt(power / 10 ** (snr_db / 10) / 2)
    L = pss.length
    sym_start = L + cp
    frame_len = max_offset + sym_start + F + 8

    est = np.empty_like(H)
    timing_errors = 0
    for i in range(T):
        rng = np.random.default_rng([seed, i])
        true_off = int(rng.integers(0, max_offset))
        y = np.fft.ifft(H[i] * X, axis=-1, norm="ortho")               # (M, F)
        stream = np.zeros((M, frame_len), dtype=np.complex128)
        stream[:, true_off:true_off + L] = np.sqrt(power) * pss.samples
        s = true_off + sym_start
        stream[:, s - cp:s] = y[:, -cp:]
        stream[:, s:s + F] = y
        if sigma:
            stream += sigma * (rng.standard_normal(stream.shape)
                               + 1j * rng.standard_normal(stream.shape))
        off = pss_detect(stream[0], pss, threshold).require()
        timing_errors += off != true_off
        s = off + sym_start
        Y = np.fft.fft(stream[:, s:s + F], axis=-1, norm="ortho")
        est[i] = ls_estimate(Y, X)
    estimated = tensor.with_data(est)
    return estimated, SoundingReport(nmse_db(est, H), snr_db, timing_errors)
