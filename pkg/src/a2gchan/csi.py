"""
CSI data model: measurement configuration, CSI tensors, GPS trajectory logs
and the binary capture format.

Binary CSI file layout (all fields little-endian)
-------------------------------------------------

======  ==========  ===========================================================
offset  type        field
======  ==========  ===========================================================
0       8 bytes     magic ``b"A2GCSI\\x00\\x00"``
8       uint16      format version (currently 1)
10      int16       scale exponent ``e``: sample value = integer * 2**e
12      uint32 x5   T (snapshots), M (antennas), F (frequency bins),
                    array rows, array cols
32      float64 x10 center frequency [Hz], bandwidth [Hz], CSI interval [s],
                    GPS interval [s], speed [m/s], element spacing [m],
                    BS position x, y, z [m], BS height [m]
112     float64 xT  snapshot timestamps [s]
...     int16 x2TMF samples in (t, m, f) C order, each as interleaved (re, im)
======  ==========  ===========================================================

The header is therefore ``HEADER_SIZE + 8*T`` bytes and the payload
``4*T*M*F`` bytes. The scale exponent is chosen per file so that the largest
real or imaginary magnitude occupies at least 14 bits of the 16-bit word.
"""
from __future__ import annotations

import configparser
import csv
import io
import logging
import math
import struct
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, CsiFormatError, DataError, FixedPointRangeError

log = logging.getLogger(__name__)

MAGIC = b"A2GCSI\x00\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHh5I10d")
HEADER_SIZE = _HEADER.size

INT16_MIN = -32768
INT16_MAX = 32767
_CHUNK = 1024  # snapshots converted per block in the file codec


# ---------------------------------------------------------------------------
# Measurement configuration
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class MeasurementConfig:
    """Static parameters of a sounding run. Defaults reproduce the field setup."""

    center_frequency: float = 2.61e9
    bandwidth: float = 18e6
    num_antennas: int = 64
    num_freq_bins: int = 100
    csi_interval: float = 1e-3
    gps_interval: float = 10e-3
    speed: float = 1.5
    array_rows: int = 8
    array_cols: int = 8
    element_spacing: float = 0.08
    bs_position: tuple = (0.0, 0.0, 11.0)
    bs_height: float = 11.0

    def __post_init__(self):
        object.__setattr__(self, "bs_position", tuple(float(v) for v in self.bs_position))
        if len(self.bs_position) != 3:
            raise ConfigError("bs_position must have 3 coordinates", module="csi-model")
        if self.num_antennas != self.array_rows * self.array_cols:
            raise ConfigError(
                f"num_antennas={self.num_antennas} != array_rows*array_cols="
                f"{self.array_rows * self.array_cols}",
                module="csi-model",
            )
        if not self.bandwidth > 0:
            raise ConfigError("bandwidth must be > 0", module="csi-model")
        if not self.csi_interval > 0:
            raise ConfigError("csi_interval must be > 0", module="csi-model")
        if not self.gps_interval > 0:
            raise ConfigError("gps_interval must be > 0", module="csi-model")
        if self.num_freq_bins < 2:
            raise ConfigError("num_freq_bins must be >= 2", module="csi-model")
        if not self.center_frequency > 0:
            raise ConfigError("center_frequency must be > 0", module="csi-model")
        if not self.element_spacing > 0:
            raise ConfigError("element_spacing must be > 0", module="csi-model")

    @property
    def wavelength(self) -> float:
        from .geochannel import SPEED_OF_LIGHT

        return SPEED_OF_LIGHT / self.center_frequency

    @property
    def bin_spacing(self) -> float:
        return self.bandwidth / self.num_freq_bins

    @property
    def delay_resolution(self) -> float:
        return 1.0 / self.bandwidth

    def freq_offsets(self) -> np.ndarray:
        """Baseband frequency of each bin; F bins of width B/F centered on 0."""
        k = np.arange(self.num_freq_bins)
        return (k - self.num_freq_bins // 2) * self.bin_spacing


_INT_FIELDS = {"num_antennas", "num_freq_bins", "array_rows", "array_cols"}


def _parse_vector(text):
    return tuple(float(v) for v in text.replace("(", "").replace(")", "").split(","))


def config_from_mapping(values, module="csi-model") -> MeasurementConfig:
    """Build a MeasurementConfig from string key/values (missing keys keep defaults)."""
    known = {f.name for f in fields(MeasurementConfig)}
    kwargs = {}
    for key, raw in values.items():
        key = key.strip()
        if key not in known:
            raise ConfigError(f"unknown measurement key {key!r}", module=module)
        try:
            if key == "bs_position":
                kwargs[key] = _parse_vector(raw)
            elif key in _INT_FIELDS:
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}", module=module) from exc
    if "array_rows" in kwargs or "array_cols" in kwargs:
        kwargs.setdefault(
            "num_antennas",
            kwargs.get("array_rows", MeasurementConfig.array_rows)
            * kwargs.get("array_cols", MeasurementConfig.array_cols),
        )
    return MeasurementConfig(**kwargs)


def config_to_mapping(config: MeasurementConfig) -> dict:
    out = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name == "bs_position":
            out[f.name] = ", ".join(repr(float(v)) for v in value)
        else:
            out[f.name] = repr(value)
    return out


def load_config(path) -> MeasurementConfig:
    """Read a ``[measurement]`` key-value config file."""
    path = Path(path)
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}", module="csi-model")
    if not parser.has_section("measurement"):
        raise ConfigError(f"{path}: missing [measurement] section", module="csi-model")
    return config_from_mapping(dict(parser["measurement"]))


def dump_config(config: MeasurementConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser["measurement"] = config_to_mapping(config)
    with open(path, "w") as fh:
        parser.write(fh)


# ---------------------------------------------------------------------------
# CSI tensor
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class CsiTensor:
    """Complex frequency response H(t, m, f) with per-snapshot timestamps.

    The array is made read-only on construction so a tensor can be shared
    freely between readers.
    """

    config: MeasurementConfig
    data: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.iscomplexobj(data):
            data = data.astype(np.complex128)
        ts = np.asarray(self.timestamps, dtype=np.float64)
        if data.ndim != 3:
            raise DataError(f"CSI data must be 3-D (T, M, F), got shape {data.shape}",
                            module="csi-model")
        T, M, F = data.shape
        if M != self.config.num_antennas or F != self.config.num_freq_bins:
            raise DataError(
                f"data shape {data.shape} does not match config "
                f"(M={self.config.num_antennas}, F={self.config.num_freq_bins})",
                module="csi-model",
            )
        if ts.shape != (T,):
            raise DataError(f"expected {T} timestamps, got {ts.shape}", module="csi-model")
        if T > 1 and not np.all(np.diff(ts) > 0):
            raise DataError("timestamps must be strictly increasing", module="csi-model")
        if not np.isfinite(data).all():
            raise DataError("CSI data contains non-finite values", module="csi-model")
        data = data.view()
        data.flags.writeable = False
        ts = ts.view()
        ts.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "timestamps", ts)

    @property
    def num_snapshots(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, CsiTensor):
            return NotImplemented
        return (
            self.config == other.config
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None

    def with_data(self, data) -> "CsiTensor":
        return replace(self, data=data)

    def slice(self, start, stop) -> "CsiTensor":
        return replace(self, data=self.data[start:stop], timestamps=self.timestamps[start:stop])

    def quantized(self, exponent=None) -> "CsiTensor":
        """The tensor as it reads back after a trip through the fixed-point file format."""
        if exponent is None:
            exponent = choose_exponent(self.data)
        re, im = quantize(self.data, exponent)
        return self.with_data(dequantize(re, im, exponent))


# ---------------------------------------------------------------------------
# Fixed-point samples
# ---------------------------------------------------------------------------
class FixedPointSample(NamedTuple):
    """One 16-bit I/Q sample; value = (re + j*im) * 2**exponent."""

    re: int
    im: int
    exponent: int = 0

    @classmethod
    def from_complex(cls, value: complex, exponent: int = 0) -> "FixedPointSample":
        re, im = quantize(np.asarray([value]), exponent)
        return cls(int(re[0]), int(im[0]), exponent)

    def to_complex(self) -> complex:
        return complex(math.ldexp(self.re, self.exponent), math.ldexp(self.im, self.exponent))


def choose_exponent(values) -> int:
    """Smallest power-of-two scale that fits every component into int16.

    For nonzero data the largest magnitude then lands in (16383.5, 32767]
    integer units, i.e. it uses at least 14 bits.
    """
    values = np.asarray(values)
    peak = float(max(np.max(np.abs(values.real), initial=0.0),
                     np.max(np.abs(values.imag), initial=0.0)))
    if peak == 0.0:
        return 0
    mant, exp = math.frexp(peak / INT16_MAX)
    # ceil(log2(x)) without floating log error
    return exp - 1 if mant == 0.5 else exp


def quantize(values, exponent: int):
    """Round complex values to int16 (re, im) at scale 2**exponent.

    Raises FixedPointRangeError naming the first offending flat index.
    """
    values = np.asarray(values)
    scaled_re = np.rint(np.ldexp(values.real.astype(np.float64), -exponent))
    scaled_im = np.rint(np.ldexp(values.imag.astype(np.float64), -exponent))
    for name, part in (("re", scaled_re), ("im", scaled_im)):
        bad = (part < INT16_MIN) | (part > INT16_MAX)
        if np.any(bad):
            flat = int(np.flatnonzero(bad)[0])
            idx = np.unravel_index(flat, values.shape) if values.ndim else ()
            raise FixedPointRangeError(
                f"sample {name} at index {tuple(int(i) for i in idx)} = "
                f"{part.flat[flat]:.0f} outside int16 range at exponent {exponent}",
                index=tuple(int(i) for i in idx),
            )
    return scaled_re.astype(np.int16), scaled_im.astype(np.int16)


def dequantize(re, im, exponent: int, dtype=np.complex128) -> np.ndarray:
    """Exact for complex64 too: an int16 mantissa fits a float32 significand."""
    out = np.empty(np.shape(re), dtype=dtype)
    part = out.real.dtype
    out.real = np.ldexp(np.asarray(re, dtype=part), exponent)
    out.imag = np.ldexp(np.asarray(im, dtype=part), exponent)
    return out


# ---------------------------------------------------------------------------
# Binary IO
# ---------------------------------------------------------------------------
def payload_size(T: int, M: int, F: int) -> int:
    return HEADER_SIZE + 8 * T + 4 * T * M * F


def encode_csi(tensor: CsiTensor, exponent=None) -> bytes:
    cfg = tensor.config
    T, M, F = tensor.shape
    if exponent is None:
        exponent = choose_exponent(tensor.data)
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, exponent, T, M, F, cfg.array_rows, cfg.array_cols,
        cfg.center_frequency, cfg.bandwidth, cfg.csi_interval, cfg.gps_interval,
        cfg.speed, cfg.element_spacing, *cfg.bs_position, cfg.bs_height,
    )
    samples = np.empty((T, M, F, 2), dtype="<i2")
    for s in range(0, T, _CHUNK):
        try:
            re, im = quantize(tensor.data[s:s + _CHUNK], exponent)
        except FixedPointRangeError as exc:
            idx = (exc.index[0] + s,) + exc.index[1:]
            raise FixedPointRangeError(
                f"sample at index {idx} outside int16 range at exponent {exponent}",
                index=idx) from None
        samples[s:s + _CHUNK, ..., 0] = re
        samples[s:s + _CHUNK, ..., 1] = im
    return header + tensor.timestamps.astype("<f8").tobytes() + samples.tobytes()


def store_csi(tensor: CsiTensor, destination, exponent=None) -> int:
    """Write ``tensor`` to a path or binary file object; returns the byte count."""
    blob = encode_csi(tensor, exponent)
    try:
        if isinstance(destination, (str, Path)):
            with open(destination, "wb") as fh:
                fh.write(blob)
        else:
            destination.write(blob)
    except OSError as exc:
        raise CsiFormatError(f"failed to write CSI data: {exc}") from exc
    return len(blob)


def _take(buf: memoryview, offset: int, n: int, what: str):
    if offset + n > len(buf):
        missing = offset + n - len(buf)
        raise CsiFormatError(f"truncated stream: {missing} bytes missing while reading {what}")
    return buf[offset:offset + n]


def decode_csi(blob: bytes, dtype=np.complex128) -> CsiTensor:
    buf = memoryview(blob)
    head = _take(buf, 0, HEADER_SIZE, "header")
    if bytes(head[:8]) != MAGIC:
        raise CsiFormatError(f"bad magic {bytes(head[:8])!r}")
    (_, version, exponent, T, M, F, rows, cols, fc, bw, csi_dt, gps_dt, speed,
     spacing, bx, by, bz, bh) = _HEADER.unpack(head)
    if version != FORMAT_VERSION:
        raise CsiFormatError(f"unsupported format version {version} (expected {FORMAT_VERSION})")
    if M != rows * cols:
        raise CsiFormatError(f"dimension mismatch: M={M} but array is {rows}x{cols}")
    try:
        config = MeasurementConfig(
            center_frequency=fc, bandwidth=bw, num_antennas=M, num_freq_bins=F,
            csi_interval=csi_dt, gps_interval=gps_dt, speed=speed, array_rows=rows,
            array_cols=cols, element_spacing=spacing, bs_position=(bx, by, bz), bs_height=bh,
        )
    except ConfigError as exc:
        raise CsiFormatError(f"invalid configuration block: {exc}") from exc
    off = HEADER_SIZE
    ts = np.frombuffer(_take(buf, off, 8 * T, "timestamps"), dtype="<f8")
    off += 8 * T
    n = 4 * T * M * F
    raw = np.frombuffer(_take(buf, off, n, "samples"), dtype="<i2").reshape(T, M, F, 2)
    off += n
    if off != len(buf):
        raise CsiFormatError(
            f"dimension mismatch: {len(buf) - off} trailing bytes after T={T}, M={M}, F={F}"
        )
    data = np.empty((T, M, F), dtype=dtype)
    for s in range(0, T, _CHUNK):
        data[s:s + _CHUNK] = dequantize(raw[s:s + _CHUNK, ..., 0], raw[s:s + _CHUNK, ..., 1],
                                        exponent, dtype)
    return CsiTensor(config=config, data=data, timestamps=ts.astype(np.float64))


def load_csi(source, dtype=np.complex128) -> CsiTensor:
    """Read a CSI tensor from a path, bytes or binary file object.

    ``dtype=np.complex64`` halves memory for long records and is still exact.
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        return decode_csi(bytes(source), dtype)
    if isinstance(source, (str, Path)):
        try:
            with open(source, "rb") as fh:
                blob = fh.read()
        except OSError as exc:
            raise CsiFormatError(f"cannot read {source}: {exc}") from exc
        return decode_csi(blob, dtype)
    return decode_csi(source.read(), dtype)


# ---------------------------------------------------------------------------
# Trajectory logs
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class TrajectoryLog:
    """GPS fixes: ``times`` (N,) seconds and ``positions`` (N, 3) meters."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        p = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if t.shape[0] != p.shape[0]:
            raise DataError(f"{t.shape[0]} timestamps but {p.shape[0]} positions",
                            module="csi-model")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise DataError("trajectory timestamps must be strictly increasing",
                            module="csi-model")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)

    def __len__(self):
        return self.times.shape[0]

    def position_at(self, t) -> np.ndarray:
        """Linear interpolation in time, clamped to the first/last fix."""
        if len(self) == 0:
            raise DataError("empty trajectory log", module="csi-model")
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        return np.stack([np.interp(t, self.times, self.positions[:, k]) for k in range(3)],
                        axis=-1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestamp_s", "x_m", "y_m", "z_m"])
            for t, (x, y, z) in zip(self.times, self.positions):
                writer.writerow([repr(float(t)), repr(float(x)), repr(float(y)), repr(float(z))])

    @classmethod
    def from_csv(cls, path) -> "TrajectoryLog":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DataError(f"cannot read trajectory {path}: {exc}", module="csi-model") from exc
        reader = csv.DictReader(io.StringIO(text))
        expected = ["timestamp_s", "x_m", "y_m", "z_m"]
        if reader.fieldnames != expected:
            raise DataError(f"{path}: expected header {','.join(expected)}", module="csi-model")
        rows = [[float(r[k]) for k in expected] for r in reader]
        arr = np.asarray(rows, dtype=np.float64).reshape(-1, 4)
        return cls(arr[:, 0], arr[:, 1:])


def align_trajectory(log_: TrajectoryLog, tensor: CsiTensor) -> np.ndarray:
    """One interpolated 3-D position per CSI snapshot, shape (T, 3)."""
    if len(log_) == 0:
        raise DataError("empty trajectory log", module="csi-model")
    ts = tensor.timestamps
    if ts.size and (ts[0] < log_.times[0] or ts[-1] > log_.times[-1]):
        log.warning(
            "trajectory log [%.3f, %.3f] s does not span CSI [%.3f, %.3f] s; clamping",
            log_.times[0], log_.times[-1], ts[0], ts[-1],
        )
    return log_.position_at(ts)
