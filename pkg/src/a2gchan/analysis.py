"""
End-to-end analysis of one trajectory: PDPs, received power, CMD maps and
stationary regions, delay/coherence statistics and array correlation,
written as plot-ready CSV files plus a one-row summary.

Every output file is written to a temporary name in the target directory and
renamed into place, so concurrent readers never see partial files.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import frequency, pdp, spatial, temporal
from .csi import CsiTensor
from .errors import ConfigError, DataError

MANIFEST_NAME = "manifest.json"
SUMMARY_NAME = "summary.csv"

_UMASK = os.umask(0)
os.umask(_UMASK)
SUMMARY_COLUMNS = [
    "trajectory",
    "SD_mean_m", "SD_std_m",
    "SA_mean_deg", "SA_std_deg",
    "S_tau_mean_ns", "S_tau_std_ns",
    "B_coh_mean_MHz", "B_coh_std_MHz",
    "alpha",
    "S_N_dist_mean", "S_N_angle_mean", "B_coh_saturated_fraction",
]


@dataclass(frozen=True)
class AnalysisParams:
    """Tunable analysis parameters; defaults follow the field setup."""

    window: int = 20                      # W, snapshots per averaging window
    c_th: float = 0.2
    band: tuple | None = None             # (start, stop) frequency bins, None = all
    angle_span: tuple = (40.0, 140.0)
    angle_step: float = 0.1
    stride: int | None = None             # distance-map spacing, None = W
    clip_db: float | None = 30.0
    taper: str | None = "hann"            # delay-domain window for PDP statistics
    reference: str = "global"
    rho_thresholds: tuple = (0.85, 0.80)
    spatial_element: tuple = (3, 3)
    spatial_angle: float = 90.0
    spatial_window: int | None = None     # None = W
    stacking: str = "column"

    def __post_init__(self):
        for name in ("band", "angle_span", "rho_thresholds", "spatial_element"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(v))
        self.validate()

    def validate(self):
        def bad(msg):
            raise ConfigError(msg, module="cli")

        if int(self.window) < 1:
            bad(f"W must be >= 1, got {self.window}")
        if not 0 < self.c_th < 1:
            bad(f"c_th must lie in (0, 1), got {self.c_th}")
        if self.band is not None and (len(self.band) != 2 or not 0 <= self.band[0] < self.band[1]):
            bad(f"band must be (start, stop) with 0 <= start < stop, got {self.band}")
        lo, hi = self.angle_span
        if not 0 <= lo < hi <= 180:
            bad(f"angle span must satisfy 0 <= lo < hi <= 180, got {self.angle_span}")
        if not 0 < self.angle_step <= hi - lo:
            bad(f"angle step must lie in (0, {hi - lo}], got {self.angle_step}")
        if self.stride is not None and self.stride < 1:
            bad("stride must be >= 1")
        if self.clip_db is not None and not self.clip_db > 0:
            bad("clip dB must be > 0")
        if any(not 0 < t < 1 for t in self.rho_thresholds):
            bad(f"rho thresholds must lie in (0, 1), got {self.rho_thresholds}")
        if len(self.spatial_element) != 2:
            bad("spatial element must be (row, col)")
        if self.spatial_window is not None and self.spatial_window < 1:
            bad("spatial window must be >= 1")
        if self.reference not in ("global", "snapshot", "none"):
            bad(f"unknown reference mode {self.reference!r}")

    @classmethod
    def from_mapping(cls, values) -> "AnalysisParams":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown analysis parameter(s): {sorted(unknown)}", module="cli")
        return cls(**values)


@dataclass
class RunManifest:
    """Everything needed to rerun a command and reproduce its outputs."""

    command: str
    inputs: dict
    params: dict
    output: str
    seed: int = 0
    name: str | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        try:
            raw = json.loads(text)
            return cls(**raw)
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"invalid manifest: {exc}", module="cli") from exc

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read manifest {path}: {exc}", module="cli") from exc
        return cls.from_json(text)

    def write(self, path) -> None:
        atomic_write(path, lambda tmp: Path(tmp).write_text(self.to_json()))


def atomic_write(path, writer) -> Path:
    """Call ``writer(tmp_path)`` then rename the temporary file onto ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        os.chmod(tmp, 0o666 & ~_UMASK)    # mkstemp creates 0600
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _rows_csv(path, header, rows):
    def write(tmp):
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    atomic_write(path, write)


def _fmt(v, spec=".6f"):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return "nan"
    return format(float(v), spec)


def _cdf_rows(metric, values):
    v = np.sort(np.asarray(values, dtype=np.float64))
    v = v[np.isfinite(v)]
    n = v.size
    return [[metric, _fmt(x, ".9g"), _fmt((k + 1) / n, ".9g")] for k, x in enumerate(v)]


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    """In-memory results of :func:`analyze`; files are a rendering of these."""

    name: str
    pdp: pdp.PdpSeries
    distance_map: temporal.CmdMap
    angle_map: temporal.CmdMap
    distance_region: temporal.StationaryRegion
    angle_region: temporal.StationaryRegion
    delay: frequency.DelayStats
    coherence: frequency.CoherenceStats
    spatial: spatial.SpatialCorr
    spatial_index: int
    summary: dict
    positions: np.ndarray
    bs: tuple

    @property
    def direction(self):
        return self.positions[-1] - self.positions[0]


def analyze(tensor: CsiTensor, positions, params: AnalysisParams | None = None,
            name="trajectory") -> AnalysisResult:
    """Run every analysis on a CSI tensor with one 3-D position per snapshot."""
    params = params or AnalysisParams()
    W = int(params.window)
    T = tensor.num_snapshots
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != (T, 3):
        raise DataError(f"need one position per snapshot: {positions.shape} vs T={T}",
                        module="cli")
    cfg = tensor.config
    bs = cfg.bs_position
    direction = positions[-1] - positions[0]

    series = pdp.pdp_series(tensor, W, params.taper, params.reference)
    dmap = temporal.cmd_map(tensor, positions, "distance", W, params.band,
                            stride=params.stride)
    amap = temporal.cmd_map(tensor, positions, "angle", W, params.band, params.angle_step,
                            params.angle_span, bs=bs, direction=direction)
    dreg = temporal.stationary_region(dmap, params.c_th, cfg.speed)
    areg = temporal.stationary_region(amap, params.c_th, cfg.speed)

    idx = dmap.indices
    P = pdp.clip_noise(series.averaged[idx], params.clip_db)
    dstats = frequency.delay_spread(P, series.delays)
    coh = frequency.coherence_stats(tensor, idx, W, dstats)

    Ws = int(params.spatial_window or W)
    if Ws > T:
        raise ConfigError(f"spatial window {Ws} longer than record T={T}", module="spatial")
    ang = temporal.angle_to_bs(positions[:T - Ws + 1], bs, direction)
    s_idx = int(np.argmin(np.abs(ang - params.spatial_angle)))
    Ra = temporal.antenna_corr(tensor, s_idx, Ws, params.band)
    corr = spatial.spatial_corr(Ra, cfg.array_rows, cfg.array_cols, params.stacking)

    summary = {
        "trajectory": name,
        "SD_mean_m": float(np.mean(dreg.sd)), "SD_std_m": float(np.std(dreg.sd)),
        "SA_mean_deg": float(np.mean(areg.sa)), "SA_std_deg": float(np.std(areg.sa)),
        "S_tau_mean_ns": float(np.mean(dstats.rms_delay) * 1e9),
        "S_tau_std_ns": float(np.std(dstats.rms_delay) * 1e9),
        "B_coh_mean_MHz": float(np.mean(coh.bandwidth) / 1e6),
        "B_coh_std_MHz": float(np.std(coh.bandwidth) / 1e6),
        "alpha": coh.alpha,
        "S_N_dist_mean": float(np.mean(dreg.sn)), "S_N_angle_mean": float(np.mean(areg.sn)),
        "B_coh_saturated_fraction": float(np.mean(coh.saturated)),
    }
    return AnalysisResult(name, series, dmap, amap, dreg, areg, dstats, coh, corr, s_idx,
                          summary, positions, tuple(bs))


def write_summary(rows, path) -> None:
    _rows_csv(path, SUMMARY_COLUMNS,
              [[r["trajectory"]] + [_fmt(r[k]) for k in SUMMARY_COLUMNS[1:]] for r in rows])


def read_summary(path) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != SUMMARY_COLUMNS:
                raise DataError(f"{path}: not a summary file", module="cli")
            return [{k: (v if k == "trajectory" else float(v)) for k, v in r.items()}
                    for r in reader]
    except OSError as exc:
        raise DataError(f"cannot read summary {path}: {exc}", module="cli") from exc


def write_outputs(result: AnalysisResult, params: AnalysisParams, out_dir) -> list:
    """Render ``result`` as CSV files in ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name, writer):
        written.append(atomic_write(out / name, writer))

    dmap, amap, dreg, areg = (result.distance_map, result.angle_map,
                              result.distance_region, result.angle_region)
    positions = result.positions
    along = temporal.along_track(positions)

    # PDPs at the distance-map reference positions
    sub = pdp.PdpSeries(result.pdp.delays, result.pdp.times[dmap.indices],
                        result.pdp.averaged[dmap.indices], result.pdp.window, result.pdp.shift)
    emit("pdp.csv", lambda p: pdp.write_pdp_csv(sub, p))
    emit("pdp_db.csv", lambda p: pdp.write_pdp_csv(sub, p, db=True))

    tot = pdp.received_power(result.pdp.averaged, "total", db=True)
    los = pdp.received_power(result.pdp.averaged, "los_tap", db=True)
    n = tot.size
    ang = temporal.angle_to_bs(positions[:n], result.bs, result.direction)
    emit("received_power.csv", lambda p: _write_power(p, result.pdp.times, along[:n], ang,
                                                     tot, los, dmap.indices))

    emit("cmd_distance.csv", lambda p: temporal.write_cmd_csv(dmap, p))
    emit("cmd_angle.csv", lambda p: temporal.write_cmd_csv(amap, p))

    d_ang = temporal.angle_to_bs(positions[dmap.indices], result.bs, result.direction)
    sa_at = _nearest_on_grid(amap.positions, areg.sa, d_ang, params.angle_step)
    sn_at = _nearest_on_grid(amap.positions, areg.sn, d_ang, params.angle_step)
    rows = [[_fmt(dmap.positions[i]), _fmt(dmap.times[i]), _fmt(d_ang[i]), _fmt(dreg.sd[i]),
             _fmt(sa_at[i]), _fmt(dreg.sn[i], ".9f"), _fmt(sn_at[i], ".9f")]
            for i in range(len(dmap))]
    emit("stationarity.csv", lambda p: _rows_csv(
        p, ["position_m", "time_s", "angle_deg", "SD_m", "SA_deg", "S_N_dist", "S_N_angle"],
        rows))
    emit("stationarity_cdf.csv", lambda p: _rows_csv(
        p, ["metric", "value", "cdf"],
        _cdf_rows("SD_m", dreg.sd) + _cdf_rows("SA_deg", areg.sa)
        + _cdf_rows("S_N_dist", dreg.sn) + _cdf_rows("S_N_angle", areg.sn)))

    emit("frequency.csv", lambda p: frequency.write_frequency_csv(
        dmap.times, result.delay, result.coherence, p, positions=dmap.positions))
    emit("frequency_cdf.csv", lambda p: _rows_csv(
        p, ["metric", "value", "cdf"],
        _cdf_rows("S_tau_ns", result.delay.rms_delay * 1e9)
        + _cdf_rows("B_coh_MHz", result.coherence.bandwidth / 1e6)))

    corr = result.spatial
    emit("spatial_rho.csv", lambda p: spatial.write_matrix_csv(corr.rho, p))
    r, c = params.spatial_element
    grid = spatial.element_map(corr, (r, c))
    emit(f"spatial_element_r{r}_c{c}.csv", lambda p: spatial.write_matrix_csv(grid, p))
    region_rows = []
    for th in params.rho_thresholds:
        count, _ = spatial.corr_region(grid, th, (r, c))
        ccount, cmask = spatial.corr_region(grid, th, (r, c), connected=True)
        region_rows.append([_fmt(th, ".4f"), count, ccount])
        emit(f"spatial_region_{th:.2f}.csv",
             lambda p, m=cmask: spatial.write_matrix_csv(m.astype(int), p))
    near, far = spatial.neighbor_contrast(corr)
    info_rows = [["snapshot", result.spatial_index], ["neighbor_mean_rho", _fmt(near)],
                 ["non_neighbor_mean_rho", _fmt(far)]]
    emit("spatial_regions.csv", lambda p: _rows_csv(
        p, ["threshold", "count", "connected_count"], region_rows))
    emit("spatial_info.csv", lambda p: _rows_csv(p, ["key", "value"], info_rows))

    emit(SUMMARY_NAME, lambda p: write_summary([result.summary], p))
    return written


def _nearest_on_grid(grid, values, query, step):
    """Value at the grid point nearest each query; NaN outside the grid."""
    k = np.clip(np.rint((np.asarray(query) - grid[0]) / step).astype(int), 0, grid.size - 1)
    out = np.asarray(values, dtype=np.float64)[k]
    outside = (query < grid[0] - step / 2) | (query > grid[-1] + step / 2)
    return np.where(outside, np.nan, out)


def _write_power(path, times, along, angle, total_db, los_db, marked):
    keep = np.asarray(marked)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "position_m", "angle_deg", "total_db", "los_tap_db"])
        for i in keep:
            w.writerow([_fmt(times[i]), _fmt(along[i]), _fmt(angle[i]),
                        _fmt(total_db[i]), _fmt(los_db[i])])
