"""
Deterministic geometry-based A2G channel synthesis.

A scene holds a uniform rectangular array (URA) mounted on a wall, a straight
drone trajectory flown at constant speed, a flat ground plane and a set of
point scatterers. For every CSI snapshot the drone position is advanced
along the trajectory and the multipath is recomputed from geometry:

* the line-of-sight path, amplitude ``lambda / (4 pi d)``;
* one specular ground bounce (image method) scaled by the ground
  reflection coefficient;
* one single-bounce path per scatterer, amplitude from the bistatic radar
  equation ``lambda sqrt(sigma) / ((4 pi)^1.5 d1 d2)`` times the reflection
  magnitude.

Each path is applied as a far-field plane wave across the array (phase only,
no per-element delay) and as a pure delay across frequency. Doppler is
implicit in the snapshot-to-snapshot geometry.

Coordinates: z is up, the ground plane sits at ``ground_height``. The array
faces ``normal``; its column axis is the horizontal direction
``normal x z`` and rows run top to bottom.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .csi import CsiTensor, MeasurementConfig, TrajectoryLog, config_from_mapping, config_to_mapping
from .errors import ConfigError, GeometryError

SPEED_OF_LIGHT = 299_792_458.0
_UP = np.array([0.0, 0.0, 1.0])

PATH_KINDS = ("los", "ground", "scatterer")


def element_grid(index, rows, cols, stacking="column"):
    """(row, col) of a flat antenna index.

    ``column`` stacking numbers elements down each column first
    (index = col*rows + row), so index offsets of ``rows`` are horizontal
    neighbors. ``row`` stacking is the transpose convention.
    """
    index = np.asarray(index)
    if stacking == "column":
        return index % rows, index // rows
    if stacking == "row":
        return index // cols, index % cols
    raise ConfigError(f"unknown stacking {stacking!r}", module="geo-channel")


def element_index(row, col, rows, cols, stacking="column"):
    if stacking == "column":
        return np.asarray(col) * rows + np.asarray(row)
    if stacking == "row":
        return np.asarray(row) * cols + np.asarray(col)
    raise ConfigError(f"unknown stacking {stacking!r}", module="geo-channel")


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / n


@dataclass(frozen=True, eq=False)
class UraGeometry:
    """Planar rows x cols array with square spacing, centered on ``center``."""

    rows: int = 8
    cols: int = 8
    spacing: float = 0.08
    center: tuple = (0.0, 0.0, 11.0)
    normal: tuple = (0.0, 1.0, 0.0)
    stacking: str = "column"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise GeometryError("array needs at least one row and column")
        if not self.spacing > 0:
            raise GeometryError("element spacing must be > 0")
        n = np.asarray(self.normal, dtype=np.float64)
        if n.shape != (3,) or np.linalg.norm(n) == 0:
            raise GeometryError("normal must be a nonzero 3-vector")
        n = n / np.linalg.norm(n)
        if abs(n @ _UP) > 1 - 1e-9:
            raise GeometryError("array normal must not be vertical")
        object.__setattr__(self, "normal", tuple(n))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        element_grid(0, self.rows, self.cols, self.stacking)

    @property
    def num_elements(self) -> int:
        return self.rows * self.cols

    @property
    def axes(self):
        """Boresight, horizontal (column) and vertical unit vectors."""
        n = np.asarray(self.normal)
        h = np.cross(n, _UP)
        h /= np.linalg.norm(h)
        v = np.cross(h, n)
        return n, h, v

    def relative_positions(self) -> np.ndarray:
        """Element offsets from the array center, shape (M, 3), in index order."""
        _, h, v = self.axes
        row, col = element_grid(np.arange(self.num_elements), self.rows, self.cols, self.stacking)
        x = (col - (self.cols - 1) / 2) * self.spacing
        z = ((self.rows - 1) / 2 - row) * self.spacing
        return x[:, None] * h + z[:, None] * v

    def element_positions(self) -> np.ndarray:
        return np.asarray(self.center) + self.relative_positions()

    def direction(self, azimuth, elevation) -> np.ndarray:
        """Unit vector for azimuth (from boresight toward the column axis) and elevation."""
        n, h, v = self.axes
        az = np.asarray(azimuth, dtype=np.float64)[..., None]
        el = np.asarray(elevation, dtype=np.float64)[..., None]
        return np.cos(el) * (np.cos(az) * n + np.sin(az) * h) + np.sin(el) * v

    def angles(self, direction):
        """Inverse of :meth:`direction`: (azimuth, elevation) in radians."""
        n, h, v = self.axes
        u = _unit(direction)
        el = np.arcsin(np.clip(u @ v, -1.0, 1.0))
        az = np.arctan2(u @ h, u @ n)
        return az, el

    @classmethod
    def from_config(cls, config: MeasurementConfig, normal=(0.0, 1.0, 0.0), stacking="column"):
        return cls(config.array_rows, config.array_cols, config.element_spacing,
                   config.bs_position, normal, stacking)


def steering_phase(ura: UraGeometry, azimuth, elevation, wavelength) -> np.ndarray:
    """Far-field array response exp(j 2 pi / lambda * p_m . u), one entry per element."""
    if not wavelength > 0:
        raise GeometryError("wavelength must be > 0")
    u = ura.direction(azimuth, elevation)
    return _steering(ura.relative_positions(), u, wavelength)


def _steering(rel_pos, directions, wavelength):
    phase = (2 * np.pi / wavelength) * (directions @ rel_pos.T)
    return np.exp(1j * phase)


@dataclass(frozen=True)
class PathComponent:
    delay: float
    gain: complex
    azimuth: float
    elevation: float
    kind: str


@dataclass(frozen=True)
class Scatterer:
    """Point scatterer; ``cross_section`` is its bistatic radar cross-section in m^2."""

    position: tuple
    reflection: float = 1.0
    cross_section: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        if not 0.0 <= self.reflection <= 1.0:
            raise GeometryError(f"reflection magnitude {self.reflection} outside [0, 1]")
        if self.cross_section < 0:
            raise GeometryError("cross_section must be >= 0")


@dataclass(frozen=True, eq=False)
class Scene:
    ura: UraGeometry
    start: tuple
    end: tuple
    speed: float = 1.5
    scatterers: tuple = ()
    ground_height: float = 0.0
    ground_reflection: complex = -0.5
    snr_db: float | None = None
    seed: int = 0
    name: str = "scene"

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(c) for c in self.start))
        object.__setattr__(self, "end", tuple(float(c) for c in self.end))
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        object.__setattr__(self, "ground_reflection", complex(self.ground_reflection))
        if not self.speed > 0:
            raise GeometryError("trajectory speed must be > 0")
        if self.length == 0:
            raise GeometryError("trajectory start and end coincide")
        if abs(self.ground_reflection) > 1:
            raise GeometryError("|ground_reflection| must be <= 1")
        if self.ura.center[2] <= self.ground_height:
            raise GeometryError("array must sit above the ground plane")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))

    @property
    def direction(self) -> np.ndarray:
        return _unit(np.subtract(self.end, self.start))

    @property
    def max_duration(self) -> float:
        return self.length / self.speed

    def position_at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        return np.asarray(self.start) + (self.speed * t)[:, None] * self.direction

    def gps_log(self, duration, interval) -> TrajectoryLog:
        n = int(np.floor(duration / interval + 1e-9)) + 1
        t = np.arange(n) * interval
        return TrajectoryLog(t, self.position_at(t))


def _path_arrays(scene: Scene, uav, wavelength):
    """Vectorized multipath for positions ``uav`` (n, 3).

    Returns delays (n, P), complex gains (n, P), unit arrival directions
    (n, P, 3) at the array center, and the kind of each path.
    """
    uav = np.atleast_2d(np.asarray(uav, dtype=np.float64))
    c = np.asarray(scene.ura.center)
    k = 2 * np.pi / wavelength
    if np.any(uav[:, 2] <= scene.ground_height):
        raise GeometryError("UAV must be above the ground plane")

    lengths, amps, points, kinds = [], [], [], []

    d_los = np.linalg.norm(uav - c, axis=1)
    if np.any(d_los < 1e-9):
        raise GeometryError("UAV coincides with the array reference point")
    lengths.append(d_los)
    amps.append(wavelength / (4 * np.pi * d_los) + 0j)
    points.append(uav)
    kinds.append("los")

    if scene.ground_reflection != 0:
        image = uav.copy()
        image[:, 2] = 2 * scene.ground_height - uav[:, 2]
        d_gnd = np.linalg.norm(image - c, axis=1)
        lengths.append(d_gnd)
        amps.append(scene.ground_reflection * wavelength / (4 * np.pi * d_gnd))
        points.append(image)
        kinds.append("ground")

    for s in scene.scatterers:
        sp = np.asarray(s.position)
        d1 = np.linalg.norm(uav - sp, axis=1)
        d2 = float(np.linalg.norm(sp - c))
        if d2 < 1e-9 or np.any(d1 < 1e-9):
            raise GeometryError(f"scatterer at {s.position} coincides with an endpoint")
        seg = (wavelength / (4 * np.pi * d1)) * (wavelength / (4 * np.pi * d2))
        aperture = np.sqrt(4 * np.pi * s.cross_section) / wavelength
        lengths.append(d1 + d2)
        amps.append(s.reflection * aperture * seg + 0j)
        points.append(np.broadcast_to(sp, uav.shape))
        kinds.append("scatterer")

    L = np.stack(lengths, axis=1)
    gains = np.stack(amps, axis=1) * np.exp(-1j * k * L)
    dirs = _unit(np.stack(points, axis=1) - c)
    return L / SPEED_OF_LIGHT, gains, dirs, kinds


def resolve_paths(scene: Scene, uav_position, wavelength=None, config=None) -> list[PathComponent]:
    """Multipath components seen by the array for one drone position."""
    if wavelength is None:
        wavelength = (config or MeasurementConfig()).wavelength
    delays, gains, dirs, kinds = _path_arrays(scene, np.asarray(uav_position)[None, :], wavelength)
    az, el = scene.ura.angles(dirs[0])
    return [
        PathComponent(float(delays[0, p]), complex(gains[0, p]), float(az[p]), float(el[p]), kinds[p])
        for p in range(len(kinds))
    ]


def _check_array(scene: Scene, config: MeasurementConfig):
    ura = scene.ura
    if (ura.rows, ura.cols) != (config.array_rows, config.array_cols):
        raise ConfigError(
            f"scene array {ura.rows}x{ura.cols} != config {config.array_rows}x{config.array_cols}",
            module="geo-channel",
        )
    if not np.isclose(ura.spacing, config.element_spacing):
        raise ConfigError("scene element spacing differs from config", module="geo-channel")
    if not np.allclose(ura.center, config.bs_position):
        raise ConfigError("scene array center differs from config bs_position",
                          module="geo-channel")


def synth_csi(scene: Scene, config: MeasurementConfig | None = None, duration=None,
              snr_db=None, seed=None, dtype=np.complex128, chunk=512) -> CsiTensor:
    """Synthesize H(t, m, f) along the scene trajectory.

    ``duration`` defaults to the full trajectory. Noise (complex white
    Gaussian, SNR relative to the mean channel power of the whole tensor) is
    added when ``snr_db`` (or ``scene.snr_db``) is set; each snapshot draws
    from its own generator seeded by (seed, snapshot index).
    """
    if config is None:
        config = MeasurementConfig(
            array_rows=scene.ura.rows, array_cols=scene.ura.cols,
            num_antennas=scene.ura.num_elements, element_spacing=scene.ura.spacing,
            bs_position=scene.ura.center, bs_height=scene.ura.center[2], speed=scene.speed,
        )
    _check_array(scene, config)
    if duration is None:
        duration = scene.max_duration
    if not duration > 0:
        raise ConfigError("duration must be > 0", module="geo-channel")
    if duration > scene.max_duration * (1 + 1e-9):
        raise ConfigError(
            f"duration {duration:g} s exceeds trajectory time {scene.max_duration:g} s",
            module="geo-channel",
        )
    snr_db = scene.snr_db if snr_db is None else snr_db
    seed = scene.seed if seed is None else seed

    T = int(np.floor(duration / config.csi_interval + 1e-9))
    if T < 1:
        raise ConfigError("duration shorter than one CSI interval", module="geo-channel")
    times = np.arange(T) * config.csi_interval
    lam = config.wavelength
    freqs = config.freq_offsets()
    rel = scene.ura.relative_positions()
    M, F = rel.shape[0], freqs.size

    data = np.empty((T, M, F), dtype=dtype)
    for s0 in range(0, T, chunk):
        t = times[s0:s0 + chunk]
        delays, gains, dirs, _ = _path_arrays(scene, scene.position_at(t), lam)
        spatial = _steering(rel, dirs, lam) * gains[..., None]          # (n, P, M)
        spectral = np.exp(-2j * np.pi * delays[..., None] * freqs)      # (n, P, F)
        data[s0:s0 + chunk] = np.matmul(spatial.transpose(0, 2, 1), spectral)

    if snr_db is not None:
        power = float(np.mean(np.abs(data) ** 2))
        sigma = np.sqrt(power / 10 ** (snr_db / 10) / 2)
        for i in range(T):
            rng = np.random.default_rng([seed, i])
            noise = rng.standard_normal((M, F, 2))
            data[i] += (sigma * (noise[..., 0] + 1j * noise[..., 1])).astype(dtype)

    cfg = replace(config, speed=scene.speed)
    return CsiTensor(config=cfg, data=data, timestamps=times)


# ---------------------------------------------------------------------------
# Reference scenes and scene config files
# ---------------------------------------------------------------------------
DEFAULT_SCATTERERS = (
    # building facade beside the array, a tree line and a lamp post
    Scatterer((-9.0, 2.0, 9.0), reflection=0.6, cross_section=40.0),
    Scatterer((10.0, 4.0, 3.0), reflection=0.4, cross_section=25.0),
    Scatterer((3.0, 25.0, 4.0), reflection=0.5, cross_section=30.0),
)


def table1_scene(height=11.0, perpendicular=12.0, length=30.0, config=None,
                 scatterers=DEFAULT_SCATTERERS, ground_reflection=-0.3, seed=0,
                 snr_db=None, name=None) -> Scene:
    """Straight trajectory parallel to the array, centered on its boresight."""
    config = config or MeasurementConfig()
    ura = UraGeometry.from_config(config)
    c = np.asarray(ura.center)
    n, h, _ = ura.axes
    mid = c + perpendicular * n
    mid[2] = height
    start = mid - 0.5 * length * h
    end = mid + 0.5 * length * h
    return Scene(ura, tuple(start), tuple(end), config.speed, tuple(scatterers),
                 0.0, ground_reflection, snr_db, seed, name or f"h{height:g}m")


def _fmt_vec(v):
    return ", ".join(repr(float(x)) for x in v)


def dump_scene(scene: Scene, path, config: MeasurementConfig | None = None) -> None:
    parser = configparser.ConfigParser()
    parser["scene"] = {
        "name": scene.name,
        "seed": str(scene.seed),
        "snr_db": "none" if scene.snr_db is None else repr(float(scene.snr_db)),
        "ground_height": repr(scene.ground_height),
        "ground_reflection": repr(scene.ground_reflection),
    }
    parser["array"] = {
        "rows": str(scene.ura.rows), "cols": str(scene.ura.cols),
        "spacing": repr(scene.ura.spacing), "center": _fmt_vec(scene.ura.center),
        "normal": _fmt_vec(scene.ura.normal), "stacking": scene.ura.stacking,
    }
    parser["trajectory"] = {
        "start": _fmt_vec(scene.start), "end": _fmt_vec(scene.end), "speed": repr(scene.speed),
    }
    for i, s in enumerate(scene.scatterers):
        parser[f"scatterer.{i}"] = {
            "position": _fmt_vec(s.position), "reflection": repr(s.reflection),
            "cross_section": repr(s.cross_section),
        }
    if config is not None:
        parser["measurement"] = config_to_mapping(config)
    with open(path, "w") as fh:
        parser.write(fh)


def _vec(section, key, path):
    try:
        v = tuple(float(x) for x in section[key].split(","))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: [{section.name}] needs a 3-vector {key!r}",
                          module="geo-channel") from exc
    if len(v) != 3:
        raise ConfigError(f"{path}: [{section.name}] {key!r} must have 3 values",
                          module="geo-channel")
    return v


def load_scene(path):
    """Parse a scene file; returns (Scene, MeasurementConfig)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scene file not found: {path}", module="geo-channel")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}", module="geo-channel") from exc
    for sec in ("array", "trajectory"):
        if not parser.has_section(sec):
            raise ConfigError(f"{path}: missing [{sec}] section", module="geo-channel")
    config = (config_from_mapping(dict(parser["measurement"]), module="geo-channel")
              if parser.has_section("measurement") else None)
    sc = parser["scene"] if parser.has_section("scene") else {}
    arr = parser["array"]
    try:
        ura = UraGeometry(
            rows=int(arr.get("rows", 8)), cols=int(arr.get("cols", 8)),
            spacing=float(arr.get("spacing", 0.08)),
            center=_vec(arr, "center", path) if "center" in arr else (0.0, 0.0, 11.0),
            normal=_vec(arr, "normal", path) if "normal" in arr else (0.0, 1.0, 0.0),
            stacking=arr.get("stacking", "column"),
        )
        traj = parser["trajectory"]
        scatterers = []
        for name in parser.sections():
            if name.startswith("scatterer"):
                s = parser[name]
                scatterers.append(Scatterer(_vec(s, "position", path),
                                            float(s.get("reflection", 1.0)),
                                            float(s.get("cross_section", 1.0))))
        snr = str(sc.get("snr_db", "none")).strip().lower()
        scene = Scene(
            ura=ura, start=_vec(traj, "start", path), end=_vec(traj, "end", path),
            speed=float(traj.get("speed", 1.5)), scatterers=tuple(scatterers),
            ground_height=float(sc.get("ground_height", 0.0)),
            ground_reflection=complex(str(sc.get("ground_reflection", "-0.5")).replace(" ", "")),
            snr_db=None if snr in ("none", "") else float(snr),
            seed=int(sc.get("seed", 0)), name=str(sc.get("name", path.stem)),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise ConfigError(f"{path}: {exc.args[0]}", module=exc.module) from exc
        raise ConfigError(f"{path}: {exc}", module="geo-channel") from exc
    if config is None:
        config = MeasurementConfig(
            array_rows=ura.rows, array_cols=ura.cols, num_antennas=ura.num_elements,
            element_spacing=ura.spacing, bs_position=ura.center, bs_height=ura.center[2],
            speed=scene.speed,
        )
    return scene, config


def cluster_scatterers(center, radius=2.0, count=60, seed=0, reflection=1.0,
                       cross_section=3.0) -> tuple:
    """Seeded cluster of point scatterers in a spherical shell around ``center``.

    Radii are drawn uniformly in [radius/2, radius]; directions are isotropic.
    Placed around a drone position, the cluster gives the array a continuous
    spread of arrival angles in azimuth and elevation.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.uniform(0.5, 1.0, count)
    pts = np.asarray(center, dtype=np.float64) + r[:, None] * v
    return tuple(Scatterer(tuple(p), reflection, cross_section) for p in pts)


def boresight_cluster_scene(height=8.0, perpendicular=12.0, length=1.0, radius=2.0, count=60,
                            cross_section=3.0, seed=1, config=None, name=None) -> Scene:
    """Short pass across the array boresight with a scatterer cluster around the drone.

    Line of sight dominates; the cluster adds the angular spread that a bare
    plane wave lacks, so neighboring elements decorrelate gradually with
    their separation.
    """
    config = config or MeasurementConfig()
    base = table1_scene(height, perpendicular, length, config, scatterers=(), seed=seed)
    mid = 0.5 * (np.asarray(base.start) + np.asarray(base.end))
    cluster = cluster_scatterers(mid, radius, count, seed, 1.0, cross_section)
    return replace(base, scatterers=cluster, name=name or f"boresight_h{height:g}m")
