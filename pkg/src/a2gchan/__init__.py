"""Space, time and frequency stationarity analysis of massive-MIMO air-to-ground channels."""

__version__ = "0.1.0"

from .csi import (CsiTensor, MeasurementConfig, TrajectoryLog, align_trajectory, load_csi,
                  store_csi)
from .errors import A2GError, ConfigError, DataError, NumericError
from .geochannel import Scatterer, Scene, UraGeometry, load_scene, synth_csi, table1_scene
from .analysis import AnalysisParams, RunManifest, analyze

__all__ = [
    "A2GError", "AnalysisParams", "ConfigError", "CsiTensor", "DataError", "MeasurementConfig",
    "NumericError", "RunManifest", "Scatterer", "Scene", "TrajectoryLog", "UraGeometry",
    "align_trajectory", "analyze", "load_csi", "load_scene", "store_csi", "synth_csi",
    "table1_scene",
]
