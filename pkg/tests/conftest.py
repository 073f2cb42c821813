import numpy as np
import pytest

from a2gchan.csi import CsiTensor, MeasurementConfig


def small_config(rows=2, cols=2, F=16, **kw):
    return MeasurementConfig(num_antennas=rows * cols, array_rows=rows, array_cols=cols,
                             num_freq_bins=F, **kw)


def random_tensor(rng, T=8, rows=2, cols=2, F=16, scale=1.0, **kw):
    cfg = small_config(rows, cols, F, **kw)
    M = rows * cols
    data = scale * (rng.standard_normal((T, M, F)) + 1j * rng.standard_normal((T, M, F)))
    return CsiTensor(cfg, data, np.arange(T) * cfg.csi_interval)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
