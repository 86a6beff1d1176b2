import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sensorcast.model import StressorKind
from sensorcast.synth import SynthSpec, generate

THETA = (0.5, 0.2, 1.0, 0.3)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """10 sensors, temperature and CO, 35 days, light dropout and spikes."""
    spec = SynthSpec(
        n_sensors=10,
        stressors=(StressorKind.TEMPERATURE, StressorKind.CARBON_MONOXIDE),
        dropout=0.02,
        outlier_rate=0.005,
        seed=7,
    )
    out = tmp_path_factory.mktemp("synth")
    generate(spec, out)
    return out


def periodic_input(n, period=24):
    h = np.arange(n) % period
    return np.sin(2 * np.pi * h / period) + 0.5 * np.cos(4 * np.pi * h / period)


def arx_series(n, theta=THETA, noise_std=0.0, seed=0):
    rng = np.random.default_rng(seed)
    u = periodic_input(n)
    e = rng.normal(0.0, noise_std, n) if noise_std else np.zeros(n)
    # a random start keeps the regressors well conditioned when noise is off
    x0 = rng.normal(0.0, 1.0, 2)
    x = np.zeros(n)
    x[:2] = x0
    a1, a2, b0, b1 = theta
    for t in range(2, n):
        x[t] = a1 * x[t - 1] + a2 * x[t - 2] + b0 * u[t] + b1 * u[t - 1] + e[t]
    return x, u
