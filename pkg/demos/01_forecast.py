"""From raw readings to a 24-hour forecast for one sensor.

    python3 demos/01_forecast.py

Generates a small synthetic network, cleans one particulate-matter series
step by step, fits an ARX(2, 2) model against its diurnal profile and
prints the Monte Carlo forecast with its prediction bands.
"""

from datetime import timedelta

import numpy as np

from sensorcast.model import PipelineConfig, StressorKind
from sensorcast.pipeline import forecast_pair, prepare_series
from sensorcast.synth import SynthSpec, generate

spec = SynthSpec(n_sensors=3, stressors=(StressorKind.PARTICULATE_MATTER,),
                 dropout=0.03, outlier_rate=0.01, seed=42)
data = generate(spec)
readings = [r for r in data.readings if r.sensor_id == "S000"]
print(f"{len(readings)} raw readings, {sum(s == 'S000' for s, _, _ in data.truth.outliers)} injected spikes")

# Outliers, gaps and smoothing. Each stage is kept on the result.
cfg = PipelineConfig()
prep = prepare_series(readings, cfg, (spec.start, spec.start + timedelta(days=spec.days)))
print(f"hampel replaced {len(prep.outliers)} readings, imputation filled {len(prep.imputed)} hourly slots")
mean, std = prep.scale_meta
print(f"standardization: mean={mean:.3e} std={std:.3e}")

# Model fit and forecast; the forecast comes back in original units.
model, fc = forecast_pair(prep, cfg)
print(f"ARX a={np.round(model.a, 3)} b={np.round(model.b, 3)} residual RMSE={model.rmse:.4f}")

print(f"\nforecast from {fc.start:%Y-%m-%d %H:%M} UTC ({fc.n_trajectories} trajectories)")
print("step      lower98      lower90         mean      upper90      upper98")
for t in range(0, len(fc.mean), 3):
    print(f"{t:4d} {fc.lower[0.98][t]:12.3e} {fc.lower[0.90][t]:12.3e} {fc.mean[t]:12.3e} "
          f"{fc.upper[0.90][t]:12.3e} {fc.upper[0.98][t]:12.3e}")

# The bands widen with the horizon as noise accumulates through the AR part.
width = fc.upper[0.95] - fc.lower[0.95]
print(f"\n95% band width: step 0 {width[0]:.2e}, step 23 {width[-1]:.2e}")
