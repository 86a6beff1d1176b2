"""Interpolating one hour of sensor values onto a raster.

    python3 demos/02_maps.py

Compares the four interpolators on the same scattered values, scores them
by leave-one-out cross-validation and prints the WKT head of the
resulting surfaces.
"""

import numpy as np

from sensorcast.geo import grid_frame, wkt_surface
from sensorcast.mapgen import ScatteredPoint, generate_map
from sensorcast.model import MapGridSpec
from sensorcast.pipeline import loocv_rmse
from sensorcast.synth import SynthSpec, generate

spec = SynthSpec(n_sensors=15, days=3, seed=5)
truth = generate(spec).truth
stressor = "temperature"

# The smooth part of the field plus a per-sensor reading noise.
rng = np.random.default_rng(0)
hours = []
for _ in range(24):
    z = truth.field_at(stressor, truth.positions) + rng.normal(0, 0.1, len(truth.positions))
    hours.append([ScatteredPoint(s.sensor_id, float(x), float(y), float(v))
                  for s, (x, y), v in zip(truth.sensors, truth.positions, z)])

print("leave-one-out RMSE over 24 hours (degC)")
for method in ("nearest", "natural", "linear", "idw"):
    print(f"  {method:8s} {loocv_rmse(hours, method):.4f}")

# Grid anchored at the synthetic origin, covering the whole extent.
grid = MapGridSpec(*spec.origin, bearing=0.0, lengths=spec.extent, counts=(20, 20))
frame = grid_frame(grid)
for method in ("natural", "idw"):
    vg = generate_map(hours[0], grid, method, c=5000.0, stressor=stressor)
    print(f"\n{method}: values in [{vg.values.min():.3f}, {vg.values.max():.3f}], "
          f"reliability in [{vg.reliability.min():.2e}, {vg.reliability.max():.3f}]")
    text = wkt_surface(vg, frame, "value")
    print(f"  {text[:96]}...")
    print(f"  {text.count('((')} triangles")
