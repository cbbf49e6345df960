"""Monte Carlo B-scan of the flat cornea next to the EHF prediction.

Prints column-averaged A-lines of both simulations (each scaled to its own
peak) and the photon weight audit of the transport run.

    python demos/monte_carlo_vs_ehf.py [photons_per_column]
"""
import sys
import time

import numpy as np

from octscatter.ehf import ForwardConfig, forward_bscan
from octscatter.montecarlo import McConfig, mc_bscan
from octscatter.phantom import flat_cornea, layer_bounds, scene_to_maps

photons = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
scene = flat_cornea(width=32)
t0 = time.perf_counter()
mc, audit = mc_bscan(scene, McConfig(photons=photons, seed=1))
print(f"transport: {photons} photons x {scene.width} columns in {time.perf_counter() - t0:.1f} s")
print(f"audit (photon weight per column): absorbed {audit.absorbed:.4f}  reflected {audit.reflected:.4f}  "
      f"transmitted {audit.transmitted:.4f}  roulette {audit.roulette:+.2e}  "
      f"balance error {audit.balance_error:.1e}")

ehf = forward_bscan(scene_to_maps(scene), ForwardConfig()).intensity
a_mc = mc.data.mean(axis=1)
a_ehf = ehf.data.mean(axis=1)
a_mc, a_ehf = a_mc / a_mc.max(), a_ehf / a_ehf.max()

print("\nlayer          rows       MC mean   EHF mean")
for layer, (lo, hi) in zip(scene.layers, layer_bounds(scene)):
    print(f"{layer.name:12s} {lo:4d}-{hi:<4d}   {a_mc[lo:hi].mean():8.4f}  {a_ehf[lo:hi].mean():8.4f}")
