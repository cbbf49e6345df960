"""Loss-term ablation on the speckled flat cornea.

Runs the solver once per variant with identical data and seeds and prints
PSNR/SSIM per channel plus the total variation of the denoised intensity.

    python demos/ablation.py [iterations]
"""
import sys

from octscatter.config import PriorConfig, build_providers
from octscatter.ehf import ForwardConfig, forward_bscan
from octscatter.fields import LossWeights
from octscatter.metrics import Channel
from octscatter.phantom import flat_cornea, scene_to_maps
from octscatter.solver import ABLATION_LABELS, SolverConfig, ablate, standard_variants
from octscatter.speckle import SpeckleConfig, apply_speckle

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 800
scene = flat_cornea(width=64)
truth = scene_to_maps(scene)
fwd = ForwardConfig()
clean = forward_bscan(truth, fwd).intensity
measured = apply_speckle(clean, SpeckleConfig("exponential", seed=1))
providers = build_providers(PriorConfig(), truth.shape, truth.pitch_x, truth.pitch_z, seed=5)

variants = standard_variants(LossWeights(0, 1, 1.0, 1e-10), ("full", "no_diff", "no_tv", "baseline"))
out = ablate(variants, measured, SolverConfig(max_iters=iters, tv_normalize=True), fwd, truth, providers,
             reference=clean)

print(f"{'variant':16s}" + "".join(f"{c.value:>16s}" for c in Channel) + "   output TV")
for name in variants:
    row = out.rows[name]
    cells = "".join(f"{row[c].psnr:8.2f}/{row[c].ssim:5.3f}  " for c in Channel)
    print(f"{ABLATION_LABELS[name]:16s}{cells} {out.output_tv[name]:10.1f}")
print("\ncells are PSNR [dB] / SSIM against the noise-free reference")
