"""OCT scattering: EHF forward model, Monte Carlo phantoms and variational inversion.

Public names are loaded on first access, so importing the package (or its
command-line entry point) does not start the JIT compiler.
"""
from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "fields": ("ScalarField", "ParameterMaps", "BeamParams", "LossWeights", "MapGradients",
               "field_new", "maps_clamp", "check_same_shape"),
    "ehf": ("ForwardConfig", "GainMode", "forward_bscan", "forward_gradients",
            "ehf_intensity_homogeneous", "theta_rms", "w_h_sq", "w_s_sq"),
    "speckle": ("SpeckleConfig", "SpeckleDistribution", "apply_speckle"),
    "phantom": ("LayerSpec", "PhantomScene", "scene_to_maps", "randomize_scene", "load_scene",
                "default_cornea", "flat_cornea", "layer_means"),
    "montecarlo": ("McConfig", "McAudit", "mc_bscan"),
    "dataset": ("generate_dataset",),
    "losses": ("LossBreakdown", "LossOptions", "loss_mse", "loss_fwd", "loss_tv", "loss_diff", "loss_total"),
    "scores": ("ScoreProvider", "GaussianScoreProvider", "KernelScoreProvider", "NoiseSchedule",
               "fit_gaussian_prior"),
    "solver": ("SolverConfig", "InversionResult", "invert", "ablate", "standard_variants"),
    "metrics": ("Channel", "MetricReport", "mse", "psnr", "ssim", "evaluate_intensity", "evaluate_maps"),
    "io": ("read_octmap", "write_octmap", "render_pgm", "OctmapError"),
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_WHERE)


def __getattr__(name):
    mod = _WHERE.get(name)
    if mod is None:
        raise AttributeError(f"module 'octscatter' has no attribute {name!r}")
    value = getattr(import_module(f"{__name__}.{mod}"), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(__all__))
