"""Finite-difference gradient checks shared by the unit and acceptance suites."""
import numpy as np

from octscatter.ehf import ForwardConfig, GainMode, forward_bscan, forward_gradients
from octscatter.fields import LossWeights, ParameterMaps, ScalarField
from octscatter.losses import LossOptions, loss_total
from octscatter.scores import GaussianScoreProvider

SHAPE = (4, 4)
PX, PZ = 10e-6, 4e-6
# per-channel steps for (n, mu_s [1/m], g)
STEPS = (1e-5, 0.1, 1e-5)


def central_difference(f, h):
    """Fourth-order central stencil."""
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)


def _clear_of_kinks(a, h):
    # TV is not differentiable where neighbours tie; keep every gap well outside the stencil
    return min(np.abs(np.diff(a, axis=0)).min(), np.abs(np.diff(a, axis=1)).min()) > 10 * 2 * h


def _maps(rng):
    while True:
        arrs = (rng.uniform(1.30, 1.45, SHAPE), rng.uniform(2e3, 8e3, SHAPE), rng.uniform(0.80, 0.95, SHAPE))
        if all(_clear_of_kinks(a, h) for a, h in zip(arrs, STEPS)):
            return ParameterMaps.from_arrays(*arrs, PX, PZ)


def _perturbed(arrs, c, idx, d):
    out = [a.copy() for a in arrs]
    out[c][idx] += d
    return ParameterMaps.from_arrays(*out, PX, PZ)


def _channel_errors(arrs, analytic, f):
    errs = []
    for c, h in enumerate(STEPS):
        fd = np.zeros(SHAPE)
        for idx in np.ndindex(*SHAPE):
            fd[idx] = central_difference(lambda d: f(_perturbed(arrs, c, idx, d)), h)
        errs.append(float(np.linalg.norm(fd - analytic[c]) / np.linalg.norm(analytic[c])))
    return errs


def forward_instance_error(seed: int) -> float:
    """Worst per-channel relative error of the forward-model VJP for one random instance."""
    rng = np.random.default_rng(seed)
    maps = _maps(rng)
    gain_mode = (GainMode.FIXED_UNIT, GainMode.PER_COLUMN_LSQ)[seed % 2]
    cfg = ForwardConfig(gain_mode=gain_mode, depth_origin=rng.uniform(0, 1e-4))
    measured = ScalarField(rng.uniform(1e8, 1e9, SHAPE), PX, PZ)
    cot = rng.normal(size=SHAPE)
    # least-squares gain is held at the evaluation point, as in the analytic Jacobian
    gain = forward_bscan(maps, cfg, measured).per_column_gain
    fixed = ForwardConfig(cfg.beam, GainMode.FIXED_UNIT, cfg.depth_origin)
    analytic = forward_gradients(maps, cfg, measured).vjp(cot)
    arrs = [maps.n.data, maps.mu_s.data, maps.g.data]
    return max(_channel_errors(arrs, analytic, lambda m: float(np.sum(cot * forward_bscan(m, fixed).intensity.data * gain))))


def loss_instance_error(seed: int) -> float:
    """Worst per-channel relative error of the total-loss gradient with every weight positive."""
    rng = np.random.default_rng(seed)
    maps = _maps(rng)
    # truth close to the maps keeps the supervised term from swamping the others
    truth = ParameterMaps.from_arrays(*(a * rng.uniform(0.99, 1.01, SHAPE) for a in maps.stack()), PX, PZ)
    gain_mode = (GainMode.FIXED_UNIT, GainMode.PER_COLUMN_LSQ)[seed % 2]
    cfg = ForwardConfig(gain_mode=gain_mode, depth_origin=50e-6)
    ones = ScalarField(np.ones(SHAPE), PX, PZ)
    measured = forward_bscan(_maps(rng), cfg, ones if gain_mode is GainMode.PER_COLUMN_LSQ else None).intensity
    providers = {k: GaussianScoreProvider(rng.normal(size=SHAPE), rng.uniform(0.5, 2.0, SHAPE)) for k in ("n", "mu_s", "g")}
    weights = LossWeights(1.0, 1.0, 1e-4, 1e-3)
    opts = LossOptions(intensity_scale=1.0 / measured.data.mean(), tv_scales=(1.0, 1e-3, 1.0))

    def total(m):
        # same seed on every call: the noise draws stay fixed
        return loss_total(m, measured, cfg, weights, truth, providers, seed=3, options=opts)[0].total

    _, grad, _ = loss_total(maps, measured, cfg, weights, truth, providers, seed=3, options=opts)
    arrs = [maps.n.data, maps.mu_s.data, maps.g.data]
    return max(_channel_errors(arrs, list(grad), total))
