"""Objective terms for the inverse problem and their gradients.

* ``loss_mse``  - parameter error against ground truth (supervised/validation)
* ``loss_fwd``  - forward-model output vs measured B-scan
* ``loss_tv``   - anisotropic total variation of the three maps
* ``loss_diff`` - score-matching prior on standardized, resampled maps
* ``loss_total`` - weighted sum, gradients chained through the forward model
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ehf import ForwardConfig, ForwardJacobian, forward_gradients
from .fields import LossWeights, MapGradients, ParameterMaps, ScalarField, check_same_shape
from .rng import generator
from .scores import Resampler, ScoreProvider, standardize, standardize_vjp

CHANNELS = ("n", "mu_s", "g")
DEFAULT_OMEGAS = (1.0, 1.0, 0.3)


@dataclass(frozen=True)
class LossBreakdown:
    mse: float
    fwd: float
    tv: float
    diff: float
    total: float

    CSV_HEADER = "iter,mse,fwd,tv,diff,total"

    def csv_row(self, it: int) -> str:
        return f"{it},{self.mse!r},{self.fwd!r},{self.tv!r},{self.diff!r},{self.total!r}"


@dataclass(frozen=True)
class LossOptions:
    """Knobs that are not part of the weights.

    intensity_scale : both predicted and measured intensity are multiplied by
        this before the forward-consistency term.
    tv_scales : per-channel factor applied to (n, mu_s, g) before TV; (1, 1, 1)
        is the literal sum of absolute differences.
    tv_normalize : divide TV by the pixel count.
    """

    noise_draws: int = 4
    diff_size: int = 256
    antithetic: bool = True
    intensity_scale: float = 1.0
    tv_scales: tuple[float, float, float] = (1.0, 1.0, 1.0)
    tv_normalize: bool = False


def _maps_arrays(m: ParameterMaps):
    return m.n.data, m.mu_s.data, m.g.data


def loss_mse(pred: ParameterMaps, truth: ParameterMaps):
    """Mean over pixels of the squared error summed across channels."""
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    N = pred.n.data.size
    diffs = [p - t for p, t in zip(_maps_arrays(pred), _maps_arrays(truth))]
    value = sum(float(np.sum(d * d)) for d in diffs) / N
    return value, MapGradients(*(2.0 * d / N for d in diffs))


def loss_fwd(pred_intensity: ScalarField, measured: ScalarField):
    """Mean squared difference between predicted and measured intensity, and d/d(pred)."""
    check_same_shape(pred_intensity, measured)
    r = pred_intensity.data - measured.data
    N = r.size
    return float(np.sum(r * r)) / N, 2.0 * r / N


def tv_channel(p: np.ndarray):
    """Sum of |forward differences| along both axes and a subgradient (sign(0) = 0)."""
    dz = np.diff(p, axis=0)
    dx = np.diff(p, axis=1)
    value = float(np.sum(np.abs(dz)) + np.sum(np.abs(dx)))
    sz, sx = np.sign(dz), np.sign(dx)
    grad = np.zeros_like(p)
    grad[1:] += sz
    grad[:-1] -= sz
    grad[:, 1:] += sx
    grad[:, :-1] -= sx
    return value, grad


def loss_tv(maps: ParameterMaps, scales=(1.0, 1.0, 1.0), normalize: bool = False):
    """Anisotropic TV summed over the three channels.

    Differences past the last row/column are zero (replicate boundary).
    """
    total = 0.0
    grads = []
    N = maps.n.data.size if normalize else 1
    for p, s in zip(_maps_arrays(maps), scales):
        v, gr = tv_channel(p)
        total += s * v / N
        grads.append(s * gr / N)
    return total, MapGradients(*grads)


def loss_diff(maps: ParameterMaps, providers, weights=DEFAULT_OMEGAS, noise_draws: int = 4,
              seed: int = 0, size: int = 256, antithetic: bool = True):
    """Score-matching prior, Monte Carlo over noise level and noise.

    For each channel with positive weight: standardize the map, resample it
    to at most ``size`` x ``size``, draw ``x_t = x + sigma * eps`` and compare
    the provider's score with the kernel score ``-(x_t - x) / sigma**2``.
    The squared error is summed over pixels and averaged over draws.
    With ``antithetic`` draws come in (eps, -eps) pairs sharing sigma.

    ``providers`` is a mapping from channel name ("n", "mu_s", "g") or a
    3-sequence in that order.
    """
    if noise_draws < 1:
        raise ValueError("noise_draws must be >= 1")
    if any(w < 0 for w in weights):
        raise ValueError("prior weights must be non-negative")
    if providers is None:
        providers = {}
    if not isinstance(providers, dict):
        providers = dict(zip(CHANNELS, providers))
    h, w = maps.shape
    if h < 2 or w < 2:
        raise ValueError("maps must be at least 2x2 for the prior term")
    resample = Resampler.for_shape(maps.shape, size)
    total = 0.0
    grads = []
    for name, p, omega in zip(CHANNELS, _maps_arrays(maps), weights):
        if omega == 0:
            grads.append(np.zeros_like(p))
            continue
        prov: ScoreProvider | None = providers.get(name)
        if prov is None:
            raise ValueError(f"no score provider for channel {name!r}")
        y, s = standardize(p)
        x = resample(y)
        rng = generator(seed, "diff", name)
        n_base = (noise_draws + 1) // 2 if antithetic else noise_draws
        sigmas = prov.schedule.sample(rng, n_base)
        eps_base = rng.standard_normal((n_base,) + x.shape)
        acc = 0.0
        g_x = np.zeros_like(x)
        for d in range(noise_draws):
            if antithetic:
                sigma, eps = sigmas[d // 2], eps_base[d // 2] * (1.0 if d % 2 == 0 else -1.0)
            else:
                sigma, eps = sigmas[d], eps_base[d]
            x_t = x + sigma * eps
            r = prov.score(x_t, sigma) + eps / sigma
            acc += float(np.sum(r * r))
            g_x += prov.score_vjp(x_t, sigma, 2.0 * r)
        total += omega * acc / noise_draws
        g_y = resample.adjoint(g_x * (omega / noise_draws))
        grads.append(standardize_vjp(y, s, g_y))
    return total, MapGradients(*grads)


def loss_total(maps: ParameterMaps, measured: ScalarField, fwd_cfg: ForwardConfig, weights: LossWeights,
               truth: ParameterMaps | None = None, providers=None, seed: int = 0,
               options: LossOptions = LossOptions(), jacobian: ForwardJacobian | None = None):
    """Weighted objective and its gradient with respect to the three maps.

    Returns ``(LossBreakdown, MapGradients, ForwardJacobian)``; the Jacobian
    carries the predicted intensity. The MSE term is reported as 0 without
    truth, and the prior term as 0 when its weight is 0 (it is not evaluated).
    """
    l1, l2, l3, l4 = weights.lambdas
    if l1 > 0 and truth is None:
        raise ValueError("lambda1 > 0 requires ground-truth maps")
    if l4 > 0 and not providers:
        raise ValueError("lambda4 > 0 requires score providers")
    check_same_shape(maps.n, measured)
    grad = MapGradients.zeros(maps.shape)

    v_mse = 0.0
    if truth is not None:
        v_mse, g = loss_mse(maps, truth)
        if l1 > 0:
            grad = grad + l1 * g

    jac = jacobian if jacobian is not None else forward_gradients(maps, fwd_cfg, measured)
    s = options.intensity_scale
    r = s * (jac.intensity - measured.data)
    N = r.size
    v_fwd = float(np.sum(r * r)) / N
    if l2 > 0:
        g_n, g_mus, g_g = jac.vjp((2.0 * l2 * s / N) * r)
        grad = grad + MapGradients(g_n, g_mus, g_g)

    v_tv, g = loss_tv(maps, options.tv_scales, options.tv_normalize)
    if l3 > 0:
        grad = grad + l3 * g

    v_diff = 0.0
    if l4 > 0:
        v_diff, g = loss_diff(maps, providers, weights.omegas, options.noise_draws, seed,
                              options.diff_size, options.antithetic)
        grad = grad + l4 * g

    total = l1 * v_mse + l2 * v_fwd + l3 * v_tv + l4 * v_diff
    return LossBreakdown(v_mse, v_fwd, v_tv, v_diff, total), grad, jac
