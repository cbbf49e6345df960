"""Variational reconstruction of parameter maps from a single B-scan.

Each iteration evaluates the forward model, the composite loss and its
gradient, chains the gradient through the bounds handling and takes one
Adam (or plain gradient-descent) step on the whole field.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .ehf import ForwardConfig, forward_bscan
from .fields import (
    G_BOUNDS,
    N_BOUNDS,
    LossWeights,
    MapGradients,
    ParameterMaps,
    ScalarField,
    check_same_shape,
)
from .losses import CHANNELS, LossBreakdown, LossOptions, loss_total, tv_channel
from .metrics import Channel, MetricReport, evaluate_intensity, evaluate_maps
from .rng import derive_seed

MUS_UNIT = 1e3  # 1/m per unit of the unconstrained mu_s variable
_MUS_INIT_RANGE = (100.0, 50e3)  # 1/m
_LOGIT_EPS = 1e-9


class BoundsMode(enum.Enum):
    CLAMP = "clamp"
    SIGMOID = "sigmoid"


class InitMode(enum.Enum):
    CONSTANTS = "constants"
    FROM_CONFIG = "from_config"


class Optimizer(enum.Enum):
    ADAM = "adam"
    GD = "gd"


class NonFiniteLoss(RuntimeError):
    def __init__(self, iteration: int, breakdown: LossBreakdown):
        super().__init__(f"non-finite loss at iteration {iteration}: {breakdown}")
        self.iteration = iteration
        self.breakdown = breakdown


@dataclass(frozen=True)
class SolverConfig:
    """Optimizer settings.

    ``mu_s0 = None`` selects the data-driven start (half the column-wise
    log-slope of the measured B-scan). ``InitMode.FROM_CONFIG`` expects the
    caller to pass explicit initial maps to :func:`invert`.
    ``fixed_channels`` names channels ("n", "mu_s", "g") held at their
    initial values, e.g. when they are known from another measurement.
    """

    max_iters: int = 2000
    step_size: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 50
    rel_tol: float = 1e-9
    grad_tol: float = 1e-10
    bounds_mode: BoundsMode = BoundsMode.SIGMOID
    init_mode: InitMode = InitMode.CONSTANTS
    n0: float = 1.38
    mu_s0: float | None = None
    g0: float = 0.9
    optimizer: Optimizer = Optimizer.ADAM
    seed: int = 0
    normalize_intensity: bool = True
    noise_draws: int = 4
    diff_size: int = 256
    tv_scales: tuple[float, float, float] = (1.0, 1e-3, 1.0)
    tv_normalize: bool = False
    fixed_channels: tuple[str, ...] = ()
    debug: bool = False

    def __post_init__(self):
        for name in ("bounds_mode", "init_mode", "optimizer"):
            typ = type(SolverConfig.__dataclass_fields__[name].default)
            object.__setattr__(self, name, typ(getattr(self, name)))
        object.__setattr__(self, "tv_scales", tuple(float(v) for v in self.tv_scales))
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not self.adam_eps > 0:
            raise ValueError("adam_eps must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not N_BOUNDS[0] <= self.n0 <= N_BOUNDS[1]:
            raise ValueError(f"n0 must lie in {N_BOUNDS}")
        if not G_BOUNDS[0] <= self.g0 <= G_BOUNDS[1]:
            raise ValueError(f"g0 must lie in {G_BOUNDS}")
        if self.mu_s0 is not None and not self.mu_s0 >= 0:
            raise ValueError("mu_s0 must be >= 0")
        if self.noise_draws < 1 or self.diff_size < 2:
            raise ValueError("noise_draws must be >= 1 and diff_size >= 2")
        object.__setattr__(self, "fixed_channels", tuple(str(c) for c in self.fixed_channels))
        unknown = set(self.fixed_channels) - set(CHANNELS)
        if unknown:
            raise ValueError(f"unknown channel(s) {sorted(unknown)} in fixed_channels")
        if len(self.tv_scales) != 3 or any(s < 0 for s in self.tv_scales):
            raise ValueError("tv_scales must be three non-negative numbers")

    def loss_options(self, measured: ScalarField) -> LossOptions:
        scale = 1.0
        if self.normalize_intensity:
            m = float(np.mean(measured.data))
            scale = 1.0 / m if m > 0 else 1.0
        return LossOptions(self.noise_draws, self.diff_size, True, scale, self.tv_scales, self.tv_normalize)


@dataclass(frozen=True, eq=False)
class InversionResult:
    maps: ParameterMaps
    denoised_intensity: ScalarField
    loss_history: list[LossBreakdown] = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False


# -- bounds handling ----------------------------------------------------------


class _Sigmoid:
    """n = 1 + s(u), mu_s = MUS_UNIT * softplus(u), g = 0.999 s(u)."""

    @staticmethod
    def encode(maps: ParameterMaps) -> np.ndarray:
        n = np.clip(maps.n.data - 1.0, _LOGIT_EPS, 1.0 - _LOGIT_EPS)
        m = np.maximum(maps.mu_s.data / MUS_UNIT, _LOGIT_EPS)
        g = np.clip(maps.g.data / G_BOUNDS[1], _LOGIT_EPS, 1.0 - _LOGIT_EPS)
        # softplus^-1(m) = m + log(1 - exp(-m))
        return np.stack([logit(n), m + np.log(-np.expm1(-m)), logit(g)])

    @staticmethod
    def decode(u: np.ndarray):
        return 1.0 + expit(u[0]), MUS_UNIT * np.logaddexp(0.0, u[1]), G_BOUNDS[1] * expit(u[2])

    @staticmethod
    def chain(u: np.ndarray, grad: MapGradients) -> np.ndarray:
        sn, sm, sg = expit(u[0]), expit(u[1]), expit(u[2])
        return np.stack([
            grad.n * sn * (1.0 - sn),
            grad.mu_s * MUS_UNIT * sm,
            grad.g * G_BOUNDS[1] * sg * (1.0 - sg),
        ])

    @staticmethod
    def project(u: np.ndarray) -> np.ndarray:
        return u


class _Clamp:
    """Physical values in units (1, MUS_UNIT, 1), clipped after every step."""

    units = np.array([1.0, MUS_UNIT, 1.0])[:, None, None]
    lo = np.array([N_BOUNDS[0], 0.0, G_BOUNDS[0]])[:, None, None]
    hi = np.array([N_BOUNDS[1], np.inf, G_BOUNDS[1]])[:, None, None]

    @classmethod
    def encode(cls, maps: ParameterMaps) -> np.ndarray:
        return maps.stack() / cls.units

    @classmethod
    def decode(cls, u: np.ndarray):
        return tuple(u * cls.units)

    @classmethod
    def chain(cls, u: np.ndarray, grad: MapGradients) -> np.ndarray:
        return grad.stack() * cls.units

    @classmethod
    def project(cls, u: np.ndarray) -> np.ndarray:
        return np.clip(u, cls.lo / cls.units, cls.hi / cls.units)


_BOUNDS = {BoundsMode.SIGMOID: _Sigmoid, BoundsMode.CLAMP: _Clamp}


class _Adam:
    def __init__(self, cfg: SolverConfig, shape):
        self.lr, self.b1, self.b2, self.eps = cfg.step_size, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, u, g):
        self.t += 1
        self.m = self.b1 * self.m + (1.0 - self.b1) * g
        self.v = self.b2 * self.v + (1.0 - self.b2) * g * g
        mhat = self.m / (1.0 - self.b1**self.t)
        vhat = self.v / (1.0 - self.b2**self.t)
        return u - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class _GradientDescent:
    def __init__(self, cfg: SolverConfig, shape):
        self.lr = cfg.step_size

    def step(self, u, g):
        return u - self.lr * g


# -- initialization -----------------------------------------------------------


def log_slope_mu_s(measured: ScalarField, depth_origin: float = 0.0) -> np.ndarray:
    """Per-column scattering estimate: minus half the fitted slope of log intensity.

    Rows with non-positive intensity are ignored; columns without two usable
    rows, or with a non-negative slope, fall back to the lower clip value.
    Estimates are clipped to a plausible tissue range.
    """
    data = measured.data
    z = depth_origin + measured.pitch_z * np.arange(data.shape[0])
    out = np.empty(data.shape[1])
    for c in range(data.shape[1]):
        col = data[:, c]
        ok = col > 0
        if ok.sum() < 2:
            out[c] = _MUS_INIT_RANGE[0]
            continue
        slope = np.polyfit(z[ok], np.log(col[ok]), 1)[0]
        out[c] = -0.5 * slope
    return np.clip(out, *_MUS_INIT_RANGE)


def initial_maps(measured: ScalarField, cfg: SolverConfig, fwd_cfg: ForwardConfig) -> ParameterMaps:
    h, w = measured.shape
    if cfg.mu_s0 is None:
        mus = np.broadcast_to(log_slope_mu_s(measured, fwd_cfg.depth_origin), (h, w))
    else:
        mus = np.full((h, w), cfg.mu_s0)
    return ParameterMaps.from_arrays(
        np.full((h, w), cfg.n0), mus, np.full((h, w), cfg.g0), measured.pitch_x, measured.pitch_z
    )


# -- main loop ----------------------------------------------------------------


def invert(
    measured: ScalarField,
    cfg: SolverConfig,
    fwd_cfg: ForwardConfig,
    weights: LossWeights,
    truth: ParameterMaps | None = None,
    providers=None,
    init: ParameterMaps | None = None,
    callback=None,
) -> InversionResult:
    """Reconstruct (n, mu_s, g) maps whose forward B-scan explains ``measured``.

    Stops at ``cfg.max_iters``, when the gradient norm falls below
    ``cfg.grad_tol``, or after ``cfg.patience`` consecutive iterations whose
    relative improvement of the total loss is below ``cfg.rel_tol``.
    ``callback(it, breakdown, maps)`` is called after every evaluation.
    Raises :class:`NonFiniteLoss` naming the offending iteration.
    """
    if not isinstance(measured, ScalarField):
        raise TypeError("measured must be a ScalarField")
    if np.any(measured.data < 0):
        raise ValueError("measured intensity must be non-negative")
    l1, _, _, l4 = weights.lambdas
    if l1 > 0 and truth is None:
        raise ValueError("lambda1 > 0 requires ground-truth maps")
    if l4 > 0 and not providers:
        raise ValueError("lambda4 > 0 requires score providers")
    if truth is not None:
        check_same_shape(truth.n, measured)
    if init is None:
        if cfg.init_mode is InitMode.FROM_CONFIG:
            raise ValueError("init_mode from_config needs explicit initial maps")
        init = initial_maps(measured, cfg, fwd_cfg)
    check_same_shape(init.n, measured)

    bounds = _BOUNDS[cfg.bounds_mode]
    options = cfg.loss_options(measured)
    u = bounds.project(bounds.encode(init))
    opt = (_Adam if cfg.optimizer is Optimizer.ADAM else _GradientDescent)(cfg, u.shape)
    px, pz = measured.pitch_x, measured.pitch_z
    free = np.array([c not in cfg.fixed_channels for c in CHANNELS], dtype=np.float64)[:, None, None]

    def maps_of(u):
        n, mus, g = bounds.decode(u)
        if cfg.debug:
            return ParameterMaps.from_arrays(n, mus, g, px, pz)
        # decode guarantees the ranges up to rounding at the ends
        return ParameterMaps.from_arrays(
            np.clip(n, *N_BOUNDS), np.maximum(mus, 0.0), np.clip(g, *G_BOUNDS), px, pz
        )

    history: list[LossBreakdown] = []
    converged = False
    stall = 0
    maps = maps_of(u)
    for it in range(cfg.max_iters):
        seed = derive_seed(cfg.seed, "iter", it)
        br, grad, _ = loss_total(maps, measured, fwd_cfg, weights, truth, providers, seed, options)
        if not np.isfinite(br.total):
            raise NonFiniteLoss(it, br)
        history.append(br)
        if callback is not None:
            callback(it, br, maps)
        gu = bounds.chain(u, grad) * free
        if float(np.sqrt(np.sum(gu * gu))) <= cfg.grad_tol:
            converged = True
            break
        if it > 0:
            prev = history[-2].total
            rel = (prev - br.total) / max(abs(prev), 1e-300)
            stall = stall + 1 if rel < cfg.rel_tol else 0
            if stall >= cfg.patience:
                converged = True
                break
        u = bounds.project(opt.step(u, gu))
        maps = maps_of(u)

    denoised = forward_bscan(maps, fwd_cfg, measured).intensity
    return InversionResult(maps, denoised, history, len(history), converged)


# -- ablation -----------------------------------------------------------------

ABLATION_ORDER = ("full", "no_diff", "no_physics", "no_tv", "baseline")
ABLATION_LABELS = {
    "full": "Full Model",
    "no_diff": "w/o Diffusion",
    "no_physics": "w/o Physics",
    "no_tv": "w/o TV",
    "baseline": "Baseline",
}


def standard_variants(full: LossWeights, names=ABLATION_ORDER) -> dict[str, LossWeights]:
    """Named weight sets derived from ``full`` by zeroing terms."""
    zeroed = {
        "full": {},
        "no_diff": {"lambda4": 0.0},
        "no_physics": {"lambda2": 0.0},
        "no_tv": {"lambda3": 0.0},
        "baseline": {"lambda3": 0.0, "lambda4": 0.0},
    }
    out = {}
    for name in names:
        if name not in zeroed:
            raise ValueError(f"unknown variant {name!r}; choose from {', '.join(ABLATION_ORDER)}")
        out[name] = dataclasses.replace(full, **zeroed[name])
    return out


@dataclass(frozen=True, eq=False)
class AblationResult:
    results: dict[str, InversionResult]
    rows: dict[str, dict[Channel, MetricReport]]
    output_tv: dict[str, float]


def output_tv(result: InversionResult, scale: float = 1.0) -> float:
    """TV of the (scaled) denoised intensity."""
    return tv_channel(result.denoised_intensity.data * scale)[0]


def ablate(
    variants: dict[str, LossWeights],
    measured: ScalarField,
    cfg: SolverConfig,
    fwd_cfg: ForwardConfig,
    truth: ParameterMaps | None = None,
    providers=None,
    reference: ScalarField | None = None,
) -> AblationResult:
    """Run :func:`invert` once per variant with identical inputs and seeds.

    Intensity is scored against ``reference`` if given, else against the
    noise-free forward B-scan of ``truth`` when available, else against
    ``measured``. Map channels are scored only when ``truth`` is given.
    """
    if len(variants) < 2:
        raise ValueError("ablation needs at least two variants")
    if reference is None:
        reference = forward_bscan(truth, fwd_cfg, measured).intensity if truth is not None else measured
    results, rows, tvs = {}, {}, {}
    scale = cfg.loss_options(measured).intensity_scale
    for name, w in variants.items():
        res = invert(measured, cfg, fwd_cfg, w, truth, providers)
        results[name] = res
        row = {Channel.INTENSITY: evaluate_intensity(res.denoised_intensity, reference)}
        if truth is not None:
            row.update(evaluate_maps(res.maps, truth))
        rows[name] = row
        tvs[name] = output_tv(res, scale)
    return AblationResult(results, rows, tvs)
