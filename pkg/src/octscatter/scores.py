"""Score providers for the diffusion-style prior term.

A provider maps a noisy, standardized map ``x_t`` and noise level ``sigma``
to a score estimate, and can pull a cotangent back through that map. Any
learned denoiser can be wrapped behind the same two methods; the packaged
default is the closed-form score of a per-pixel Gaussian prior.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Noise levels drawn log-uniformly from ``[sigma_min, sigma_max]``."""

    sigma_min: float = 0.002
    sigma_max: float = 80.0

    def __post_init__(self):
        if not 0 < self.sigma_min <= self.sigma_max:
            raise ValueError(f"need 0 < sigma_min <= sigma_max, got {self.sigma_min}, {self.sigma_max}")

    def sample(self, rng: np.random.Generator, size=None):
        lo, hi = np.log(self.sigma_min), np.log(self.sigma_max)
        return np.exp(rng.uniform(lo, hi, size=size))


class ScoreProvider:
    """Interface: ``score(x_t, sigma)`` and its vector-Jacobian product."""

    schedule: NoiseSchedule = NoiseSchedule()

    def score(self, x_t: np.ndarray, sigma: float) -> np.ndarray:
        raise NotImplementedError

    def score_vjp(self, x_t: np.ndarray, sigma: float, cot: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(cot * score(x_t, sigma))`` with respect to ``x_t``."""
        raise NotImplementedError


class GaussianScoreProvider(ScoreProvider):
    """Exact score of ``N(mean, var)`` convolved with ``N(0, sigma^2)`` noise, per pixel."""

    def __init__(self, mean: np.ndarray, var, schedule: NoiseSchedule | None = None):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.var = np.broadcast_to(np.asarray(var, dtype=np.float64), self.mean.shape).copy()
        if np.any(self.var < 0):
            raise ValueError("prior variance must be non-negative")
        if schedule is not None:
            self.schedule = schedule

    def _check(self, x_t):
        if x_t.shape != self.mean.shape:
            raise ValueError(f"provider expects shape {self.mean.shape}, got {x_t.shape}")

    def score(self, x_t, sigma):
        self._check(x_t)
        return -(x_t - self.mean) / (self.var + sigma * sigma)

    def score_vjp(self, x_t, sigma, cot):
        self._check(x_t)
        return -cot / (self.var + sigma * sigma)


class KernelScoreProvider(ScoreProvider):
    """Score of the Gaussian perturbation kernel around a known clean map.

    Matches the denoising target exactly, so the prior loss it produces is zero.
    """

    def __init__(self, clean: np.ndarray, schedule: NoiseSchedule | None = None):
        self.clean = np.asarray(clean, dtype=np.float64)
        if schedule is not None:
            self.schedule = schedule

    def score(self, x_t, sigma):
        return -(x_t - self.clean) / (sigma * sigma)

    def score_vjp(self, x_t, sigma, cot):
        return -cot / (sigma * sigma)


# -- preprocessing shared by the loss and prior fitting ---------------------

STD_EPS = 1e-12


def standardize(p: np.ndarray):
    """Zero-mean, unit-variance copy of ``p`` and the scale used."""
    m = p.mean()
    s = np.sqrt(np.mean((p - m) ** 2) + STD_EPS)
    return (p - m) / s, s


def standardize_vjp(y: np.ndarray, s: float, cot: np.ndarray) -> np.ndarray:
    return (cot - cot.mean() - y * np.mean(cot * y)) / s


def resize_matrix(src: int, dst: int) -> np.ndarray:
    """Bilinear (half-pixel centers) interpolation weights, shape ``(dst, src)``."""
    if src == dst:
        return np.eye(src)
    pos = (np.arange(dst) + 0.5) * src / dst - 0.5
    pos = np.clip(pos, 0.0, src - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, src - 1)
    f = pos - i0
    W = np.zeros((dst, src))
    rows = np.arange(dst)
    np.add.at(W, (rows, i0), 1.0 - f)
    np.add.at(W, (rows, i1), f)
    return W


@dataclass(frozen=True)
class Resampler:
    """Separable bilinear resampling between a map grid and the prior grid."""

    rows: np.ndarray
    cols: np.ndarray

    @classmethod
    def for_shape(cls, shape, size: int = 256) -> "Resampler":
        h, w = shape
        return cls(resize_matrix(h, min(size, h)), resize_matrix(w, min(size, w)))

    @property
    def out_shape(self):
        return self.rows.shape[0], self.cols.shape[0]

    def __call__(self, a: np.ndarray) -> np.ndarray:
        if self.rows.shape[0] != self.rows.shape[1]:
            a = self.rows @ a
        if self.cols.shape[0] != self.cols.shape[1]:
            a = a @ self.cols.T
        return a

    def adjoint(self, b: np.ndarray) -> np.ndarray:
        if self.rows.shape[0] != self.rows.shape[1]:
            b = self.rows.T @ b
        if self.cols.shape[0] != self.cols.shape[1]:
            b = b @ self.cols
        return b


def prior_view(p: np.ndarray, size: int = 256) -> np.ndarray:
    """Standardized, resampled map as seen by a score provider."""
    y, _ = standardize(np.asarray(p, dtype=np.float64))
    return Resampler.for_shape(y.shape, size)(y)


def fit_gaussian_prior(samples, size: int = 256, var_floor: float = 1e-2,
                       schedule: NoiseSchedule | None = None) -> GaussianScoreProvider:
    """Per-pixel Gaussian prior from example maps of one channel.

    Each sample is standardized and resampled exactly as in the prior loss;
    the provider then holds the pixelwise mean and variance (floored).
    """
    views = np.stack([prior_view(s, size) for s in samples])
    var = np.maximum(views.var(axis=0), var_floor)
    return GaussianScoreProvider(views.mean(axis=0), var, schedule)
