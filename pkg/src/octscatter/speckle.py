"""Multiplicative speckle for turning clean intensity into raw-looking B-scans."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .fields import ScalarField
from .rng import generator


class SpeckleDistribution(enum.Enum):
    EXPONENTIAL = "exponential"
    GAMMA = "gamma"


@dataclass(frozen=True)
class SpeckleConfig:
    """``looks`` is the Gamma shape L; ignored for exponential speckle."""

    distribution: SpeckleDistribution = SpeckleDistribution.EXPONENTIAL
    looks: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "distribution", SpeckleDistribution(self.distribution))
        if self.distribution is SpeckleDistribution.GAMMA and not self.looks >= 1:
            raise ValueError(f"gamma speckle needs looks >= 1, got {self.looks}")


def speckle_multiplier(shape, cfg: SpeckleConfig) -> np.ndarray:
    """Mean-one i.i.d. multipliers; value at a pixel depends only on (seed, shape, pixel index)."""
    rng = generator(cfg.seed, "speckle")
    if cfg.distribution is SpeckleDistribution.EXPONENTIAL:
        return rng.standard_exponential(size=shape)
    return rng.gamma(cfg.looks, 1.0 / cfg.looks, size=shape)


def apply_speckle(clean: ScalarField, cfg: SpeckleConfig) -> ScalarField:
    """Multiply a non-negative intensity field by fully developed speckle."""
    if np.any(clean.data < 0):
        raise ValueError("speckle input must be non-negative")
    return clean.replace(clean.data * speckle_multiplier(clean.shape, cfg))
