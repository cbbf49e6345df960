"""Shared grid types: scalar fields, optical-property maps, beam and loss settings.

Layout convention used throughout the package: a field is stored as a C-ordered
``(height, width)`` float64 array. Row index ``k`` is depth (z, increasing
downward), column index is lateral position x, so x is the fastest-varying
index and an A-line is ``data[:, x]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_BOUNDS = (1.0, 2.0)
MUS_MIN = 0.0
G_BOUNDS = (0.0, 0.999)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A 2-D grid of one physical quantity with physical pixel pitch.

    Parameters
    ----------
    data : array_like, shape (height, width)
        Values; copied to an immutable float64 array.
    pitch_x, pitch_z : float
        Lateral and axial pixel pitch in meters.
    """

    data: np.ndarray
    pitch_x: float
    pitch_z: float

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"field data must be a non-empty 2-D array, got shape {a.shape}")
        if not (np.isfinite(self.pitch_x) and self.pitch_x > 0):
            raise ValueError(f"pitch_x must be positive and finite, got {self.pitch_x}")
        if not (np.isfinite(self.pitch_z) and self.pitch_z > 0):
            raise ValueError(f"pitch_z must be positive and finite, got {self.pitch_z}")
        if not np.all(np.isfinite(a)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "data", _frozen(a))
        object.__setattr__(self, "pitch_x", float(self.pitch_x))
        object.__setattr__(self, "pitch_z", float(self.pitch_z))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def replace(self, data: np.ndarray) -> "ScalarField":
        """Same grid, new values."""
        return ScalarField(data, self.pitch_x, self.pitch_z)

    def same_grid(self, other: "ScalarField") -> bool:
        return (
            self.shape == other.shape
            and self.pitch_x == other.pitch_x
            and self.pitch_z == other.pitch_z
        )


def field_new(width: int, height: int, pitch_x: float, pitch_z: float, fill: float = 0.0) -> ScalarField:
    """Constant field of the given size."""
    if int(width) != width or int(height) != height or width < 1 or height < 1:
        raise ValueError(f"width and height must be integers >= 1, got {width}x{height}")
    if not np.isfinite(fill):
        raise ValueError(f"fill must be finite, got {fill}")
    return ScalarField(np.full((int(height), int(width)), float(fill)), pitch_x, pitch_z)


def check_same_shape(*fields: ScalarField) -> None:
    shape = fields[0].shape
    for f in fields[1:]:
        if f.shape != shape:
            raise ValueError(f"shape mismatch: {shape} vs {f.shape}")


@dataclass(frozen=True, eq=False)
class ParameterMaps:
    """Refractive index ``n``, scattering coefficient ``mu_s`` [1/m] and anisotropy ``g``."""

    n: ScalarField
    mu_s: ScalarField
    g: ScalarField

    def __post_init__(self):
        if not (self.n.same_grid(self.mu_s) and self.n.same_grid(self.g)):
            raise ValueError("parameter maps must share shape and pitch")
        lo, hi = N_BOUNDS
        if np.any(self.n.data < lo) or np.any(self.n.data > hi):
            raise ValueError(f"n outside [{lo}, {hi}]")
        if np.any(self.mu_s.data < MUS_MIN):
            raise ValueError("mu_s must be non-negative")
        lo, hi = G_BOUNDS
        if np.any(self.g.data < lo) or np.any(self.g.data > hi):
            raise ValueError(f"g outside [{lo}, {hi}]")

    @classmethod
    def from_arrays(cls, n, mu_s, g, pitch_x: float, pitch_z: float) -> "ParameterMaps":
        n, mu_s, g = (np.asarray(a, dtype=np.float64) for a in (n, mu_s, g))
        if not (n.shape == mu_s.shape == g.shape):
            raise ValueError(f"shape mismatch: {n.shape}, {mu_s.shape}, {g.shape}")
        return cls(
            ScalarField(n, pitch_x, pitch_z),
            ScalarField(mu_s, pitch_x, pitch_z),
            ScalarField(g, pitch_x, pitch_z),
        )

    @classmethod
    def constant(cls, width, height, pitch_x, pitch_z, n, mu_s, g) -> "ParameterMaps":
        return cls(
            field_new(width, height, pitch_x, pitch_z, n),
            field_new(width, height, pitch_x, pitch_z, mu_s),
            field_new(width, height, pitch_x, pitch_z, g),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.n.shape

    @property
    def pitch_x(self) -> float:
        return self.n.pitch_x

    @property
    def pitch_z(self) -> float:
        return self.n.pitch_z

    def channels(self) -> tuple[ScalarField, ScalarField, ScalarField]:
        return self.n, self.mu_s, self.g

    def stack(self) -> np.ndarray:
        """``(3, height, width)`` array in (n, mu_s, g) order."""
        return np.stack([c.data for c in self.channels()])


def maps_clamp(maps_or_arrays, mu_s=None, g=None, pitch_x=None, pitch_z=None) -> ParameterMaps:
    """Clip each channel into its physical range.

    Accepts either a :class:`ParameterMaps` (always valid, so this is a no-op
    copy) or raw arrays ``(n, mu_s, g)`` plus pitches, which is how
    out-of-range candidates are brought back into range.
    """
    if isinstance(maps_or_arrays, ParameterMaps):
        m = maps_or_arrays
        n, mu_s, g = m.n.data, m.mu_s.data, m.g.data
        pitch_x, pitch_z = m.pitch_x, m.pitch_z
    else:
        n = np.asarray(maps_or_arrays, dtype=np.float64)
        mu_s = np.asarray(mu_s, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if not (n.shape == mu_s.shape == g.shape):
            raise ValueError(f"shape mismatch: {n.shape}, {mu_s.shape}, {g.shape}")
    return ParameterMaps.from_arrays(
        np.clip(n, *N_BOUNDS),
        np.maximum(mu_s, MUS_MIN),
        np.clip(g, *G_BOUNDS),
        pitch_x,
        pitch_z,
    )


@dataclass(frozen=True)
class BeamParams:
    """Gaussian beam constants: waist radius, Rayleigh length and focal depth (meters)."""

    w0: float = 8e-6
    z_R: float = 150e-6
    z_f: float = 300e-6

    def __post_init__(self):
        if not self.w0 > 0:
            raise ValueError(f"w0 must be > 0, got {self.w0}")
        if not self.z_R > 0:
            raise ValueError(f"z_R must be > 0, got {self.z_R}")
        if not self.z_f >= 0:
            raise ValueError(f"z_f must be >= 0, got {self.z_f}")


@dataclass(frozen=True)
class LossWeights:
    """Term weights of the composite objective and per-channel score-prior weights."""

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1e-4
    lambda4: float = 1e-3
    omega_n: float = 1.0
    omega_mus: float = 1.0
    omega_g: float = 0.3

    def __post_init__(self):
        vals = [getattr(self, k) for k in self.__dataclass_fields__]
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise ValueError(f"loss weights must be finite and non-negative: {self}")
        if not any(v > 0 for v in (self.lambda1, self.lambda2, self.lambda3, self.lambda4)):
            raise ValueError("at least one lambda must be positive")

    @property
    def lambdas(self) -> tuple[float, float, float, float]:
        return self.lambda1, self.lambda2, self.lambda3, self.lambda4

    @property
    def omegas(self) -> tuple[float, float, float]:
        return self.omega_n, self.omega_mus, self.omega_g


@dataclass
class MapGradients:
    """Gradient arrays with respect to the three parameter channels."""

    n: np.ndarray
    mu_s: np.ndarray
    g: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "MapGradients":
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))

    def __iter__(self):
        return iter((self.n, self.mu_s, self.g))

    def __add__(self, other: "MapGradients") -> "MapGradients":
        return MapGradients(self.n + other.n, self.mu_s + other.mu_s, self.g + other.g)

    def __mul__(self, s: float) -> "MapGradients":
        return MapGradients(s * self.n, s * self.mu_s, s * self.g)

    __rmul__ = __mul__

    def stack(self) -> np.ndarray:
        return np.stack([self.n, self.mu_s, self.g])
