"""Extended Huygens-Fresnel OCT signal model and its derivatives.

For a homogeneous medium the mean squared OCT amplitude at depth z is::

    F = exp(-2 mu_s z) / wH2
        + 4 exp(-mu_s z) (1 - exp(-mu_s z)) / (wH2 + wS2)
        + (1 - exp(-mu_s z))**2 / wS2

(the bracketed form with ``1 / (1 + wS2/wH2)`` and ``wH2/wS2`` divided by
``wH2`` rearranges to the above), with

    wH2 = w0**2 * (((z - z_f) / (2 n z_R))**2 + 1)
    wS2 = wH2 + (mu_s z) * theta_rms**2 * (z / n)**2 / 3
    theta_rms = sqrt(2 (1 - g))

For B-scans the product ``mu_s z`` is replaced by the optical thickness
accumulated down each column (trapezoidal rule over rows), and ``n`` inside
the beam widths is the local value. In a homogeneous column both reduce to
the closed form above. Depth ``z`` is geometric depth; no refraction at
interfaces is modelled.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .fields import BeamParams, ParameterMaps, ScalarField, check_same_shape

GAIN_FLOOR = 1e-300


class GainMode(enum.Enum):
    FIXED_UNIT = "fixed"
    PER_COLUMN_LSQ = "lsq"


@dataclass(frozen=True)
class ForwardConfig:
    beam: BeamParams = BeamParams()
    gain_mode: GainMode = GainMode.FIXED_UNIT
    depth_origin: float = 0.0

    def __post_init__(self):
        if not self.depth_origin >= 0:
            raise ValueError(f"depth_origin must be >= 0, got {self.depth_origin}")
        object.__setattr__(self, "gain_mode", GainMode(self.gain_mode))


@dataclass(frozen=True, eq=False)
class ForwardOutput:
    intensity: ScalarField
    per_column_gain: np.ndarray


def theta_rms(g):
    """RMS forward-scattering angle [rad] for anisotropy ``g`` in [0, 1]."""
    g = np.asarray(g, dtype=np.float64)
    if np.any(g < 0) or np.any(g > 1):
        raise ValueError("g must lie in [0, 1]")
    out = np.sqrt(2.0 * (1.0 - g))
    return out.item() if out.ndim == 0 else out


def w_h_sq(z, n, beam: BeamParams):
    """Squared beam radius without forward scattering [m^2]."""
    a = (np.asarray(z, dtype=np.float64) - beam.z_f) / (2.0 * np.asarray(n, dtype=np.float64) * beam.z_R)
    return beam.w0**2 * (a * a + 1.0)


def _broadening(tau, z, n, g):
    # (1/3) tau theta^2 (z/n)^2 with theta^2 = 2(1-g)
    zn = z / n
    return (2.0 / 3.0) * tau * (1.0 - g) * zn * zn


def w_s_sq(z, n, mu_s, g, beam: BeamParams):
    """Squared beam radius broadened by multiple forward scattering [m^2]."""
    z = np.asarray(z, dtype=np.float64)
    return w_h_sq(z, n, beam) + _broadening(np.asarray(mu_s) * z, z, n, np.asarray(g, dtype=np.float64))


def _ehf(tau, z, n, g, beam):
    H = w_h_sq(z, n, beam)
    S = H + _broadening(tau, z, n, g)
    E = np.exp(-tau)
    one_m = -np.expm1(-tau)
    return E * E / H + 4.0 * E * one_m / (H + S) + one_m * one_m / S


def ehf_intensity_homogeneous(z, n, mu_s, g, beam: BeamParams):
    """Predicted OCT intensity at depth ``z`` in a homogeneous medium (arbitrary units)."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0):
        raise ValueError("z must be non-negative")
    mu_s = np.asarray(mu_s, dtype=np.float64)
    if np.any(mu_s < 0):
        raise ValueError("mu_s must be non-negative")
    out = _ehf(mu_s * z, z, np.asarray(n, dtype=np.float64), np.asarray(g, dtype=np.float64), beam)
    return out.item() if np.ndim(out) == 0 else out


def ehf_local_partials(tau, z, n, g, beam: BeamParams):
    """Value and partial derivatives of the model w.r.t. (tau, n, g).

    Returns
    -------
    F, dF_dtau, dF_dn, dF_dg : ndarray
    """
    H = w_h_sq(z, n, beam)
    a2 = ((z - beam.z_f) / (2.0 * n * beam.z_R)) ** 2
    dH_dn = -2.0 * beam.w0**2 * a2 / n
    zn2 = (z / n) ** 2
    B = (2.0 / 3.0) * tau * (1.0 - g) * zn2
    S = H + B
    E = np.exp(-tau)
    one_m = -np.expm1(-tau)
    HS = H + S

    F = E * E / H + 4.0 * E * one_m / HS + one_m * one_m / S

    cross = 4.0 * E * one_m / (HS * HS)
    dF_dH = -E * E / (H * H) - cross
    dF_dS = -cross - one_m * one_m / (S * S)
    dF_dE = 2.0 * E / H + 4.0 * (1.0 - 2.0 * E) / HS - 2.0 * one_m / S

    dS_dtau = (2.0 / 3.0) * (1.0 - g) * zn2
    dS_dn = dH_dn - 2.0 * B / n
    dS_dg = -(2.0 / 3.0) * tau * zn2

    dF_dtau = -E * dF_dE + dF_dS * dS_dtau
    dF_dn = dF_dH * dH_dn + dF_dS * dS_dn
    dF_dg = dF_dS * dS_dg
    return F, dF_dtau, dF_dn, dF_dg


def depths(height: int, pitch_z: float, depth_origin: float) -> np.ndarray:
    """Geometric depth of each row, ``depth_origin + k * pitch_z``."""
    return depth_origin + pitch_z * np.arange(height, dtype=np.float64)


def optical_thickness(mu_s: np.ndarray, pitch_z: float, depth_origin: float) -> np.ndarray:
    """Cumulative optical thickness down each column.

    The slab above row 0 is taken to share row 0's ``mu_s``; between rows the
    trapezoidal rule is used, so a constant column gives exactly ``mu_s * z``.
    """
    tau = np.empty_like(mu_s)
    tau[0] = mu_s[0] * depth_origin
    if mu_s.shape[0] > 1:
        steps = 0.5 * pitch_z * (mu_s[1:] + mu_s[:-1])
        tau[1:] = tau[0] + np.cumsum(steps, axis=0)
    return tau


def optical_thickness_vjp(cot: np.ndarray, pitch_z: float, depth_origin: float) -> np.ndarray:
    """Adjoint of :func:`optical_thickness`: maps d/dtau to d/dmu_s."""
    # suffix sums: R[j] = sum_{k >= j} cot[k]
    R = np.cumsum(cot[::-1], axis=0)[::-1]
    out = np.zeros_like(cot)
    out[0] = depth_origin * R[0]
    if cot.shape[0] > 1:
        # step j (between rows j and j+1) feeds every row k >= j+1
        step_cot = 0.5 * pitch_z * R[1:]
        out[:-1] += step_cot
        out[1:] += step_cot
    return out


def column_gain(pred: np.ndarray, measured: np.ndarray) -> np.ndarray:
    """Closed-form least-squares scale per column, floored at a tiny positive value."""
    num = np.sum(pred * measured, axis=0)
    den = np.sum(pred * pred, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(den > 0, num / den, 1.0)
    return np.maximum(c, GAIN_FLOOR)


def _gain(cfg: ForwardConfig, raw: np.ndarray, measured: ScalarField | None, shape) -> np.ndarray:
    if cfg.gain_mode is GainMode.FIXED_UNIT:
        return np.ones(shape[1])
    if measured is None:
        raise ValueError("per-column least-squares gain needs a measured B-scan")
    if measured.shape != shape:
        raise ValueError(f"shape mismatch: maps {shape} vs measured {measured.shape}")
    return column_gain(raw, measured.data)


def forward_bscan(maps: ParameterMaps, cfg: ForwardConfig, measured: ScalarField | None = None) -> ForwardOutput:
    """Predicted B-scan for depth-varying parameter maps."""
    n, mu_s, g = maps.n.data, maps.mu_s.data, maps.g.data
    z = depths(maps.shape[0], maps.pitch_z, cfg.depth_origin)[:, None]
    tau = optical_thickness(mu_s, maps.pitch_z, cfg.depth_origin)
    raw = _ehf(tau, z, n, g, cfg.beam)
    gain = _gain(cfg, raw, measured, maps.shape)
    return ForwardOutput(maps.n.replace(raw * gain), gain)


@dataclass(frozen=True, eq=False)
class ForwardJacobian:
    """Local partials of the predicted B-scan plus the column-cumulative adjoint for mu_s.

    ``d_n`` and ``d_g`` are exact pixelwise derivatives (gain included);
    ``d_tau`` is the derivative w.r.t. the optical thickness at each pixel.
    The full derivative w.r.t. ``mu_s`` couples each pixel to every pixel
    below it in the same column and is applied through :meth:`vjp`.
    """

    intensity: np.ndarray
    gain: np.ndarray
    d_n: np.ndarray
    d_g: np.ndarray
    d_tau: np.ndarray
    pitch_z: float
    depth_origin: float

    def vjp(self, cot: np.ndarray):
        """Pull back a cotangent on the intensity to (n, mu_s, g) gradients."""
        g_n = cot * self.d_n
        g_g = cot * self.d_g
        g_mus = optical_thickness_vjp(cot * self.d_tau, self.pitch_z, self.depth_origin)
        return g_n, g_mus, g_g

    def d_intensity_d_mus(self, row: int, col: int) -> np.ndarray:
        """Column of dI[:, col] / dmu_s[row, col] (dense, for inspection and tests)."""
        e = np.zeros(self.d_tau.shape[0])
        h = self.d_tau.shape[0]
        for k in range(h):
            e[k] = self._dtau_dmus(k, row) * self.d_tau[k, col]
        return e

    def _dtau_dmus(self, k: int, j: int) -> float:
        if j > k:
            return 0.0
        if k == 0:
            return self.depth_origin
        if j == 0:
            return self.depth_origin + 0.5 * self.pitch_z
        if j == k:
            return 0.5 * self.pitch_z
        return self.pitch_z


def forward_gradients(maps: ParameterMaps, cfg: ForwardConfig, measured: ScalarField | None = None) -> ForwardJacobian:
    """Derivatives of :func:`forward_bscan` with respect to the three maps.

    With least-squares gain the gain is held fixed at its optimum; for the
    forward-consistency loss this is exact by the envelope theorem.
    """
    n, mu_s, g = maps.n.data, maps.mu_s.data, maps.g.data
    z = depths(maps.shape[0], maps.pitch_z, cfg.depth_origin)[:, None]
    tau = optical_thickness(mu_s, maps.pitch_z, cfg.depth_origin)
    F, dtau, dn, dg = ehf_local_partials(tau, z, n, g, cfg.beam)
    gain = _gain(cfg, F, measured, maps.shape)
    return ForwardJacobian(
        intensity=F * gain,
        gain=gain,
        d_n=dn * gain,
        d_g=dg * gain,
        d_tau=dtau * gain,
        pitch_z=maps.pitch_z,
        depth_origin=cfg.depth_origin,
    )
