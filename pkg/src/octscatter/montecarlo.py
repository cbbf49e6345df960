"""Layered-media photon transport with depth-resolved backscatter recording.

Photons are launched straight down at the center of each column and follow
the usual hop / drop / spin / roulette cycle: free paths ``-ln(U) / mu_t``,
absorption by weight fraction ``mu_a / mu_t``, Henyey-Greenstein deflection
with the local ``g``, statistical Fresnel reflection or Snell refraction at
interfaces, and Russian roulette below a weight threshold.

Detector
--------
At every scattering event inside the confocal gate (radial distance from
the launch axis <= ``gate_radius``) the expected weight returned into the
detector cone is recorded into bin ``(row of z, launch column)``::

    w * p_HG(cos = -u_z) * Omega_NA * exp(-optical path straight back up)

where ``Omega_NA = 2 pi (1 - cos(asin(NA)))``. This is the expectation of
"scatter into the numerical aperture, then travel back unscattered"; using
it in place of sampled redirections removes a large variance factor.

Determinism
-----------
Photon ``i`` belongs to column ``i % width`` and draws from counter-based
stream ``i`` under ``seed``. Columns are the unit of parallel work and each
column owns its output bins and audit row, so results do not depend on the
number of threads.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numba as nb
import numpy as np

from .fields import ScalarField
from .phantom import PhantomScene

if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # probing an outdated TBB first only produces a warning
    nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

# -- counter-based RNG (SplitMix64) ------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@nb.njit(inline="always", cache=True)
def mix64(z):
    """SplitMix64 finalizer on a uint64."""
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(inline="always", cache=True)
def stream_key(seed, index):
    """Key of stream ``index`` under ``seed`` (both uint64)."""
    return mix64(mix64(seed) ^ mix64(index * _GOLDEN + _GOLDEN))


@nb.njit(inline="always", cache=True)
def uniform(key, counter):
    """Uniform double in the open interval (0, 1) for ``(key, counter)``."""
    bits = mix64(key + counter * _GOLDEN) >> _S11
    return (np.float64(bits) + 0.5) * _INV53


COSZERO = 1.0 - 1.0e-12
T_EPS = 1e-10  # m; intersections closer than this to the start point are ignored
MAX_STEPS = 1_000_000

# audit columns
_LAUNCHED, _ABSORBED, _REFLECTED, _TRANSMITTED, _ROULETTE, _RECORDED = range(6)


@dataclass(frozen=True)
class McConfig:
    """Transport settings.

    ``gate_radius`` defaults to half the lateral pixel pitch when None.
    """

    photons: int = 100_000
    max_weight_roulette_threshold: float = 1e-4
    record_numerical_aperture: float = 0.1
    seed: int = 0
    roulette_survival: float = 0.1
    gate_radius: float | None = None

    def __post_init__(self):
        if int(self.photons) != self.photons or self.photons < 1:
            raise ValueError(f"photons must be an integer >= 1, got {self.photons}")
        if not 0 < self.max_weight_roulette_threshold < 1:
            raise ValueError("roulette threshold must be in (0, 1)")
        if not 0 < self.record_numerical_aperture < 1:
            raise ValueError("numerical aperture must be in (0, 1)")
        if not 0 < self.roulette_survival <= 1:
            raise ValueError("roulette survival must be in (0, 1]")
        if self.gate_radius is not None and not self.gate_radius > 0:
            raise ValueError("gate_radius must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class McAudit:
    """Weight bookkeeping in units of launched photons.

    ``roulette`` is the net weight removed by Russian roulette (killed minus
    boosted), so ``launched == absorbed + reflected + transmitted + roulette``
    up to rounding. Photons that leave the grid laterally count as transmitted.
    ``backscatter_recorded`` is the detector estimate and not part of the balance.
    """

    launched_weight: float
    absorbed: float
    reflected: float
    transmitted: float
    roulette: float
    backscatter_recorded: float

    @property
    def balance_error(self) -> float:
        out = self.absorbed + self.reflected + self.transmitted + self.roulette
        return abs(out - self.launched_weight) / self.launched_weight


@nb.njit(cache=True)
def _boundary_z(i, x, offsets, R, xc):
    if R <= 0.0:
        return offsets[i]
    dx = x - xc
    return offsets[i] + R - math.sqrt(R * R - dx * dx)


@nb.njit(cache=True)
def _hit_interface(i, x, z, ux, uz, offsets, R, xc):
    """Distance along the ray to interface ``i`` (inf if none ahead)."""
    if R <= 0.0:
        if uz == 0.0:
            return np.inf
        t = (offsets[i] - z) / uz
        return t if t > T_EPS else np.inf
    # upper arc of the circle centered (xc, offsets[i] + R) in the x-z plane
    cz = offsets[i] + R
    dx = x - xc
    dz = z - cz
    a = ux * ux + uz * uz
    if a < 1e-300:
        return np.inf
    b = 2.0 * (dx * ux + dz * uz)
    c = dx * dx + dz * dz - R * R
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return np.inf
    sq = math.sqrt(disc)
    best = np.inf
    for t in ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)):
        if t > T_EPS and t < best and z + t * uz <= cz:
            best = t
    return best


@nb.njit(cache=True)
def _normal_up(x, z, i, offsets, R, xc):
    """Unit normal of interface ``i`` pointing toward smaller z (nx, nz)."""
    if R <= 0.0:
        return 0.0, -1.0
    cz = offsets[i] + R
    nx = (x - xc) / R
    nz = (z - cz) / R
    norm = math.sqrt(nx * nx + nz * nz)
    return nx / norm, nz / norm


@nb.njit(cache=True)
def _fresnel(n1, n2, ca1):
    """Unpolarized reflectance and transmitted-angle cosine."""
    if n1 == n2:
        return 0.0, ca1
    if ca1 > COSZERO:
        r = (n2 - n1) / (n2 + n1)
        return r * r, ca1
    sa1 = math.sqrt(max(0.0, 1.0 - ca1 * ca1))
    sa2 = n1 * sa1 / n2
    if sa2 >= 1.0:
        return 1.0, 0.0
    ca2 = math.sqrt(1.0 - sa2 * sa2)
    cap = ca1 * ca2 - sa1 * sa2
    cam = ca1 * ca2 + sa1 * sa2
    sap = sa1 * ca2 + ca1 * sa2
    sam = sa1 * ca2 - ca1 * sa2
    if sam == 0.0:
        return 0.0, ca2
    r = 0.5 * sam * sam * (cam * cam + cap * cap) / (sap * sap * cam * cam)
    return r, ca2


@nb.njit(cache=True)
def _hg_cos(g, u):
    if g == 0.0:
        return 2.0 * u - 1.0
    tmp = (1.0 - g * g) / (1.0 - g + 2.0 * g * u)
    c = (1.0 + g * g - tmp * tmp) / (2.0 * g)
    return min(1.0, max(-1.0, c))


@nb.njit(cache=True)
def _spin(ux, uy, uz, cost, phi):
    sint = math.sqrt(max(0.0, 1.0 - cost * cost))
    cosp = math.cos(phi)
    sinp = math.sin(phi)
    if abs(uz) > COSZERO:
        return sint * cosp, sint * sinp, cost if uz >= 0.0 else -cost
    temp = math.sqrt(1.0 - uz * uz)
    nux = sint * (ux * uz * cosp - uy * sinp) / temp + ux * cost
    nuy = sint * (uy * uz * cosp + ux * sinp) / temp + uy * cost
    nuz = -sint * cosp * temp + uz * cost
    norm = math.sqrt(nux * nux + nuy * nuy + nuz * nuz)
    return nux / norm, nuy / norm, nuz / norm


@nb.njit(cache=True)
def _return_depth(region, x, z, offsets, R, xc, mut):
    """Optical path from (x, z) straight up to the anterior surface."""
    s = mut[region] * (z - _boundary_z(region - 1, x, offsets, R, xc))
    for r in range(1, region):
        s += mut[r] * (offsets[r] - offsets[r - 1])
    return s


@nb.njit(cache=True)
def _run_column(c, width, height, pitch_x, pitch_z, photons, seed, offsets, R, xc,
                n_reg, mus, mua, g_reg, wth, chance, omega, gate_r, grid, audit):
    n_regions = n_reg.shape[0]
    last = n_regions - 1
    mut = mus + mua
    x_max = width * pitch_x
    x0 = (c + 0.5) * pitch_x
    i = c
    while i < photons:
        key = stream_key(seed, np.uint64(i))
        ctr = np.uint64(0)
        one = np.uint64(1)
        w = 1.0
        audit[c, _LAUNCHED] += 1.0
        x, y, z = x0, 0.0, -1e-9
        ux, uy, uz = 0.0, 0.0, 1.0
        region = 0
        s_left = 0.0
        for _ in range(MAX_STEPS):
            # distance to the next interface or lateral wall
            t_b = np.inf
            cross = -1
            if region >= 1:
                t = _hit_interface(region - 1, x, z, ux, uz, offsets, R, xc)
                if t < t_b:
                    t_b, cross = t, region - 1
            if region <= last - 1:
                t = _hit_interface(region, x, z, ux, uz, offsets, R, xc)
                if t < t_b:
                    t_b, cross = t, region
            t_wall = np.inf
            if ux > 0.0:
                t_wall = (x_max - x) / ux
            elif ux < 0.0:
                t_wall = -x / ux
            # free path
            mt = mut[region]
            if mt > 0.0:
                if s_left == 0.0:
                    s_left = -math.log(uniform(key, ctr))
                    ctr += one
                t_s = s_left / mt
            else:
                t_s = np.inf

            if t_wall < t_b and t_wall <= t_s:
                audit[c, _TRANSMITTED] += w
                break
            if t_s < t_b:
                # interaction
                x += t_s * ux
                y += t_s * uy
                z += t_s * uz
                s_left = 0.0
                dw = w * mua[region] / mt
                audit[c, _ABSORBED] += dw
                w -= dw
                gr = g_reg[region]
                if mus[region] > 0.0:
                    dx = x - x0
                    if dx * dx + y * y <= gate_r * gate_r:
                        row = int(math.floor(z / pitch_z))
                        if 0 <= row < height:
                            mu = -uz
                            p = (1.0 - gr * gr) / (4.0 * math.pi * (1.0 + gr * gr - 2.0 * gr * mu) ** 1.5)
                            contrib = w * p * omega * math.exp(-_return_depth(region, x, z, offsets, R, xc, mut))
                            grid[row, c] += contrib
                            audit[c, _RECORDED] += contrib
                    cost = _hg_cos(gr, uniform(key, ctr))
                    phi = 2.0 * math.pi * uniform(key, ctr + one)
                    ctr += np.uint64(2)
                    ux, uy, uz = _spin(ux, uy, uz, cost, phi)
                if w < wth:
                    if uniform(key, ctr) <= chance:
                        audit[c, _ROULETTE] -= w * (1.0 / chance - 1.0)
                        w /= chance
                    else:
                        audit[c, _ROULETTE] += w
                        w = 0.0
                    ctr += one
                    if w == 0.0:
                        break
                continue
            if cross < 0:
                # non-scattering region with nothing ahead
                audit[c, _TRANSMITTED if uz >= 0.0 else _REFLECTED] += w
                break
            # move to the interface
            x += t_b * ux
            y += t_b * uy
            z += t_b * uz
            s_left = max(0.0, s_left - t_b * mt)
            nx, nz = _normal_up(x, z, cross, offsets, R, xc)
            dot = ux * nx + uz * nz
            going_down = dot < 0.0
            if going_down:
                nix, niz = nx, nz
                target = region + 1
            else:
                nix, niz = -nx, -nz
                target = region - 1
            ca1 = abs(dot)
            n1 = n_reg[region]
            n2 = n_reg[target]
            r, ca2 = _fresnel(n1, n2, ca1)
            u = uniform(key, ctr)
            ctr += one
            if u <= r:
                ux += 2.0 * ca1 * nix
                uz += 2.0 * ca1 * niz
            else:
                eta = n1 / n2
                k = eta * ca1 - ca2
                ux = eta * ux + k * nix
                uy = eta * uy
                uz = eta * uz + k * niz
                norm = math.sqrt(ux * ux + uy * uy + uz * uz)
                ux /= norm
                uy /= norm
                uz /= norm
                region = target
                if region == 0:
                    audit[c, _REFLECTED] += w
                    break
                if region == last:
                    audit[c, _TRANSMITTED] += w
                    break
        else:
            audit[c, _ROULETTE] += w
        i += width


@nb.njit(parallel=True, cache=True)
def _transport(width, height, pitch_x, pitch_z, photons, seed, offsets, R, xc,
               n_reg, mus, mua, g_reg, wth, chance, omega, gate_r):
    grid = np.zeros((height, width))
    audit = np.zeros((width, 6))
    for c in nb.prange(width):
        _run_column(c, width, height, pitch_x, pitch_z, photons, seed, offsets, R, xc,
                    n_reg, mus, mua, g_reg, wth, chance, omega, gate_r, grid, audit)
    return grid, audit


def mc_bscan(scene: PhantomScene, mc: McConfig) -> tuple[ScalarField, McAudit]:
    """Simulate a B-scan of ``scene``.

    Returns the per-column mean recorded weight per launched photon and the
    weight audit (totals over all photons).
    """
    n_reg, mus, mua, g_reg = scene.region_table()
    offsets = scene.interface_offsets()
    R = 0.0 if scene.curvature_radius is None else float(scene.curvature_radius)
    na = mc.record_numerical_aperture
    omega = 2.0 * math.pi * (1.0 - math.sqrt(1.0 - na * na))
    gate_r = 0.5 * scene.pitch_x if mc.gate_radius is None else float(mc.gate_radius)
    grid, audit = _transport(
        scene.width, scene.height, float(scene.pitch_x), float(scene.pitch_z),
        int(mc.photons), np.uint64(mc.seed), offsets, R, float(scene.center_x),
        n_reg, mus, mua, g_reg,
        float(mc.max_weight_roulette_threshold), float(mc.roulette_survival), omega, gate_r,
    )
    per_col = audit[:, _LAUNCHED]
    with np.errstate(invalid="ignore", divide="ignore"):
        bscan = np.where(per_col > 0, grid / np.where(per_col > 0, per_col, 1.0), 0.0)
    totals = audit.sum(axis=0)
    report = McAudit(*(float(v) for v in totals))
    return ScalarField(bscan, scene.pitch_x, scene.pitch_z), report
