"""Layered corneal phantoms: scene description, ground-truth maps, scene files.

Geometry
--------
Interfaces are vertical translates of one surface ``z = z_top + sag(x)``
with ``sag(x) = R - sqrt(R**2 - (x - x_c)**2)`` (``x_c`` is the grid center,
``sag = 0`` for a flat scene). Interface ``i`` sits ``sum(thickness[:i])``
below the anterior surface. Above the anterior surface is air (n = 1); below
the last layer is a clear posterior medium (``posterior_n``, no scattering).

Scene files
-----------
INI text, SI units (meters, 1/m)::

    [scene]
    width = 256              ; pixels
    height = 256
    pitch_x = 10e-6          ; m / pixel
    pitch_z = 4e-6
    surface_depth = 100e-6   ; apex depth of the anterior surface, m
    curvature_radius = flat  ; or a radius in m, e.g. 7.8e-3
    posterior_n = 1.336
    seed = 0

    [layer.epithelium]       ; one section per layer, anterior first
    thickness = 50e-6
    n = 1.400
    mu_s = 6000
    mu_a = 10
    g = 0.90
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .fields import ParameterMaps
from .rng import generator

AIR_N = 1.0


@dataclass(frozen=True)
class LayerSpec:
    name: str
    thickness: float
    n: float
    mu_s: float
    mu_a: float = 0.0
    g: float = 0.9

    def __post_init__(self):
        if not self.thickness > 0:
            raise ValueError(f"layer {self.name!r}: thickness must be > 0")
        if not 1.0 <= self.n <= 2.0:
            raise ValueError(f"layer {self.name!r}: n must be in [1, 2], got {self.n}")
        if self.mu_s < 0 or self.mu_a < 0:
            raise ValueError(f"layer {self.name!r}: mu_s and mu_a must be >= 0")
        if not 0.0 <= self.g <= 0.999:
            raise ValueError(f"layer {self.name!r}: g must be in [0, 0.999], got {self.g}")


@dataclass(frozen=True)
class PhantomScene:
    layers: tuple[LayerSpec, ...]
    width: int = 256
    height: int = 256
    pitch_x: float = 10e-6
    pitch_z: float = 4e-6
    surface_depth: float = 100e-6
    curvature_radius: float | None = None
    posterior_n: float = 1.336
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("scene needs at least one layer")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"degenerate grid {self.width}x{self.height}")
        if not (self.pitch_x > 0 and self.pitch_z > 0):
            raise ValueError("pitches must be positive")
        if self.surface_depth < 0:
            raise ValueError("surface_depth must be >= 0")
        if not 1.0 <= self.posterior_n <= 2.0:
            raise ValueError("posterior_n must be in [1, 2]")
        if self.surface_depth + self.total_thickness > self.height * self.pitch_z * (1 + 1e-12):
            raise ValueError(
                f"layers ({self.surface_depth + self.total_thickness:.4g} m incl. surface depth) "
                f"exceed grid depth ({self.height * self.pitch_z:.4g} m)"
            )
        R = self.curvature_radius
        if R is not None:
            if not R > 0:
                raise ValueError("curvature_radius must be > 0 (or None for flat)")
            if self.width * self.pitch_x / 2 >= R:
                raise ValueError("grid half-width must be smaller than the curvature radius")

    @property
    def total_thickness(self) -> float:
        return float(sum(layer.thickness for layer in self.layers))

    @property
    def center_x(self) -> float:
        return 0.5 * self.width * self.pitch_x

    def interface_offsets(self) -> np.ndarray:
        """Apex depth of each interface, anterior surface first (length = layers + 1)."""
        t = np.array([layer.thickness for layer in self.layers])
        return self.surface_depth + np.concatenate([[0.0], np.cumsum(t)])

    def sag(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.curvature_radius is None:
            return np.zeros_like(x)
        R = self.curvature_radius
        dx = x - self.center_x
        return R - np.sqrt(R * R - dx * dx)

    def region_table(self):
        """Per-region (n, mu_s, mu_a, g): air, each layer, posterior medium."""
        n = [AIR_N] + [l.n for l in self.layers] + [self.posterior_n]
        mus = [0.0] + [l.mu_s for l in self.layers] + [0.0]
        mua = [0.0] + [l.mu_a for l in self.layers] + [0.0]
        g = [0.0] + [l.g for l in self.layers] + [0.0]
        return tuple(np.array(v, dtype=np.float64) for v in (n, mus, mua, g))


def region_index(scene: PhantomScene) -> np.ndarray:
    """Region id of each pixel center: 0 air, 1..L layers, L+1 posterior."""
    xc = (np.arange(scene.width) + 0.5) * scene.pitch_x
    zc = (np.arange(scene.height) + 0.5) * scene.pitch_z
    bounds = scene.interface_offsets()[:, None] + scene.sag(xc)[None, :]  # (L+1, W)
    return np.sum(zc[None, :, None] >= bounds[:, None, :], axis=0)


def boundary_rows(scene: PhantomScene) -> np.ndarray:
    """First row whose pixel center lies at or below each interface, per column."""
    xc = (np.arange(scene.width) + 0.5) * scene.pitch_x
    bounds = scene.interface_offsets()[:, None] + scene.sag(xc)[None, :]
    return np.ceil(bounds / scene.pitch_z - 0.5).astype(int)


def scene_to_maps(scene: PhantomScene) -> ParameterMaps:
    """Ground-truth (n, mu_s, g) maps, piecewise constant per region."""
    idx = region_index(scene)
    n, mus, _, g = scene.region_table()
    return ParameterMaps.from_arrays(n[idx], mus[idx], g[idx], scene.pitch_x, scene.pitch_z)


def randomize_scene(base: PhantomScene, seed: int) -> PhantomScene:
    """Jittered copy of ``base`` for dataset generation.

    Ranges: thickness x U(0.9, 1.1), curvature radius x U(0.95, 1.05),
    mu_s and mu_a x U(0.85, 1.15), g + U(-0.02, 0.02), n + U(-0.005, 0.005),
    each clipped to its valid range. Layers that no longer fit are rescaled
    so the stack keeps its original total depth at most.
    """
    rng = generator(seed, "scene")
    layers = []
    for layer in base.layers:
        f_t, f_s, f_a = rng.uniform(0.9, 1.1), rng.uniform(0.85, 1.15), rng.uniform(0.85, 1.15)
        dg, dn = rng.uniform(-0.02, 0.02), rng.uniform(-0.005, 0.005)
        layers.append(
            dataclasses.replace(
                layer,
                thickness=layer.thickness * f_t,
                mu_s=layer.mu_s * f_s,
                mu_a=layer.mu_a * f_a,
                g=float(np.clip(layer.g + dg, 0.0, 0.999)),
                n=float(np.clip(layer.n + dn, 1.0, 2.0)),
            )
        )
    room = base.height * base.pitch_z - base.surface_depth
    total = sum(l.thickness for l in layers)
    if total > room:
        layers = [dataclasses.replace(l, thickness=l.thickness * room / total * (1 - 1e-9)) for l in layers]
    R = base.curvature_radius
    if R is not None:
        R = max(R * rng.uniform(0.95, 1.05), base.width * base.pitch_x / 2 * (1 + 1e-6))
    return dataclasses.replace(base, layers=tuple(layers), curvature_radius=R, seed=int(seed))


# -- scene files -------------------------------------------------------------

_SCENE_KEYS = {
    "width": int,
    "height": int,
    "pitch_x": float,
    "pitch_z": float,
    "surface_depth": float,
    "curvature_radius": None,
    "posterior_n": float,
    "seed": int,
}
_LAYER_KEYS = ("thickness", "n", "mu_s", "mu_a", "g")


class SceneFileError(ValueError):
    pass


def _parse_radius(text: str):
    if text.strip().lower() in ("flat", "none", "inf", ""):
        return None
    return float(text)


def parse_scene(text: str, source: str = "<string>") -> PhantomScene:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise SceneFileError(f"{source}: {exc}") from None
    if "scene" not in cp:
        raise SceneFileError(f"{source}: missing [scene] section")
    kw = {}
    for key, value in cp["scene"].items():
        if key not in _SCENE_KEYS:
            raise SceneFileError(f"{source}: unknown key {key!r} in [scene]")
        conv = _SCENE_KEYS[key]
        try:
            kw[key] = _parse_radius(value) if conv is None else conv(value)
        except ValueError:
            raise SceneFileError(f"{source}: bad value for {key!r}: {value!r}") from None
    layers = []
    for name in cp.sections():
        if name == "scene":
            continue
        if not name.startswith("layer."):
            raise SceneFileError(f"{source}: unknown section [{name}]")
        sec = cp[name]
        extra = set(sec) - set(_LAYER_KEYS)
        if extra:
            raise SceneFileError(f"{source}: unknown key(s) {sorted(extra)} in [{name}]")
        try:
            layers.append(LayerSpec(name[len("layer."):], **{k: float(v) for k, v in sec.items()}))
        except (TypeError, ValueError) as exc:
            raise SceneFileError(f"{source}: [{name}]: {exc}") from None
    try:
        return PhantomScene(layers=tuple(layers), **kw)
    except ValueError as exc:
        raise SceneFileError(f"{source}: {exc}") from None


def load_scene(path) -> PhantomScene:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SceneFileError(f"cannot read scene file {path}: {exc.strerror}") from None
    return parse_scene(text, source=str(path))


def format_scene(scene: PhantomScene) -> str:
    R = "flat" if scene.curvature_radius is None else repr(scene.curvature_radius)
    lines = [
        "[scene]",
        f"width = {scene.width}",
        f"height = {scene.height}",
        f"pitch_x = {scene.pitch_x!r}",
        f"pitch_z = {scene.pitch_z!r}",
        f"surface_depth = {scene.surface_depth!r}",
        f"curvature_radius = {R}",
        f"posterior_n = {scene.posterior_n!r}",
        f"seed = {scene.seed}",
    ]
    for layer in scene.layers:
        lines += ["", f"[layer.{layer.name}]"]
        lines += [f"{k} = {getattr(layer, k)!r}" for k in _LAYER_KEYS]
    return "\n".join(lines) + "\n"


def default_cornea() -> PhantomScene:
    """Five-layer cornea shipped with the package (1024 x 1024 grid)."""
    text = resources.files("octscatter").joinpath("data/cornea.ini").read_text()
    return parse_scene(text, source="octscatter/data/cornea.ini")


def flat_cornea(width: int = 256, height: int = 256, pitch_x: float = 10e-6, pitch_z: float = 4e-6) -> PhantomScene:
    """Flat five-layer cornea at desk scale.

    Bowman's layer, Descemet's membrane and the endothelium are drawn thicker
    than anatomy so that every layer spans several rows at 4 um pitch.
    """
    layers = (
        LayerSpec("epithelium", 60e-6, 1.400, 8.0e3, 10.0, 0.90),
        LayerSpec("bowman", 40e-6, 1.380, 4.0e3, 10.0, 0.93),
        LayerSpec("stroma", 400e-6, 1.373, 2.5e3, 10.0, 0.95),
        LayerSpec("descemet", 40e-6, 1.360, 6.0e3, 10.0, 0.90),
        LayerSpec("endothelium", 40e-6, 1.350, 10.0e3, 10.0, 0.86),
    )
    return PhantomScene(layers, width, height, pitch_x, pitch_z, surface_depth=100e-6)


def layer_bounds(scene: PhantomScene):
    """``[(first_row, stop_row)]`` per layer for a flat scene, from pixel centers."""
    if scene.curvature_radius is not None:
        raise ValueError("layer_bounds is defined for flat scenes only")
    rows = boundary_rows(scene)[:, 0]
    return [(int(rows[i]), int(rows[i + 1])) for i in range(len(scene.layers))]


def layer_means(field: np.ndarray, scene: PhantomScene, margin: int = 0) -> np.ndarray:
    """Mean of ``field`` inside each layer of a flat scene, optionally trimming ``margin`` rows at each edge."""
    out = []
    for lo, hi in layer_bounds(scene):
        lo2, hi2 = lo + margin, hi - margin
        if hi2 <= lo2:
            lo2, hi2 = lo, hi
        out.append(float(np.mean(field[lo2:hi2])))
    return np.array(out)

