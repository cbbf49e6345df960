"""Run configuration files (INI) with command-line overrides.

Sections and their keys::

    [run]      seed, scene, out_dir
    [forward]  w0, z_R, z_f, gain_mode, depth_origin
    [solver]   every SolverConfig field except seed
    [weights]  lambda1..lambda4, omega_n, omega_mus, omega_g
    [speckle]  enabled, distribution, looks
    [mc]       photons, max_weight_roulette_threshold, record_numerical_aperture,
               roulette_survival, gate_radius
    [prior]    samples, scene, var_floor, sigma_min, sigma_max

Subsystem seeds are never read from the file; they are derived from the
single run seed. Unknown sections and keys are errors.
"""
from __future__ import annotations

import configparser
import dataclasses
import enum
from dataclasses import dataclass
from pathlib import Path

from .ehf import ForwardConfig
from .fields import BeamParams, LossWeights
from .montecarlo import McConfig
from .phantom import PhantomScene, flat_cornea, load_scene, randomize_scene, scene_to_maps
from .rng import derive_seed
from .scores import NoiseSchedule, fit_gaussian_prior
from .solver import SolverConfig
from .speckle import SpeckleConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PriorConfig:
    """Gaussian score prior fitted to jittered copies of a phantom.

    ``scene`` is ``"flat"`` for the built-in flat cornea or a scene-file path.
    """

    samples: int = 8
    scene: str = "flat"
    var_floor: float = 1e-2
    sigma_min: float = 0.002
    sigma_max: float = 80.0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("prior samples must be >= 1")
        if not self.var_floor > 0:
            raise ValueError("var_floor must be > 0")
        NoiseSchedule(self.sigma_min, self.sigma_max)


@dataclass(frozen=True)
class RunConfig:
    forward: ForwardConfig = ForwardConfig()
    solver: SolverConfig = SolverConfig()
    weights: LossWeights = LossWeights()
    speckle: SpeckleConfig | None = None
    mc: McConfig = McConfig()
    prior: PriorConfig = PriorConfig()
    scene: str | None = None
    out_dir: str | None = None
    seed: int = 0


_BEAM_KEYS = ("w0", "z_R", "z_f")
_SECTIONS = {
    "run": ("seed", "scene", "out_dir"),
    "forward": _BEAM_KEYS + ("gain_mode", "depth_origin"),
    "solver": tuple(f for f in SolverConfig.__dataclass_fields__ if f != "seed"),
    "weights": tuple(LossWeights.__dataclass_fields__),
    "speckle": ("enabled", "distribution", "looks"),
    "mc": tuple(f for f in McConfig.__dataclass_fields__ if f != "seed"),
    "prior": tuple(PriorConfig.__dataclass_fields__),
}


def _convert(text: str, default):
    t = text.strip()
    if isinstance(default, bool):
        low = t.lower()
        if low in ("1", "yes", "true", "on"):
            return True
        if low in ("0", "no", "false", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(default, enum.Enum):
        return type(default)(t.lower())
    if isinstance(default, int):
        return int(t)
    if isinstance(default, tuple):
        items = [v.strip() for v in t.split(",") if v.strip()]
        # numeric tuples have numeric defaults; name lists default to ()
        if default and isinstance(default[0], float):
            return tuple(float(v) for v in items)
        return tuple(items)
    if default is None or isinstance(default, float):
        if default is None and t.lower() in ("none", "auto", ""):
            return None
        return float(t)
    return t


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(v if isinstance(v, str) else repr(float(v)) for v in value)
    return str(value)


def _defaults() -> dict[str, dict]:
    cfg = RunConfig()
    beam = cfg.forward.beam
    return {
        "run": {"seed": 0, "scene": "", "out_dir": ""},
        "forward": {**{k: getattr(beam, k) for k in _BEAM_KEYS},
                    "gain_mode": cfg.forward.gain_mode, "depth_origin": cfg.forward.depth_origin},
        "solver": {k: getattr(cfg.solver, k) for k in _SECTIONS["solver"]},
        "weights": dataclasses.asdict(cfg.weights),
        "speckle": {"enabled": False, **{k: getattr(SpeckleConfig(), k) for k in ("distribution", "looks")}},
        "mc": {k: getattr(cfg.mc, k) for k in _SECTIONS["mc"]},
        "prior": dataclasses.asdict(cfg.prior),
    }


def parse_overrides(items) -> list[tuple[str, str, str]]:
    """``["section.key=value", ...]`` -> ``[(section, key, value), ...]``."""
    out = []
    for item in items or ():
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        out.append((section, key, value))
    return out


def load_run_config(path=None, overrides=(), seed: int | None = None) -> RunConfig:
    """Read an optional config file, apply ``(section, key, value)`` overrides and validate."""
    raw: dict[str, dict[str, str]] = {}
    source = "<defaults>"
    if path is not None:
        source = str(path)
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        raw = {s: dict(cp[s]) for s in cp.sections()}
    for section, key, value in overrides:
        raw.setdefault(section, {})[key] = value
    if seed is not None:
        raw.setdefault("run", {})["seed"] = str(seed)

    values = _defaults()
    for section, items in raw.items():
        if section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, text in items.items():
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            try:
                values[section][key] = _convert(text, values[section][key])
            except ValueError as exc:
                raise ConfigError(f"{source}: [{section}] {key}: {exc}") from None
    try:
        return _build(values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _build(v: dict[str, dict]) -> RunConfig:
    run = v["run"]
    seed = int(run["seed"])
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a non-negative 64-bit integer")
    f = v["forward"]
    forward = ForwardConfig(BeamParams(*(f[k] for k in _BEAM_KEYS)), f["gain_mode"], f["depth_origin"])
    solver = SolverConfig(**v["solver"], seed=derive_seed(seed, "solver"))
    sp = v["speckle"]
    speckle = None
    if sp["enabled"]:
        speckle = SpeckleConfig(sp["distribution"], sp["looks"], derive_seed(seed, "speckle"))
    return RunConfig(
        forward=forward,
        solver=solver,
        weights=LossWeights(**v["weights"]),
        speckle=speckle,
        mc=McConfig(**v["mc"], seed=derive_seed(seed, "mc")),
        prior=PriorConfig(**v["prior"]),
        scene=run["scene"] or None,
        out_dir=run["out_dir"] or None,
        seed=seed,
    )


def format_run_config(cfg: RunConfig) -> str:
    """Effective configuration as INI text (derived seeds listed as comments)."""
    beam = cfg.forward.beam
    sections = {
        "run": {"seed": cfg.seed, "scene": cfg.scene or "", "out_dir": cfg.out_dir or ""},
        "forward": {**{k: getattr(beam, k) for k in _BEAM_KEYS},
                    "gain_mode": cfg.forward.gain_mode, "depth_origin": cfg.forward.depth_origin},
        "solver": {k: getattr(cfg.solver, k) for k in _SECTIONS["solver"]},
        "weights": dataclasses.asdict(cfg.weights),
        "speckle": {"enabled": cfg.speckle is not None,
                    **{k: getattr(cfg.speckle or SpeckleConfig(), k) for k in ("distribution", "looks")}},
        "mc": {k: getattr(cfg.mc, k) for k in _SECTIONS["mc"]},
        "prior": dataclasses.asdict(cfg.prior),
    }
    derived = {"solver": cfg.solver.seed, "mc": cfg.mc.seed,
               "speckle": cfg.speckle.seed if cfg.speckle is not None else None}
    lines = []
    for name, items in sections.items():
        lines.append(f"[{name}]")
        if derived.get(name) is not None:
            lines.append(f"; derived seed {derived[name]}")
        lines += [f"{k} = {_format(val)}" for k, val in items.items()]
        lines.append("")
    return "\n".join(lines)


# -- prior construction --------------------------------------------------------


def prior_base_scene(prior: PriorConfig, shape, pitch_x: float, pitch_z: float) -> PhantomScene:
    h, w = shape
    if prior.scene == "flat":
        base = flat_cornea()
    else:
        base = load_scene(prior.scene)
    return dataclasses.replace(base, width=w, height=h, pitch_x=pitch_x, pitch_z=pitch_z)


def build_providers(prior: PriorConfig, shape, pitch_x: float, pitch_z: float, seed: int, size: int = 256):
    """Per-channel Gaussian score providers fitted to jittered phantoms on the given grid."""
    base = prior_base_scene(prior, shape, pitch_x, pitch_z)
    maps = [scene_to_maps(randomize_scene(base, derive_seed(seed, "prior", k))) for k in range(prior.samples)]
    schedule = NoiseSchedule(prior.sigma_min, prior.sigma_max)
    return {
        name: fit_gaussian_prior([getattr(m, name).data for m in maps], size, prior.var_floor, schedule)
        for name in ("n", "mu_s", "g")
    }
