"""Command-line pipelines: phantom, forward, invert, eval, render.

Exit codes: 0 success, 1 runtime failure, 2 configuration or input error.
Heavy modules are imported after the thread settings are applied, so
``--threads`` takes effect for the transport kernels.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
RUN_MANIFEST = "run.ini"


class InputError(Exception):
    """Bad configuration or unusable input file (exit code 2)."""


def _configure_threads(threads: int | None) -> None:
    if "numpy" not in sys.modules:
        # one BLAS thread keeps reductions bit-identical whatever --threads is
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, "1")
    if threads is None:
        return
    if threads < 1:
        raise InputError(f"--threads must be >= 1, got {threads}")
    if "numba" not in sys.modules:
        current = int(os.environ.get("NUMBA_NUM_THREADS") or 0)
        if current < threads:
            os.environ["NUMBA_NUM_THREADS"] = str(max(threads, os.cpu_count() or 1))
    import numba

    limit = numba.config.NUMBA_NUM_THREADS
    if threads > limit:
        print(f"warning: --threads {threads} exceeds the worker pool ({limit}); using {limit}", file=sys.stderr)
    numba.set_num_threads(min(threads, limit))


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for parallel kernels (default: all available)")

    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, default=None, help="run seed; overrides [run] seed")
    seeded.add_argument("--config", default=None, help="INI run configuration file")
    seeded.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")

    parser = argparse.ArgumentParser(prog="octscatter", description="OCT scattering simulation and inversion")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("phantom", parents=[common, seeded], help="simulate B-scan / ground-truth pairs",
                       description="Monte Carlo dataset of jittered copies of a layered scene.")
    p.add_argument("--scene", required=True, help="scene file (INI)")
    p.add_argument("--photons", type=int, default=None, help="photons per B-scan; overrides [mc] photons")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=1, help="number of pairs (default 1)")
    p.add_argument("--speckle", action="store_true", help="multiply B-scans by speckle ([speckle] settings)")
    p.add_argument("--exact", action="store_true", help="simulate the scene as given, without jitter")

    p = sub.add_parser("forward", parents=[common, seeded], help="evaluate the forward model on parameter maps",
                       description="Predicted intensity of 3-channel (n, mu_s, g) maps.")
    p.add_argument("--maps", required=True, help="3-channel octmap")
    p.add_argument("--out", required=True, help="output 1-channel octmap")
    p.add_argument("--measured", default=None, help="B-scan for per-column least-squares gain")

    p = sub.add_parser("invert", parents=[common, seeded], help="reconstruct parameter maps from a B-scan",
                       description="Variational inversion; with --ablate, one run per loss variant.")
    p.add_argument("--bscan", required=True, help="1-channel octmap")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--truth", default=None, help="ground-truth 3-channel octmap for metrics")
    p.add_argument("--ablate", default=None, metavar="V1,V2,...",
                   help="comma-separated variants from full,no_diff,no_physics,no_tv,baseline")
    p.add_argument("--max-iters", type=int, default=None, help="overrides [solver] max_iters")

    p = sub.add_parser("eval", parents=[common], help="PSNR / SSIM / MSE between two octmaps",
                       description="Compare --a against reference --b.")
    p.add_argument("--a", required=True, help="candidate octmap")
    p.add_argument("--b", required=True, help="reference octmap")
    p.add_argument("--range", type=float, default=None, dest="data_range",
                   help="data range for PSNR/SSIM (default: max - min of --b)")

    p = sub.add_parser("render", parents=[common], help="write an 8-bit PGM preview",
                       description="Min-max scaled grayscale preview of an octmap channel.")
    p.add_argument("--in", required=True, dest="inp", help="input octmap")
    p.add_argument("--out", required=True, help="output .pgm")
    p.add_argument("--log", action="store_true", help="display in dB relative to the peak")
    p.add_argument("--floor-db", type=float, default=-60.0, help="lower clip for --log (default -60)")
    p.add_argument("--channel", choices=("n", "mu_s", "g"), default="mu_s",
                   help="channel of a 3-channel file (default mu_s)")
    return parser


# -- helpers -------------------------------------------------------------------


def _run_config(args, extra=()):
    from .config import ConfigError, load_run_config, parse_overrides

    try:
        overrides = parse_overrides(args.overrides) + list(extra)
        return load_run_config(args.config, overrides, args.seed)
    except ConfigError as exc:
        raise InputError(str(exc)) from None


def _read(path, want: str):
    """Read an octmap that must hold a scalar field (``"field"``) or maps (``"maps"``)."""
    from .fields import ParameterMaps, ScalarField
    from .io import OctmapError, read_octmap

    try:
        obj = read_octmap(path)
    except (OSError, OctmapError) as exc:
        raise InputError(str(exc)) from None
    if want == "field" and not isinstance(obj, ScalarField):
        raise InputError(f"{path}: expected a 1-channel field, found 3 channels")
    if want == "maps" and not isinstance(obj, ParameterMaps):
        raise InputError(f"{path}: expected 3-channel (n, mu_s, g) maps, found 1 channel")
    return obj


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _write_manifest(path: Path, cfg, extra: dict) -> None:
    from .config import format_run_config

    head = "".join(f"; {k} = {v}\n" for k, v in extra.items())
    path.write_text(head + format_run_config(cfg))


# -- commands ------------------------------------------------------------------


def cmd_phantom(args) -> int:
    import dataclasses

    from .dataset import generate_dataset
    from .phantom import SceneFileError, load_scene, randomize_scene
    from .rng import derive_seed

    extra = []
    if args.photons is not None:
        extra.append(("mc", "photons", str(args.photons)))
    if args.speckle:
        extra.append(("speckle", "enabled", "true"))
    cfg = _run_config(args, extra)
    if args.count < 1:
        raise InputError(f"--count must be >= 1, got {args.count}")
    try:
        base = load_scene(args.scene)
    except SceneFileError as exc:
        raise InputError(str(exc)) from None
    scenes = []
    for k in range(args.count):
        s = derive_seed(cfg.seed, "scene", k)
        scenes.append(dataclasses.replace(base, seed=s) if args.exact else randomize_scene(base, s))
    out = _out_dir(args.out)
    records = generate_dataset(scenes, cfg.mc, out, cfg.speckle)
    _write_manifest(out / RUN_MANIFEST, cfg, {"command": "phantom", "scene": args.scene, "count": args.count})
    worst = max(abs(r["audit"]["launched_weight"] - r["audit"]["absorbed"] - r["audit"]["reflected"]
                    - r["audit"]["transmitted"] - r["audit"]["roulette"]) / r["audit"]["launched_weight"]
                for r in records)
    print(f"wrote {len(records)} pair(s) to {out} (worst energy imbalance {worst:.2e})")
    return EXIT_OK


def cmd_forward(args) -> int:
    from .ehf import forward_bscan
    from .fields import check_same_shape
    from .io import write_octmap

    cfg = _run_config(args)
    maps = _read(args.maps, "maps")
    measured = None
    if args.measured is not None:
        measured = _read(args.measured, "field")
        try:
            check_same_shape(maps.n, measured)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    try:
        out = forward_bscan(maps, cfg.forward, measured)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    write_octmap(args.out, out.intensity)
    out_path = Path(args.out)
    _write_manifest(out_path.with_name(out_path.name + "." + RUN_MANIFEST), cfg,
                    {"command": "forward", "maps": args.maps})
    print(f"wrote {args.out} ({maps.shape[1]}x{maps.shape[0]})")
    return EXIT_OK


def _write_result(out: Path, result) -> None:
    from .io import write_octmap
    from .losses import LossBreakdown

    write_octmap(out / "maps.octm", result.maps)
    write_octmap(out / "denoised.octm", result.denoised_intensity)
    lines = [LossBreakdown.CSV_HEADER] + [b.csv_row(i) for i, b in enumerate(result.loss_history)]
    (out / "loss.csv").write_text("\n".join(lines) + "\n")


def cmd_invert(args) -> int:
    from .config import ConfigError, build_providers
    from .ehf import forward_bscan
    from .fields import check_same_shape
    from .metrics import (
        Channel,
        evaluate_intensity,
        evaluate_maps,
        metrics_csv,
        metrics_text,
        region_csv,
        region_errors,
    )
    from .solver import ABLATION_LABELS, NonFiniteLoss, ablate, invert, standard_variants

    extra = [("solver", "max_iters", str(args.max_iters))] if args.max_iters is not None else []
    cfg = _run_config(args, extra)
    bscan = _read(args.bscan, "field")
    truth = None
    if args.truth is not None:
        truth = _read(args.truth, "maps")
        try:
            check_same_shape(truth.n, bscan)
        except ValueError as exc:
            raise InputError(str(exc)) from None

    if args.ablate:
        names = [v.strip() for v in args.ablate.split(",") if v.strip()]
        try:
            variants = standard_variants(cfg.weights, names)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        if len(variants) < 2:
            raise InputError("--ablate needs at least two distinct variants")
    else:
        variants = {"full": cfg.weights}
    if truth is None and any(w.lambda1 > 0 for w in variants.values()):
        raise InputError("lambda1 > 0 needs ground truth; pass --truth or set [weights] lambda1 = 0")
    if bscan.data.min() < 0:
        raise InputError(f"{args.bscan}: B-scan intensity must be non-negative")

    providers = None
    if any(w.lambda4 > 0 for w in variants.values()):
        try:
            providers = build_providers(cfg.prior, bscan.shape, bscan.pitch_x, bscan.pitch_z,
                                        cfg.seed, cfg.solver.diff_size)
        except (ConfigError, ValueError) as exc:
            raise InputError(f"cannot build the score prior: {exc}") from None

    out = _out_dir(args.out)
    try:
        if args.ablate:
            table = ablate(variants, bscan, cfg.solver, cfg.forward, truth, providers)
            for name, res in table.results.items():
                sub = out / name
                sub.mkdir(exist_ok=True)
                _write_result(sub, res)
            rows = {ABLATION_LABELS[n]: r for n, r in table.rows.items()}
            (out / "ablation.csv").write_text(metrics_csv(rows))
            (out / "ablation.txt").write_text(metrics_text(rows))
            tv_lines = ["variant,output_tv"] + [f"{n},{v!r}" for n, v in table.output_tv.items()]
            (out / "ablation_tv.csv").write_text("\n".join(tv_lines) + "\n")
            print(metrics_text(rows))
        else:
            res = invert(bscan, cfg.solver, cfg.forward, cfg.weights, truth, providers)
            _write_result(out, res)
            if truth is not None:
                reference = forward_bscan(truth, cfg.forward, bscan).intensity
                row = {Channel.INTENSITY: evaluate_intensity(res.denoised_intensity, reference)}
                row.update(evaluate_maps(res.maps, truth))
                rows = {"result": row}
                (out / "metrics.csv").write_text(metrics_csv(rows))
                (out / "metrics.txt").write_text(metrics_text(rows))
                (out / "layers.csv").write_text(region_csv(region_errors(res.maps, truth)))
            state = "converged" if res.converged else "stopped at max_iters"
            print(f"{res.iterations_run} iterations, {state}; final loss {res.loss_history[-1].total:.6g}"
                  if res.loss_history else "no iterations run")
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_manifest(out / RUN_MANIFEST, cfg, {"command": "invert", "bscan": args.bscan,
                                              "truth": args.truth, "ablate": args.ablate})
    return EXIT_OK


def cmd_eval(args) -> int:
    from .fields import ScalarField
    from .metrics import Channel, evaluate_maps, report

    a = _read(args.a, "any")
    b = _read(args.b, "any")
    if type(a) is not type(b):
        raise InputError("--a and --b must have the same number of channels")
    if a.shape != b.shape:
        raise InputError(f"shape mismatch: {args.a} is {a.shape}, {args.b} is {b.shape}")
    if args.data_range is not None and not args.data_range > 0:
        raise InputError(f"--range must be > 0, got {args.data_range}")
    try:
        if isinstance(a, ScalarField):
            rng = args.data_range
            if rng is None:
                rng = float(b.data.max() - b.data.min()) or 1.0
            reports = [report(a.data, b.data, rng, Channel.INTENSITY)]
        elif args.data_range is not None:
            reports = [report(x.data, y.data, args.data_range, ch)
                       for x, y, ch in zip(a.channels(), b.channels(), (Channel.N, Channel.MUS, Channel.G))]
        else:
            reports = list(evaluate_maps(a, b).values())
    except ValueError as exc:
        raise InputError(str(exc)) from None
    for r in reports:
        print(f"{r.channel.value} psnr={r.psnr!r} ssim={r.ssim!r} mse={r.mse!r}")
    return EXIT_OK


def cmd_render(args) -> int:
    from .fields import ParameterMaps
    from .io import render_pgm

    obj = _read(args.inp, "any")
    field = getattr(obj, args.channel) if isinstance(obj, ParameterMaps) else obj
    render_pgm(field, args.out, log=args.log, floor_db=args.floor_db)
    print(f"wrote {args.out}")
    return EXIT_OK


COMMANDS = {
    "phantom": cmd_phantom,
    "forward": cmd_forward,
    "invert": cmd_invert,
    "eval": cmd_eval,
    "render": cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _configure_threads(args.threads)
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
