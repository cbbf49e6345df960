"""Paired (simulated B-scan, ground-truth maps) dataset generation."""
from __future__ import annotations

import dataclasses
from pathlib import Path

from .io import write_manifest, write_octmap
from .montecarlo import McConfig, mc_bscan
from .phantom import PhantomScene, format_scene, scene_to_maps
from .rng import derive_seed
from .speckle import SpeckleConfig, apply_speckle

MANIFEST_NAME = "manifest.jsonl"


def generate_dataset(scenes, mc: McConfig, out_dir, speckle: SpeckleConfig | None = None) -> list[dict]:
    """Simulate every scene and write its files plus ``manifest.jsonl``.

    The transport seed of each entry is derived from ``(mc.seed, scene.seed)``,
    so identical scenes with identical seeds give byte-identical B-scans.
    Returns the manifest records.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create output directory {out}: {exc.strerror}") from None
    records = []
    for k, scene in enumerate(scenes):
        if not isinstance(scene, PhantomScene):
            raise TypeError(f"entry {k} is not a PhantomScene")
        seed = derive_seed(mc.seed, "mc", scene.seed)
        bscan, audit = mc_bscan(scene, dataclasses.replace(mc, seed=seed))
        if speckle is not None:
            bscan = apply_speckle(bscan, dataclasses.replace(speckle, seed=derive_seed(speckle.seed, "speckle", scene.seed)))
        names = {
            "scene_file": f"scene_{k:04d}.ini",
            "bscan_file": f"bscan_{k:04d}.octm",
            "maps_file": f"maps_{k:04d}.octm",
        }
        _write_text(out / names["scene_file"], format_scene(scene))
        write_octmap(out / names["bscan_file"], bscan)
        write_octmap(out / names["maps_file"], scene_to_maps(scene))
        records.append(
            {
                "id": k,
                "seed": scene.seed,
                "mc_seed": seed,
                **names,
                "layers": [dataclasses.asdict(layer) for layer in scene.layers],
                "audit": dataclasses.asdict(audit),
            }
        )
    write_manifest(out / MANIFEST_NAME, records)
    return records


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None
