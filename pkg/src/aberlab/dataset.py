"""Dataset construction, storage layout and end-to-end evaluation runs.

A dataset is a directory of scenes. Every scene holds the phantom, the
non-aberrated reference image, and K aberrated versions, each stored as a
beamformed RF image, the channel data it came from, and the profile used
for both transmit and receive aberration. A manifest written last (atomic
rename) indexes everything.

All randomness derives from the master seed through per-scene/per-version
seed sequences, so rebuilding a plan is byte-identical regardless of the
worker count (ABERLAB_WORKERS controls scene-level parallelism).
"""

from __future__ import annotations

import json
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .aberration import AberrationProfile, ProfileSpec, generate_profile
from .arrayio import load_arrays, save_arrays
from .beamform import RfImage, das
from .beamsum import BeamsumConfig, correct_beamsum
from .bmode import envelope
from .errors import ValidationError
from .fxpf import FxpfConfig, correct_fxpf
from .metrics import RegionSpec, contrast, fwhm_lateral, gcnr, speckle_snr
from .phantom import (
    DEFAULT_EXTENT,
    Phantom,
    contrast_test_phantom,
    resolution_test_phantom,
    uniform_speckle,
)
from .probe import ImagingGrid, TransducerConfig, default_l11_5v, default_pulse, make_grid
from .wavesim import ChannelData, SimOptions, simulate_fsa, synthesize_planewave

MANIFEST_NAME = "manifest.json"
METHODS = ("das", "beamsum", "fxpf")


# ---------------------------------------------------------------- object io

def save_phantom(stem, phantom: Phantom) -> None:
    save_arrays(
        stem,
        {"positions": phantom.positions, "amplitudes": phantom.amplitudes},
        meta={"kind": "phantom", **phantom.header_dict()},
    )


def load_phantom(stem) -> Phantom:
    arrays, meta = load_arrays(stem)
    return Phantom(
        arrays["positions"], arrays["amplitudes"],
        tuple(meta["extent_mm"]), meta.get("meta", {}),
    )


def save_channel(stem, channel: ChannelData) -> None:
    meta = {
        "kind": "channel",
        "axis_order": ["element", "time"],
        "t0_us": channel.t0,
        "sample_rate_mhz": channel.sample_rate,
        "margin_us": channel.margin_us,
    }
    save_arrays(stem, {"samples": channel.samples}, meta=meta)


def load_channel(stem) -> ChannelData:
    arrays, meta = load_arrays(stem)
    return ChannelData(
        arrays["samples"], meta["t0_us"], meta["sample_rate_mhz"], meta["margin_us"]
    )


def save_rf_image(stem, image: RfImage) -> None:
    meta = {
        "kind": "rf_image",
        "axis_order": ["axial", "lateral"],
        "grid": image.grid.to_dict(),
        "provenance": image.provenance,
    }
    save_arrays(stem, {"samples": image.samples}, meta=meta)


def load_rf_image(stem) -> RfImage:
    arrays, meta = load_arrays(stem)
    return RfImage(arrays["samples"], ImagingGrid.from_dict(meta["grid"]),
                   meta.get("provenance", {}))


def save_profile(path, profile: AberrationProfile) -> None:
    Path(path).write_text(profile.to_json() + "\n")


def load_profile(path) -> AberrationProfile:
    return AberrationProfile.from_json(Path(path).read_text())


# -------------------------------------------------------------------- plan

@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to build and evaluate a dataset deterministically."""

    scenes: int
    versions_per_scene: int
    master_seed: int = 0
    phantom_kind: str = "speckle"  # speckle | contrast | resolution
    density_per_cell: float = 60.0
    extent: tuple[float, float, float] = DEFAULT_EXTENT
    strength_range: tuple[float, float] = (20.0, 80.0)
    corr_range: tuple[float, float] = (4.0, 9.0)
    probe: TransducerConfig = field(default_factory=default_l11_5v)
    grid_columns: int = 384
    grid_lateral_span: float = 45.0
    grid_z: tuple[float, float] = (10.0, 50.0)
    grid_dz: float | None = None
    oversample: int = 5
    store_channels: bool = True
    methods: tuple[str, ...] = ("das",)
    regions: dict | None = None

    def __post_init__(self):
        if self.scenes < 1:
            raise ValidationError("scenes must be >= 1")
        if self.versions_per_scene < 2:
            raise ValidationError("training scenes need at least 2 versions")
        if self.phantom_kind not in ("speckle", "contrast", "resolution"):
            raise ValidationError(f"unknown phantom kind {self.phantom_kind!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ValidationError(f"unknown method {m!r}")

    def make_grid(self) -> ImagingGrid:
        return make_grid(
            self.probe, self.grid_columns, self.grid_lateral_span,
            self.grid_z[0], self.grid_z[1], self.grid_dz,
        )

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentPlan":
        d = json.loads(text)
        if "probe" in d and isinstance(d["probe"], dict):
            d["probe"] = TransducerConfig(**d["probe"])
        for key in ("extent", "strength_range", "corr_range", "grid_z", "methods"):
            if key in d and isinstance(d[key], list):
                d[key] = tuple(d[key])
        return cls(**d)


def _seed_int(*path: int) -> int:
    return int(np.random.SeedSequence(list(path)).generate_state(1)[0])


def _scene_phantom(plan: ExperimentPlan, scene_idx: int) -> Phantom:
    seed = _seed_int(plan.master_seed, scene_idx, 0)
    cfg = plan.probe
    if plan.phantom_kind == "contrast":
        return contrast_test_phantom(cfg, seed, density_per_cell=plan.density_per_cell,
                                     extent=plan.extent)
    if plan.phantom_kind == "resolution":
        return resolution_test_phantom(cfg, seed)
    pulse = default_pulse(cfg, 1)
    return uniform_speckle(plan.extent, plan.density_per_cell, cfg, pulse, seed)


def _version_profile(plan: ExperimentPlan, scene_idx: int, version: int) -> AberrationProfile:
    rng = np.random.default_rng(np.random.SeedSequence(
        [plan.master_seed, scene_idx, 1, version]))
    strength = rng.uniform(*plan.strength_range)
    corr = rng.uniform(*plan.corr_range)
    seed = int(rng.integers(2**31))
    return generate_profile(ProfileSpec(strength, corr, seed), plan.probe)


def _build_scene(args) -> dict:
    """Build one scene directory; returns its manifest fragment."""
    plan, out_dir, scene_idx = args
    out_dir = Path(out_dir)
    scene_id = f"scene_{scene_idx:04d}"
    scene_dir = out_dir / "scenes" / scene_id
    try:
        scene_dir.mkdir(parents=True, exist_ok=True)
        cfg = plan.probe
        grid = plan.make_grid()
        options = SimOptions(oversample=plan.oversample)
        phantom = _scene_phantom(plan, scene_idx)
        save_phantom(scene_dir / "phantom", phantom)

        fsa = simulate_fsa(phantom, cfg, options=options)
        clean = synthesize_planewave(fsa, None)
        save_rf_image(scene_dir / "nonaberrated", das(clean, cfg, grid))

        refs = []
        for v in range(plan.versions_per_scene):
            profile = _version_profile(plan, scene_idx, v)
            chan = synthesize_planewave(fsa, profile)
            image = das(chan, cfg, grid, rx_profile=profile)
            rf_ref = f"scenes/{scene_id}/v{v:03d}_rf"
            prof_ref = f"scenes/{scene_id}/v{v:03d}_profile.json"
            save_rf_image(out_dir / rf_ref, image)
            save_profile(out_dir / prof_ref, profile)
            entry = {"rf_file": rf_ref, "profile_file": prof_ref}
            if plan.store_channels:
                chan_ref = f"scenes/{scene_id}/v{v:03d}_chan"
                save_channel(out_dir / chan_ref, chan)
                entry["channel_file"] = chan_ref
            refs.append(entry)
        return {
            "scene_id": scene_id,
            "phantom_ref": f"scenes/{scene_id}/phantom",
            "non_aberrated_ref": f"scenes/{scene_id}/nonaberrated",
            "aberrated_refs": refs,
        }
    except Exception:
        shutil.rmtree(scene_dir, ignore_errors=True)
        raise


@dataclass(frozen=True)
class DatasetManifest:
    """Index of a built dataset."""

    probe: TransducerConfig
    grid: ImagingGrid
    sets: list[dict]
    format_version: int = 1

    def to_json(self) -> str:
        return json.dumps(
            {
                "format_version": self.format_version,
                "probe": asdict(self.probe),
                "grid": self.grid.to_dict(),
                "sets": self.sets,
            },
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        return cls(
            TransducerConfig(**d["probe"]),
            ImagingGrid.from_dict(d["grid"]),
            d["sets"],
            d["format_version"],
        )

    def validate(self, root) -> None:
        root = Path(root)
        counts = {len(s["aberrated_refs"]) for s in self.sets}
        if len(counts) > 1:
            raise ValidationError("scenes disagree on the number of versions")
        for s in self.sets:
            for ref in [s["phantom_ref"], s["non_aberrated_ref"]]:
                if not (root / ref).with_suffix(".json").exists():
                    raise ValidationError(f"missing file {ref}")
            for entry in s["aberrated_refs"]:
                if not (root / entry["rf_file"]).with_suffix(".json").exists():
                    raise ValidationError(f"missing file {entry['rf_file']}")
                if not (root / entry["profile_file"]).exists():
                    raise ValidationError(f"missing file {entry['profile_file']}")


def worker_count() -> int:
    return max(1, int(os.environ.get("ABERLAB_WORKERS", "1")))


def build_dataset(plan: ExperimentPlan, out_dir) -> DatasetManifest:
    """Build every scene of the plan and write the manifest last."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(plan, str(out_dir), i) for i in range(plan.scenes)]
    workers = worker_count()
    if workers > 1 and plan.scenes > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fragments = list(pool.map(_build_scene, jobs))
    else:
        fragments = [_build_scene(job) for job in jobs]
    manifest = DatasetManifest(plan.probe, plan.make_grid(), fragments)
    tmp = out_dir / (MANIFEST_NAME + ".tmp")
    tmp.write_text(manifest.to_json())
    os.replace(tmp, out_dir / MANIFEST_NAME)
    return manifest


def load_manifest(root) -> DatasetManifest:
    return DatasetManifest.from_json((Path(root) / MANIFEST_NAME).read_text())


# ------------------------------------------------------------------ report

def parse_regions(d: dict) -> dict:
    """Validate a metric-region description.

    Expected keys: targets (list of {center_mm, radius_mm, annulus_factors?}),
    snr_rect_mm (x0, x1, z0, z1), fwhm_points_mm, fwhm_span_mm.
    """
    targets = [
        RegionSpec(tuple(t["center_mm"]), t["radius_mm"],
                   tuple(t.get("annulus_factors", (1.1, 1.5))))
        for t in d.get("targets", [])
    ]
    return {
        "targets": targets,
        "snr_rect": tuple(d["snr_rect_mm"]) if "snr_rect_mm" in d else None,
        "fwhm_points": [tuple(p) for p in d.get("fwhm_points_mm", [])],
        "fwhm_span": float(d.get("fwhm_span_mm", 4.0)),
    }


def frame_metrics(image: RfImage, regions: dict) -> dict:
    """Metrics of one frame on the linear envelope."""
    env = envelope(image)
    out: dict = {}
    if regions["targets"]:
        out["contrast_db"] = [contrast(env, image.grid, r) for r in regions["targets"]]
        out["gcnr"] = [gcnr(env, image.grid, r) for r in regions["targets"]]
    if regions["snr_rect"] is not None:
        out["speckle_snr"] = speckle_snr(env, image.grid, regions["snr_rect"])
    if regions["fwhm_points"]:
        fwhms = []
        for p in regions["fwhm_points"]:
            try:
                fwhms.append(fwhm_lateral(env, image.grid, p, regions["fwhm_span"]))
            except Exception:
                fwhms.append(None)  # unmeasurable target, excluded from stats
        out["fwhm_mm"] = fwhms
    return out


def _frame_scalars(metrics: dict) -> dict:
    scalars = {}
    if "contrast_db" in metrics:
        scalars["contrast_db"] = float(np.mean(metrics["contrast_db"]))
    if "gcnr" in metrics:
        scalars["gcnr"] = float(np.mean(metrics["gcnr"]))
    if "speckle_snr" in metrics:
        scalars["speckle_snr"] = float(metrics["speckle_snr"])
    if "fwhm_mm" in metrics:
        vals = [v for v in metrics["fwhm_mm"] if v is not None]
        if vals:
            scalars["fwhm_mm"] = float(np.mean(vals))
    return scalars


def _corrected_image(method: str, root: Path, entry: dict,
                     manifest: DatasetManifest) -> RfImage:
    if method == "das":
        return load_rf_image(root / entry["rf_file"])
    if "channel_file" not in entry:
        raise ValidationError(f"{method} needs stored channel data")
    chan = load_channel(root / entry["channel_file"])
    if method == "beamsum":
        image, _ = correct_beamsum(chan, manifest.probe, manifest.grid, BeamsumConfig())
        return image
    if method == "fxpf":
        return correct_fxpf(chan, manifest.probe, manifest.grid, FxpfConfig())
    raise ValidationError(f"unknown method {method!r}")


def run_pipeline(root, methods, regions: dict) -> dict:
    """Evaluate correction methods over every aberrated frame of a dataset.

    Per-frame failures are recorded and the run continues. The report
    contains one entry per (frame, method) plus mean/median/quartile
    aggregates per method and metric.
    """
    root = Path(root)
    manifest = load_manifest(root)
    manifest.validate(root)
    parsed = parse_regions(regions)
    frames = []
    for s in manifest.sets:
        for v, entry in enumerate(s["aberrated_refs"]):
            for method in methods:
                record = {"scene_id": s["scene_id"], "version": v, "method": method}
                try:
                    image = _corrected_image(method, root, entry, manifest)
                    record["metrics"] = frame_metrics(image, parsed)
                except Exception as exc:  # noqa: BLE001 - recorded, run continues
                    record["error"] = str(exc)
                frames.append(record)

    aggregate: dict = {}
    for method in methods:
        per_metric: dict[str, list[float]] = {}
        for rec in frames:
            if rec["method"] != method or "metrics" not in rec:
                continue
            for key, val in _frame_scalars(rec["metrics"]).items():
                per_metric.setdefault(key, []).append(val)
        aggregate[method] = {
            key: {
                "mean": float(np.mean(vals)),
                "median": float(np.median(vals)),
                "q25": float(np.percentile(vals, 25)),
                "q75": float(np.percentile(vals, 75)),
                "count": len(vals),
            }
            for key, vals in per_metric.items()
        }
    return {"methods": list(methods), "frames": frames, "aggregate": aggregate}
