"""Command-line interface.

Subcommands mirror the pipeline stages: profile, phantom, sim, das,
correct, metrics, dataset, train-toy, export-bmode. Exit codes: 0 on
success, 2 for validation errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from .aberration import AberrationProfile, ProfileSpec, generate_profile
from .arrayio import read_pgm, write_pgm
from .beamform import das
from .beamsum import BeamsumConfig, correct_beamsum
from .bmode import envelope, log_compress
from .errors import NumericalError, ValidationError
from .fxpf import FxpfConfig, correct_fxpf
from .phantom import (
    EchoRegionSpec,
    apply_region,
    contrast_test_phantom,
    resolution_test_phantom,
    uniform_speckle,
)
from .probe import ImagingGrid, TransducerConfig, default_l11_5v, default_pulse, make_grid
from .toytrain import SmallConvNet, TrainSpec, train_noise2noise
from .wavesim import FsaData, SimOptions, simulate_fsa, synthesize_planewave


def _load_config(path: str | None) -> TransducerConfig:
    if path is None:
        return default_l11_5v()
    return TransducerConfig.from_json(Path(path).read_text())


def _load_grid(args, cfg: TransducerConfig) -> ImagingGrid:
    if getattr(args, "grid", None):
        return ImagingGrid.from_dict(json.loads(Path(args.grid).read_text()))
    return make_grid(cfg, args.columns, args.lateral_span, args.z_start, args.z_stop)


def _add_grid_args(p: argparse.ArgumentParser):
    p.add_argument("--grid", help="JSON grid file (x0/dx/nx/z0/dz/nz)")
    p.add_argument("--columns", type=int, default=384)
    p.add_argument("--lateral-span", dest="lateral_span", type=float, default=45.0)
    p.add_argument("--z-start", dest="z_start", type=float, default=10.0)
    p.add_argument("--z-stop", dest="z_stop", type=float, default=50.0)


def _load_rx_profile(arg: str | None, cfg: TransducerConfig) -> AberrationProfile | None:
    if arg is None or arg == "zero":
        return None
    return ds.load_profile(arg)


def _save_grid(path, grid: ImagingGrid):
    Path(path).write_text(json.dumps(grid.to_dict(), indent=2) + "\n")


# ------------------------------------------------------------- subcommands

def _cmd_profile_gen(args) -> int:
    cfg = _load_config(args.config)
    prof = generate_profile(
        ProfileSpec(args.strength, args.corr_len, args.seed), cfg
    )
    ds.save_profile(args.out, prof)
    print(f"wrote {args.out}")
    return 0


def _cmd_phantom(args) -> int:
    cfg = _load_config(args.config)
    pulse = default_pulse(cfg, 1)
    extent = tuple(args.extent)
    if args.kind == "speckle":
        ph = uniform_speckle(extent, args.density, cfg, pulse, args.seed)
    elif args.kind == "contrast":
        ph = contrast_test_phantom(cfg, args.seed, density_per_cell=args.density,
                                   extent=extent)
    elif args.kind == "resolution":
        ph = resolution_test_phantom(cfg, args.seed)
    else:  # from-template
        if not args.template:
            raise ValidationError("from-template needs --template image.pgm")
        ph = uniform_speckle(extent, args.density, cfg, pulse, args.seed)
        spec = EchoRegionSpec("template_image", read_pgm(args.template))
        ph = apply_region(ph, spec, args.seed + 1)
    ds.save_phantom(args.out, ph)
    print(f"wrote {args.out}.bin ({ph.count} scatterers)")
    return 0


def _cmd_sim_fsa(args) -> int:
    cfg = _load_config(args.config)
    ph = ds.load_phantom(args.phantom)
    fsa = simulate_fsa(ph, cfg, options=SimOptions(oversample=args.oversample))
    from .arrayio import save_arrays

    save_arrays(
        args.out,
        {"samples": fsa.samples},
        meta={
            "kind": "fsa",
            "axis_order": ["tx", "rx", "time"],
            "t0_us": fsa.t0,
            "sample_rate_mhz": fsa.sample_rate,
            "margin_us": fsa.margin_us,
        },
    )
    print(f"wrote {args.out}.bin {fsa.samples.shape}")
    return 0


def _load_fsa(stem) -> FsaData:
    from .arrayio import load_arrays

    arrays, meta = load_arrays(stem)
    return FsaData(arrays["samples"], meta["t0_us"], meta["sample_rate_mhz"],
                   meta["margin_us"])


def _cmd_sim_pw(args) -> int:
    fsa = _load_fsa(args.fsa)
    profile = _load_rx_profile(args.profile, None)
    chan = synthesize_planewave(fsa, profile)
    ds.save_channel(args.out, chan)
    print(f"wrote {args.out}.bin {chan.samples.shape}")
    return 0


def _cmd_das(args) -> int:
    cfg = _load_config(args.config)
    chan = ds.load_channel(args.channel)
    grid = _load_grid(args, cfg)
    if args.fnum is not None:
        cfg = TransducerConfig(**{**json.loads(cfg.to_json()), "f_number": args.fnum})
    image = das(chan, cfg, grid, _load_rx_profile(args.rx_profile, cfg),
                args.apodization)
    ds.save_rf_image(args.out, image)
    print(f"wrote {args.out}.bin {image.samples.shape}")
    return 0


def _cmd_correct(args) -> int:
    cfg = _load_config(args.config)
    chan = ds.load_channel(args.channel)
    grid = _load_grid(args, cfg)
    if args.method == "beamsum":
        bs = BeamsumConfig(adjacent_average_n=args.n, max_lag=args.max_lag)
        image, estimate = correct_beamsum(chan, cfg, grid, bs)
        ds.save_profile(str(args.out) + "_profile.json", estimate)
    else:
        fx = FxpfConfig(ar_order=args.order, iterations=args.iters,
                        stability_factor=args.stability,
                        kernel_wavelengths=args.kernel_wl)
        image = correct_fxpf(chan, cfg, grid, fx)
    ds.save_rf_image(args.out, image)
    print(f"wrote {args.out}.bin {image.samples.shape}")
    return 0


def _cmd_metrics(args) -> int:
    image = ds.load_rf_image(args.image)
    regions = json.loads(Path(args.regions).read_text())
    report = ds.frame_metrics(image, ds.parse_regions(regions))
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_dataset_build(args) -> int:
    plan = ds.ExperimentPlan.from_json(Path(args.plan).read_text())
    manifest = ds.build_dataset(plan, args.out)
    print(f"built {len(manifest.sets)} scenes in {args.out}")
    return 0


def _cmd_dataset_run(args) -> int:
    regions = json.loads(Path(args.regions).read_text())
    report = ds.run_pipeline(args.root, args.methods.split(","), regions)
    text = json.dumps(report, indent=2)
    Path(args.out).write_text(text + "\n")
    ok = sum(1 for f in report["frames"] if "metrics" in f)
    print(f"wrote {args.out}: {ok}/{len(report['frames'])} frames evaluated")
    return 0


def _cmd_train_toy(args) -> int:
    root = Path(args.root)
    manifest = ds.load_manifest(root)
    target = next(s for s in manifest.sets if s["scene_id"] == args.scene) \
        if args.scene else manifest.sets[0]
    versions = [ds.load_rf_image(root / e["rf_file"]).samples
                for e in target["aberrated_refs"]]
    model = SmallConvNet(seed=args.seed)
    spec = TrainSpec(epochs=args.epochs, batch=args.batch, lr=args.lr, seed=args.seed)
    loss = args.loss.replace("-", "_")
    _, history = train_noise2noise(model, versions, spec, loss)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "alpha", "loss"])
        writer.writerows(history)
    print(f"wrote {args.out} ({len(history)} epochs, final loss {history[-1][2]:.6g})")
    return 0


def _cmd_export_bmode(args) -> int:
    image = ds.load_rf_image(args.image)
    bimg = log_compress(envelope(image), args.dynamic_range)
    gray = (bimg.db_values + args.dynamic_range) / args.dynamic_range * 255
    write_pgm(args.out, gray)
    sidecar = {
        "dynamic_range_db": args.dynamic_range,
        "max_db": 0.0,
        "grid": image.grid.to_dict(),
    }
    Path(str(args.out) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    print(f"wrote {args.out}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aberlab",
        description="Plane-wave ultrasound simulation, aberration and correction toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="transducer config JSON")

    p = sub.add_parser("profile", help="aberration profiles")
    psub = p.add_subparsers(dest="subcommand", required=True)
    g = psub.add_parser("gen", help="generate a random profile")
    common(g)
    g.add_argument("--strength", type=float, required=True, help="target RMS (ns)")
    g.add_argument("--corr-len", dest="corr_len", type=float, required=True,
                   help="target correlation length (mm)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_profile_gen)

    p = sub.add_parser("phantom", help="build scatterer phantoms")
    common(p)
    p.add_argument("kind", choices=["speckle", "contrast", "resolution", "from-template"])
    p.add_argument("--density", type=float, default=60.0)
    p.add_argument("--extent", type=float, nargs=3, default=[45.0, 40.0, 10.0],
                   metavar=("LATERAL", "AXIAL", "START_DEPTH"))
    p.add_argument("--template", help="PGM grayscale template")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("sim", help="wave simulation")
    ssub = p.add_subparsers(dest="subcommand", required=True)
    g = ssub.add_parser("fsa", help="full synthetic aperture scan")
    common(g)
    g.add_argument("--phantom", required=True)
    g.add_argument("--oversample", type=int, default=5)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_sim_fsa)
    g = ssub.add_parser("pw", help="synthesize a single plane wave")
    common(g)
    g.add_argument("--fsa", required=True)
    g.add_argument("--profile", default="zero", help="profile JSON or 'zero'")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_sim_pw)

    p = sub.add_parser("das", help="delay-and-sum beamforming")
    common(p)
    p.add_argument("--channel", required=True)
    p.add_argument("--rx-profile", dest="rx_profile", default="zero")
    p.add_argument("--fnum", type=float)
    p.add_argument("--apodization", choices=["rect", "hann"], default="rect")
    _add_grid_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_das)

    p = sub.add_parser("correct", help="aberration correction methods")
    common(p)
    p.add_argument("method", choices=["beamsum", "fxpf"])
    p.add_argument("--channel", required=True)
    p.add_argument("--n", type=int, default=4, help="adjacent channels averaged per side")
    p.add_argument("--max-lag", dest="max_lag", type=float, default=200.0)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--stability", type=float, default=0.01)
    p.add_argument("--kernel-wl", dest="kernel_wl", type=float, default=1.0)
    _add_grid_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_correct)

    p = sub.add_parser("metrics", help="image quality metrics")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--regions", required=True, help="regions JSON")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("dataset", help="dataset build and evaluation")
    dsub = p.add_subparsers(dest="subcommand", required=True)
    g = dsub.add_parser("build")
    common(g)
    g.add_argument("--plan", required=True, help="experiment plan JSON")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_dataset_build)
    g = dsub.add_parser("run")
    common(g)
    g.add_argument("--root", required=True, help="dataset directory")
    g.add_argument("--methods", default="das")
    g.add_argument("--regions", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_dataset_run)

    p = sub.add_parser("train-toy", help="toy aberration-to-aberration training")
    common(p)
    p.add_argument("--root", required=True, help="dataset directory")
    p.add_argument("--scene", help="scene id (defaults to the first)")
    p.add_argument("--loss", default="adaptive-mixed",
                   choices=["mse-rf", "mse-bmode", "adaptive-mixed"])
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--out", required=True, help="history CSV")
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("export-bmode", help="write an 8-bit PGM B-mode image")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--dynamic-range", dest="dynamic_range", type=float, default=50.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_bmode)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
