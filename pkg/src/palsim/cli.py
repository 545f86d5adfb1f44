"""Command-line interface.

Subcommands wrap library calls only: ``psf build``, ``psf inspect``,
``degrade``, ``unfold``, ``dataset generate``, ``metrics report`` and
``mtf edge|psf|limit``. Exit codes: 0 success, 1 runtime failure, 2 usage
error. Progress goes to stderr; ``--json`` prints a machine-readable summary
on stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import PalsimError

log = logging.getLogger("palsim")


class UsageError(Exception):
    pass


def _exists(path, what="file"):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {path}")
    return p


def _prescription(args):
    from .prescription import ENV_PRESCRIPTION, load_prescription

    ref = args.prescription or os.environ.get(ENV_PRESCRIPTION) or "default"
    if ref != "default":
        _exists(ref, "prescription")
    return load_prescription(ref)


def _roi(text):
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("ROI must be row0,row1,col0,col1")
    return tuple(parts)


def _size(text):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("size must be HxW, e.g. 288x1504") from exc
    return h, w


# ------------------------------------------------------------ commands

def cmd_psf_build(args):
    from . import stackio, zernike
    from .diffraction import build_stack, spectral_to_rgb

    pr = _prescription(args)
    if args.grid_size:
        from dataclasses import replace

        pr = replace(pr, grid_size=args.grid_size)
    field = zernike.perturb(pr.zernike, args.perturb, args.seed) if args.perturb else pr.zernike
    _err(f"building {len(pr.fov_samples)} x {len(pr.wavelength_samples)} PSFs with {args.jobs} job(s)")
    spectral = build_stack(pr, field, jobs=args.jobs)
    out = Path(args.out)
    man = stackio.write_stack(spectral, out)
    rgb = spectral_to_rgb(spectral, pr.sensor_response)
    stackio.write_stack(rgb, out / "rgb")
    return {"out": str(out), "n_fov": spectral.n_fov, "n_wavelengths": spectral.n_tags,
            "n_kernels": len(man["kernels"]), "rgb": str(out / "rgb")}


def _open_stack(path):
    from . import stackio

    p = _exists(path, "stack directory")
    stack = stackio.load_stack(p)
    if stack.meta.get("kind") == "spectral" and (p / "rgb" / "manifest.json").is_file():
        stack = stackio.load_stack(p / "rgb")
    return stack


def cmd_psf_inspect(args):
    from . import stackio

    stack = stackio.load_stack(_exists(args.stack, "stack directory"))
    sup = stack.supports()
    energy = np.array([[k.energy for k in row] for row in stack.kernels])
    strehl = np.array([[k.meta.get("strehl", np.nan) for k in row] for row in stack.kernels])
    summary = {"kind": stack.meta.get("kind"), "n_fov": stack.n_fov, "n_tags": stack.n_tags,
               "fov_range_deg": [float(stack.fov_samples[0]), float(stack.fov_samples[-1])],
               "support_px": [int(sup.min()), int(sup.max())],
               "energy": [float(energy.min()), float(energy.max())],
               "strehl": [float(np.nanmin(strehl)), float(np.nanmax(strehl))]}
    if not args.json:
        for k, v in summary.items():
            print(f"{k}: {v}")
    return summary


def cmd_degrade(args):
    from dataclasses import replace

    from .degrade import DegradationRecipe, degrade_image
    from .image import read_png, write_png

    clean = read_png(_exists(args.input, "input image"))
    recipe = DegradationRecipe.load(_exists(args.recipe, "recipe"))
    stack = _open_stack(args.stack)
    if args.seed is not None:
        recipe = replace(recipe, noise_seed=args.seed)
    pr = None
    if recipe.scale_profile is None and recipe.prescription:
        from .prescription import load_prescription

        ref = recipe.prescription
        if ref != "default" and not Path(ref).is_absolute():
            ref = str(Path(args.recipe).parent / ref)
        pr = load_prescription(ref)
    if clean.data.shape[2] == 1:
        clean = clean.with_data(np.repeat(clean.data, 3, axis=2))
    out, info = degrade_image(clean, recipe, stack, pr)
    write_png(out, args.out)
    if args.out16:
        write_png(out, args.out16, bits=16)
    if args.phys:
        info.write(args.phys)
    return {"out": args.out, "shape": list(out.shape), "noise_seed": recipe.noise_seed}


def cmd_unfold(args):
    from .image import read_png, write_png
    from .projection import CameraModel, unfold_annular

    src = read_png(_exists(args.input, "input image"), geometry="annular")
    model = CameraModel.load(_exists(args.camera, "camera model")) if args.camera else _prescription(args).camera
    out = unfold_annular(src, model, args.size)
    write_png(out, args.out)
    return {"out": args.out, "shape": list(out.shape), "out_of_bounds": out.meta["out_of_bounds"]}


def cmd_dataset_generate(args):
    from .dataset import DatasetSpec, failure_rate, generate

    if args.spec:
        spec = DatasetSpec.load(_exists(args.spec, "dataset spec"))
        if args.out:
            spec.output_dir = args.out
    else:
        if not (args.source and args.out):
            raise UsageError("--source and --out are required without --spec")
        spec = DatasetSpec(args.source, args.out)
    _exists(spec.source_dir, "source directory")
    if args.seed is not None:
        spec.master_seed = args.seed
    if args.n_train is not None:
        spec.n_train = args.n_train
    if args.n_val is not None:
        spec.n_val = args.n_val
    if args.prescription:
        spec.prescription = args.prescription
    elif os.environ.get("PALSIM_PRESCRIPTION") and not args.spec:
        spec.prescription = os.environ["PALSIM_PRESCRIPTION"]
    spec.__post_init__()
    man = generate(spec, jobs=args.jobs, progress=_err)
    rate = failure_rate(man)
    summary = dict(man["summary"], out=spec.output_dir, failure_rate=rate)
    if rate > 0.01:
        raise PalsimError(f"{man['summary']['failed']} of {man['summary']['items']} items failed")
    return summary


def cmd_metrics_report(args):
    from .metrics import report_pairs

    rows = report_pairs(_exists(args.pairs, "pairs directory"), args.out, args.curves,
                        args.roi)
    return {"out": args.out, "pairs": len(rows)}


def cmd_mtf(args):
    from . import metrics

    if args.mode == "edge":
        from .image import read_png

        img = read_png(_exists(args.input, "input image"))
        curve = metrics.mtf_slanted_edge(img, args.roi, args.angle, max_frequency=args.max_frequency)
    elif args.mode == "psf":
        stack = _open_stack(args.stack)
        curves = metrics.mtf_from_psf(stack.kernel(args.fov_index, args.tag_index))
        curve = curves[args.axis]
    else:
        curve = metrics.diffraction_limit_mtf(args.D, args.wavelength, args.distance, args.pitch,
                                              max_frequency=args.max_frequency)
    if args.out:
        curve.write_csv(args.out)
    result = {"mode": args.mode, "mtf50_cyc_per_px": metrics.mtf50(curve), "points": curve.frequencies.size}
    if not args.json:
        print(f"MTF50 = {result['mtf50_cyc_per_px']:.4f} cy/px")
    return result


# ------------------------------------------------------------ parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="palsim", description="PAL aberration simulation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    psf = sub.add_parser("psf", help="PSF stack synthesis and inspection")
    psf_sub = psf.add_subparsers(dest="psf_command", required=True)
    b = psf_sub.add_parser("build", parents=[common], help="synthesize a PSF stack")
    b.add_argument("--prescription", help="prescription JSON (default: $PALSIM_PRESCRIPTION or built-in)")
    b.add_argument("--out", required=True)
    b.add_argument("--grid-size", type=int)
    b.add_argument("--perturb", type=float, default=0.0, help="coefficient perturbation fraction")
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_psf_build)
    i = psf_sub.add_parser("inspect", parents=[common], help="summarize a stack directory")
    i.add_argument("--stack", required=True)
    i.set_defaults(func=cmd_psf_inspect)

    d = sub.add_parser("degrade", parents=[common], help="degrade one image")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--recipe", required=True)
    d.add_argument("--stack", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--out16", help="also write a 16-bit PNG")
    d.add_argument("--phys", help="physical-information map (.raw plus .json sidecar)")
    d.add_argument("--seed", type=int, help="override the recipe's noise seed")
    d.set_defaults(func=cmd_degrade)

    u = sub.add_parser("unfold", parents=[common], help="unfold an annular image")
    u.add_argument("--in", dest="input", required=True)
    u.add_argument("--out", required=True)
    src = u.add_mutually_exclusive_group()
    src.add_argument("--camera", help="camera-model JSON")
    src.add_argument("--prescription")
    u.add_argument("--size", type=_size, default=(288, 1504))
    u.set_defaults(func=cmd_unfold)

    ds = sub.add_parser("dataset", help="paired dataset generation")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    g = ds_sub.add_parser("generate", parents=[common])
    g.add_argument("--spec", help="dataset spec JSON")
    g.add_argument("--source")
    g.add_argument("--out")
    g.add_argument("--prescription")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--n-train", type=int)
    g.add_argument("--n-val", type=int)
    g.set_defaults(func=cmd_dataset_generate)

    m = sub.add_parser("metrics", help="image-quality reports")
    m_sub = m.add_subparsers(dest="metrics_command", required=True)
    r = m_sub.add_parser("report", parents=[common])
    r.add_argument("--pairs", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--curves", help="directory for per-pair MTF curve CSVs")
    r.add_argument("--roi", type=_roi)
    r.set_defaults(func=cmd_metrics_report)

    t = sub.add_parser("mtf", help="MTF curves")
    t_sub = t.add_subparsers(dest="mode", required=True)
    e = t_sub.add_parser("edge", parents=[common])
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--roi", type=_roi)
    e.add_argument("--angle", type=float, help="expected edge angle from vertical (deg)")
    e.add_argument("--max-frequency", type=float, default=0.5)
    e.add_argument("--out")
    k = t_sub.add_parser("psf", parents=[common])
    k.add_argument("--stack", required=True)
    k.add_argument("--fov-index", type=int, default=0)
    k.add_argument("--tag-index", type=int, default=0)
    k.add_argument("--axis", choices=("sagittal", "tangential"), default="sagittal")
    k.add_argument("--out")
    lim = t_sub.add_parser("limit", parents=[common])
    lim.add_argument("--D", type=float, required=True, help="pupil diameter (mm)")
    lim.add_argument("--wavelength", type=float, default=550.0, help="nm")
    lim.add_argument("--distance", type=float, required=True, help="pupil-to-image distance (mm)")
    lim.add_argument("--pitch", type=float, required=True, help="pixel pitch (um)")
    lim.add_argument("--max-frequency", type=float, default=0.5)
    lim.add_argument("--out")
    for sp in (e, k, lim):
        sp.set_defaults(func=cmd_mtf)
    return p


def _err(msg):
    print(msg, file=sys.stderr)


def _chain(exc):
    parts = []
    while exc is not None:
        parts.append(f"{type(exc).__name__}: {exc}")
        exc = exc.__cause__ or exc.__context__
    return " <- ".join(parts)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        result = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _err(f"palsim: error: {exc}")
        return 2
    except (PalsimError, OSError, ValueError, KeyError) as exc:
        _err(f"palsim: error: {_chain(exc)}")
        return 1
    if args.json:
        print(json.dumps(result, default=str))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
