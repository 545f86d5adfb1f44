"""Paired-dataset generation under several perturbed aberration distributions.

Every clean source image is center-cropped to 1:2, area-downsampled to
512x1024 and degraded under each distribution. Train and validation
distributions are independent ±fraction perturbations of the prescription's
coefficients; the unperturbed "standard" distribution is kept as reference.

Layout::

    {out}/manifest.json
    {out}/prescription.json
    {out}/{dist_id}/psf_stack/...
    {out}/{dist_id}/{split}/{pair_id}/{gt.png, degraded.png, phys.raw, phys.json}

All randomness comes from ``numpy.random.SeedSequence`` keyed by the master
seed, the distribution index and the image index, so outputs do not depend on
the worker count or scheduling order.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import stackio, zernike
from ._resample import area_resize
from .degrade import DegradationRecipe, degrade_image
from .diffraction import _fov_kernels, build_stack, spectral_to_rgb
from .errors import InvalidArgument, SourceTooSmall
from .image import ImagePlane, read_png, to_uint8, write_png
from .isp import IspParams

log = logging.getLogger(__name__)

FORMAT = "palsim-dataset/1"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
TARGET_SIZE = (512, 1024)


@dataclass
class DatasetSpec:
    source_dir: str
    output_dir: str
    target_size: tuple = TARGET_SIZE
    n_train: int = 3
    n_val: int = 3
    fraction: float = 0.25
    master_seed: int = 0
    prescription: str = "default"
    noise_shot_range: tuple = (1e-4, 1e-3)
    noise_read_range: tuple = (1e-6, 1e-5)
    isp: dict = field(default_factory=lambda: IspParams().to_dict())
    blend_margin: int = 4
    fft_threshold: int = 15
    per_wavelength: bool = False
    strehl_wavelength_nm: float = 550.0
    write_16bit: bool = False

    def __post_init__(self):
        self.target_size = tuple(int(v) for v in self.target_size)
        if len(self.target_size) != 2 or min(self.target_size) <= 0:
            raise InvalidArgument("target size must be two positive integers")
        if self.n_train < 0 or self.n_val < 0 or self.n_train + self.n_val == 0:
            raise InvalidArgument("at least one distribution is required")
        if not 0 <= self.fraction < 1:
            raise InvalidArgument("perturbation fraction must lie in [0, 1)")
        if int(self.master_seed) < 0:
            raise InvalidArgument("master seed must be non-negative")
        for lo, hi in (self.noise_shot_range, self.noise_read_range):
            if not 0 <= lo <= hi:
                raise InvalidArgument("noise ranges must satisfy 0 <= low <= high")

    def to_dict(self):
        d = asdict(self)
        d["target_size"] = list(self.target_size)
        d["noise_shot_range"] = list(self.noise_shot_range)
        d["noise_read_range"] = list(self.noise_read_range)
        return d

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


# ------------------------------------------------------------ clean images

def crop_box(h, w, target=TARGET_SIZE):
    """Largest centered crop with the target aspect ratio: (top, left, height, width)."""
    th, tw = target
    if w * th >= h * tw:
        ch, cw = h, int(round(h * tw / th))
    else:
        ch, cw = int(round(w * th / tw)), w
    return (h - ch) // 2, (w - cw) // 2, ch, cw


def prepare_clean(src, target=TARGET_SIZE) -> ImagePlane:
    """Center-crop to the target aspect ratio, then area-downsample to ``target``.

    Grayscale input is replicated to three channels and flagged in ``meta``.

    Raises:
        SourceTooSmall: the crop is smaller than the target (no upscaling).
    """
    img = src if isinstance(src, ImagePlane) else ImagePlane(np.asarray(src, dtype=float))
    data = img.data
    meta = dict(img.meta)
    if data.shape[2] == 1:
        data = np.repeat(data, 3, axis=2)
        meta["grayscale_replicated"] = True
    h, w = data.shape[:2]
    top, left, ch, cw = crop_box(h, w, target)
    if ch < target[0] or cw < target[1]:
        raise SourceTooSmall(f"source {w}x{h} cannot yield {target[1]}x{target[0]} without upscaling")
    crop = data[top:top + ch, left:left + cw]
    meta["crop"] = [top, left, ch, cw]
    if (ch, cw) != tuple(target):
        crop = area_resize(crop, *target)
    return ImagePlane(np.clip(crop, 0.0, 1.0), "srgb", "perspective_unfolded", meta)


def list_sources(source_dir):
    """Source images per split; ``train``/``val`` subfolders split them, else all go to both."""
    root = Path(source_dir)
    if not root.is_dir():
        raise InvalidArgument(f"source directory {root} does not exist")

    def scan(d):
        return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)

    if (root / "train").is_dir() and (root / "val").is_dir():
        return {"train": scan(root / "train"), "val": scan(root / "val")}
    files = scan(root)
    return {"train": files, "val": files}


# ------------------------------------------------------------ seeds

def distribution_seeds(master_seed, n):
    """``n`` distinct perturbation seeds derived from the master seed."""
    seeds, k = [], 0
    while len(seeds) < n:
        s = int(np.random.SeedSequence([int(master_seed), 0, k]).generate_state(1)[0])
        k += 1
        if s not in seeds:
            seeds.append(s)
    return seeds


def item_draw(master_seed, dist_index, image_index, shot_range, read_range):
    """Noise parameters and noise seed of one (distribution, image) item."""
    rng = np.random.default_rng(np.random.SeedSequence([int(master_seed), 1, dist_index, image_index]))
    shot = float(rng.uniform(*shot_range))
    read = float(rng.uniform(*read_range))
    return shot, read, int(rng.integers(2 ** 32))


def strehl_curve(prescription, field_, wavelength_nm=550.0):
    """Per-FoV Strehl ratio at the sampled wavelength nearest ``wavelength_nm``."""
    wl = prescription.wavelength_samples
    k = int(np.argmin(np.abs(wl - wavelength_nm)))
    sup = prescription.supports()
    out = []
    for i, fov in enumerate(prescription.fov_samples):
        args = (field_.coeffs[i, k:k + 1], wl[k:k + 1], prescription.grid_size,
                prescription.pupil_diameter_mm, prescription.distance_mm,
                prescription.pixel_pitch_um, sup[i], float(fov), prescription.pad_factor)
        out.append(_fov_kernels(args)[0].meta["strehl"])
    return np.array(out), float(wl[k])


# ------------------------------------------------------------ items

_STACK_CACHE = {}


def _stack(path):
    key = str(path)
    if key not in _STACK_CACHE:
        _STACK_CACHE.clear()
        _STACK_CACHE[key] = stackio.load_stack(path)
    return _STACK_CACHE[key]


def _degrade_item(rec, root):
    root = Path(root)
    clean = prepare_clean(read_png(root / rec["source"] if not Path(rec["source"]).is_absolute()
                                   else rec["source"]), tuple(rec["target_size"]))
    gt = ImagePlane(to_uint8(clean.data) / 255.0, "srgb", "perspective_unfolded", clean.meta)
    recipe = DegradationRecipe.from_dict(rec["recipe"])
    stack = _stack(root / rec["stack"])
    degraded, info = degrade_image(gt, recipe, stack)
    return gt, degraded, info


def _run_item(job):
    rec, root, write_16bit = job
    out = dict(rec)
    try:
        gt, degraded, info = _degrade_item(rec, root)
        pair = Path(root) / rec["dir"]
        pair.mkdir(parents=True, exist_ok=True)
        write_png(gt, pair / "gt.png")
        write_png(degraded, pair / "degraded.png")
        if write_16bit:
            write_png(degraded, pair / "degraded16.png", bits=16)
        info.write(pair / "phys.raw", pair / "phys.json")
        out["status"] = "ok"
    except SourceTooSmall as exc:
        log.warning("skipping %s: %s", rec["source"], exc)
        out.update(status="skipped", error=str(exc))
    except Exception as exc:  # recorded per item; generation continues
        out.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return out


def _source_ref(path, root):
    path = Path(path).resolve()
    try:
        return str(path.relative_to(Path(root).resolve()))
    except ValueError:
        return str(path)


def generate(spec: DatasetSpec, prescription=None, jobs: int = 1, progress=None) -> dict:
    """Build stacks and degrade every source image under every distribution.

    Args:
        spec: dataset settings.
        prescription: overrides ``spec.prescription`` when given.
        jobs: worker processes for stack building and per-image work.
        progress: optional callable receiving one status line per step.

    Returns:
        The manifest, also written to ``{output_dir}/manifest.json``.
    """
    from .prescription import load_prescription

    say = progress or (lambda msg: None)
    pr = prescription if prescription is not None else load_prescription(spec.prescription)
    root = Path(spec.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    pr.save(root / "prescription.json")
    sources = list_sources(spec.source_dir)
    profile = pr.scale_profile()

    std_curve, strehl_wl = strehl_curve(pr, pr.zernike, spec.strehl_wavelength_nm)
    splits = ["train"] * spec.n_train + ["val"] * spec.n_val
    seeds = distribution_seeds(spec.master_seed, len(splits))
    counters = {"train": 0, "val": 0}
    dists, items = [], []
    for di, (split, seed) in enumerate(zip(splits, seeds)):
        dist_id = f"{split}_{counters[split]}"
        counters[split] += 1
        say(f"[{di + 1}/{len(splits)}] {dist_id}: building PSF stack")
        field_ = zernike.perturb(pr.zernike, spec.fraction, seed, spec.per_wavelength)
        stack = spectral_to_rgb(build_stack(pr, field_, jobs=jobs), pr.sensor_response)
        stack_dir = f"{dist_id}/psf_stack"
        stackio.write_stack(stack, root / stack_dir)
        curve, _ = strehl_curve(pr, field_, spec.strehl_wavelength_nm)
        dists.append({"id": dist_id, "split": split, "index": di, "seed": seed,
                      "fraction": spec.fraction, "per_wavelength": spec.per_wavelength,
                      "stack": stack_dir, "strehl_curve": curve.tolist()})
        for ii, src in enumerate(sources[split]):
            shot, read, nseed = item_draw(spec.master_seed, di, ii, spec.noise_shot_range,
                                          spec.noise_read_range)
            isp = IspParams.from_dict(spec.isp).with_noise(shot, read)
            recipe = DegradationRecipe(isp=isp, noise_seed=nseed, scale_profile=profile,
                                       blend_margin=spec.blend_margin,
                                       fft_threshold=spec.fft_threshold,
                                       prescription="prescription.json",
                                       perturbation_fraction=spec.fraction,
                                       perturbation_seed=seed,
                                       per_wavelength=spec.per_wavelength)
            items.append({"dist_id": dist_id, "split": split, "pair_id": src.stem,
                          "image_index": ii, "source": _source_ref(src, root),
                          "target_size": list(spec.target_size),
                          "dir": f"{dist_id}/{split}/{src.stem}", "stack": stack_dir,
                          "noise": {"shot": shot, "read": read, "seed": nseed},
                          "recipe": recipe.to_dict()})

    say(f"degrading {len(items)} items")
    jobs_list = [(rec, str(root), spec.write_16bit) for rec in items]
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            done = list(ex.map(_run_item, jobs_list))
    else:
        done = [_run_item(j) for j in jobs_list]
    n_failed = sum(r["status"] == "failed" for r in done)
    perturbed_max = max((max(d["strehl_curve"]) for d in dists), default=0.0)
    manifest = {
        "format": FORMAT,
        "spec": spec.to_dict(),
        "prescription": {"name": pr.name, "file": "prescription.json",
                         "n_fov": int(len(pr.fov_samples)),
                         "n_wavelengths": int(len(pr.wavelength_samples)),
                         "n_terms": zernike.N_TERMS},
        "fov_deg": pr.fov_samples.tolist(),
        "strehl_wavelength_nm": strehl_wl,
        "standard": {"id": "standard", "strehl_curve": std_curve.tolist()},
        "distributions": dists,
        "items": done,
        "summary": {"items": len(done), "failed": n_failed,
                    "skipped": sum(r["status"] == "skipped" for r in done),
                    "max_perturbed_strehl": perturbed_max},
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest


def failure_rate(manifest) -> float:
    n = manifest["summary"]["items"]
    return manifest["summary"]["failed"] / n if n else 0.0


def regenerate_pair(output_dir, dist_id, pair_id):
    """Recompute one pair from the manifest alone; returns (gt, degraded, info)."""
    root = Path(output_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    for rec in manifest["items"]:
        if rec["dist_id"] == dist_id and rec["pair_id"] == pair_id:
            return _degrade_item(rec, root)
    raise InvalidArgument(f"no item {pair_id!r} in distribution {dist_id!r}")
