"""PSF stack directories: ``manifest.json`` plus one raw float32 file per kernel.

Kernel files are little-endian, row-major, named ``f{fov:03d}_t{tag:02d}.f32``;
their shapes, tags, energies and Strehl values live in the manifest.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .diffraction import PsfKernel, PsfStack
from .errors import InvalidArgument

FORMAT = "palsim-psf-stack/1"


def _tag_json(tag):
    return tag if isinstance(tag, str) else float(tag)


def write_stack(stack: PsfStack, out_dir, extra=None) -> dict:
    """Write ``stack`` under ``out_dir`` and return the manifest written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for fi, row in enumerate(stack.kernels):
        for ti, k in enumerate(row):
            name = f"f{fi:03d}_t{ti:02d}.f32"
            np.ascontiguousarray(k.data, dtype="<f4").tofile(out / name)
            entries.append({
                "fov_index": fi, "tag_index": ti, "file": name,
                "shape": list(k.data.shape), "support_px": int(k.support_px),
                "energy": float(k.energy),
                "meta": {key: v for key, v in k.meta.items() if isinstance(v, (int, float, str, bool))},
            })
    manifest = {
        "format": FORMAT,
        "fov_deg": stack.fov_samples.tolist(),
        "tags": [_tag_json(t) for t in stack.tags],
        "illumination": stack.illumination.tolist(),
        "spot_rms_um": None if stack.spot_rms_um is None else stack.spot_rms_um.tolist(),
        "meta": _jsonable(stack.meta),
        "kernels": entries,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest


def _jsonable(d):
    return json.loads(json.dumps(d, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


def load_stack(in_dir) -> PsfStack:
    src = Path(in_dir)
    path = src / "manifest.json"
    if not path.is_file():
        raise InvalidArgument(f"no PSF stack manifest in {src}")
    doc = json.loads(path.read_text())
    if doc.get("format") != FORMAT:
        raise InvalidArgument(f"unsupported stack format {doc.get('format')!r}")
    fov = doc["fov_deg"]
    tags = tuple(doc["tags"])
    rows = [[None] * len(tags) for _ in fov]
    for e in doc["kernels"]:
        data = np.fromfile(src / e["file"], dtype="<f4").astype(np.float32)
        shape = tuple(e["shape"])
        if data.size != shape[0] * shape[1]:
            raise InvalidArgument(f"kernel file {e['file']} has the wrong size")
        fi, ti = e["fov_index"], e["tag_index"]
        rows[fi][ti] = PsfKernel(data.reshape(shape), float(fov[fi]), tags[ti], e["energy"], e["meta"])
    if any(k is None for row in rows for k in row):
        raise InvalidArgument("stack manifest is missing kernels")
    return PsfStack(rows, fov, tags, doc["illumination"], doc.get("spot_rms_um"), doc.get("meta", {}))
