"""Fringe Zernike polynomials on a sampled circular pupil.

Terms follow the 37-term Fringe ordering used by lens-design software
(piston, tilt x/y, defocus, astigmatism, coma, spherical, ...) with
unnormalized radial polynomials, so a coefficient of 1 wave on defocus means
``W = 2*rho**2 - 1`` waves. See ``docs/fringe_terms.md`` for the full table.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, PrescriptionIncomplete

N_TERMS = 37


def _fringe_table():
    table = []
    for k in range(6):
        for am in range(k, -1, -1):
            n = 2 * k - am
            table.append((n, am))
            if am:
                table.append((n, -am))
    table.append((12, 0))
    return tuple(table)


#: (n, m) per Fringe index 1..37; m < 0 selects the sine term.
FRINGE_NM = _fringe_table()


def fringe_nm(j: int) -> tuple[int, int]:
    """Return the radial order and signed azimuthal frequency of Fringe term j (1-based)."""
    if not 1 <= j <= N_TERMS:
        raise InvalidArgument(f"Fringe index must be in 1..{N_TERMS}, got {j}")
    return FRINGE_NM[j - 1]


def radial_poly(n: int, m: int, rho):
    """Unnormalized Zernike radial polynomial R_n^|m|(rho)."""
    m = abs(m)
    out = np.zeros_like(np.asarray(rho, dtype=float))
    for k in range((n - m) // 2 + 1):
        c = (-1) ** k * math.factorial(n - k) / (
            math.factorial(k)
            * math.factorial((n + m) // 2 - k)
            * math.factorial((n - m) // 2 - k)
        )
        out = out + c * rho ** (n - 2 * k)
    return out


def fringe_term(j: int, rho, theta):
    """Evaluate Fringe term j at polar coordinates (no aperture mask)."""
    n, m = fringe_nm(j)
    r = radial_poly(n, m, rho)
    if m > 0:
        return r * np.cos(m * theta)
    if m < 0:
        return r * np.sin(-m * theta)
    return r


@dataclass(frozen=True)
class PupilGrid:
    """Square sampling of the exit pupil.

    Sample centers sit at ``(q + 0.5 - n/2) / (n/2)`` in normalized units so
    the unit disk inscribes the grid; ``physical_diameter`` is D in mm.
    """

    n: int = 512
    physical_diameter: float = 1.0

    def __post_init__(self):
        n = self.n
        if n < 32 or n & (n - 1):
            raise InvalidArgument(f"grid size must be a power of two >= 32, got {n}")
        if not self.physical_diameter > 0:
            raise InvalidArgument("pupil diameter must be positive")

    @property
    def spacing(self) -> float:
        """Pupil-plane sample spacing in mm."""
        return self.physical_diameter / self.n

    def coords(self):
        """Normalized (x, y) sample coordinates, each shaped (n, n)."""
        return _coords(self.n)

    def polar(self):
        x, y = self.coords()
        return np.hypot(x, y), np.arctan2(y, x)

    @property
    def mask(self) -> np.ndarray:
        return _mask(self.n)


@lru_cache(maxsize=8)
def _coords(n):
    a = (np.arange(n) + 0.5 - n / 2) / (n / 2)
    x, y = np.meshgrid(a, a)
    x.setflags(write=False)
    y.setflags(write=False)
    return x, y


@lru_cache(maxsize=8)
def _mask(n):
    x, y = _coords(n)
    m = (x * x + y * y) <= 1.0
    m.setflags(write=False)
    return m


def _check_terms(n_terms):
    if not 1 <= n_terms <= N_TERMS:
        raise InvalidArgument(f"n_terms must be in 1..{N_TERMS}, got {n_terms}")


def eval_basis(grid: PupilGrid, n_terms: int = N_TERMS) -> np.ndarray:
    """Stack of the first ``n_terms`` Fringe maps, zero outside the unit disk.

    Returns:
        Array shaped ``(n_terms, grid.n, grid.n)``.
    """
    _check_terms(n_terms)
    out = np.zeros((n_terms, grid.n, grid.n))
    out[:, grid.mask] = disk_basis(grid.n, n_terms)
    return out


@lru_cache(maxsize=4)
def disk_basis(n: int, n_terms: int = N_TERMS) -> np.ndarray:
    """Basis values restricted to in-disk samples, shaped ``(n_terms, n_inside)``.

    Cached per grid size; the stack build reuses it for every cell.
    """
    _check_terms(n_terms)
    x, y = _coords(n)
    m = _mask(n)
    rho = np.hypot(x[m], y[m])
    theta = np.arctan2(y[m], x[m])
    vals = np.stack([fringe_term(j, rho, theta) for j in range(1, n_terms + 1)])
    vals.setflags(write=False)
    return vals


@dataclass(frozen=True, eq=False)
class ZernikeField:
    """Fringe coefficient table C[fov, wavelength, term] in waves."""

    coeffs: np.ndarray
    fov_samples: np.ndarray
    wavelength_samples: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        fov = np.array(self.fov_samples, dtype=float)
        wl = np.array(self.wavelength_samples, dtype=float)
        if c.ndim != 3 or c.shape[2] != N_TERMS:
            raise InvalidArgument(f"coefficients must be shaped (fov, wavelength, {N_TERMS}), got {c.shape}")
        if c.shape[:2] != (fov.size, wl.size):
            raise InvalidArgument("coefficient table does not match the sample axes")
        if np.any(np.diff(fov) <= 0) or np.any(np.diff(wl) <= 0):
            raise InvalidArgument("fov and wavelength samples must be strictly increasing")
        if not np.all(np.isfinite(c)):
            raise InvalidArgument("non-finite Zernike coefficient")
        for a in (c, fov, wl):
            a.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "fov_samples", fov)
        object.__setattr__(self, "wavelength_samples", wl)

    @property
    def shape(self):
        return self.coeffs.shape[:2]

    def cell(self, fov_index: int, wavelength_index: int) -> np.ndarray:
        nf, nw = self.shape
        if not (0 <= fov_index < nf and 0 <= wavelength_index < nw):
            raise InvalidArgument(
                f"cell ({fov_index}, {wavelength_index}) outside field of shape {(nf, nw)}"
            )
        return self.coeffs[fov_index, wavelength_index]

    @classmethod
    def zeros(cls, fov_samples, wavelength_samples):
        return cls(np.zeros((len(fov_samples), len(wavelength_samples), N_TERMS)),
                   fov_samples, wavelength_samples)

    def to_records(self):
        recs = []
        for i, f in enumerate(self.fov_samples):
            for k, w in enumerate(self.wavelength_samples):
                recs.append({"fov_deg": float(f), "wavelength_nm": float(w),
                             "coeffs": [float(v) for v in self.coeffs[i, k]]})
        return recs


def wavefront(field: ZernikeField, fov_index: int, wavelength_index: int,
              grid: PupilGrid) -> np.ndarray:
    """Wave aberration map in waves: sum of C_k * Z_k on the disk, zero outside."""
    c = field.cell(fov_index, wavelength_index)
    return coeffs_to_map(c, grid)


def coeffs_to_map(coeffs, grid: PupilGrid) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    _check_terms(c.size)
    out = np.zeros((grid.n, grid.n))
    out[grid.mask] = c @ disk_basis(grid.n, c.size)
    return out


def perturb(field: ZernikeField, fraction: float, seed, per_wavelength: bool = False) -> ZernikeField:
    """Scale every coefficient by ``1 + r`` with r ~ U[-fraction, fraction].

    One r is drawn per (fov, term) and shared across the wavelengths of that
    FoV; ``per_wavelength=True`` draws an independent r per cell instead.
    """
    if fraction < 0:
        raise InvalidArgument("perturbation fraction must be non-negative")
    meta = dict(field.meta, perturb_fraction=float(fraction), perturb_seed=seed,
                perturb_per_wavelength=bool(per_wavelength))
    if fraction == 0:
        return ZernikeField(field.coeffs.copy(), field.fov_samples, field.wavelength_samples, meta)
    rng = np.random.default_rng(seed)
    nf, nw = field.shape
    if per_wavelength:
        r = rng.uniform(-fraction, fraction, size=(nf, nw, N_TERMS))
    else:
        r = rng.uniform(-fraction, fraction, size=(nf, 1, N_TERMS))
    return ZernikeField((1.0 + r) * field.coeffs, field.fov_samples, field.wavelength_samples, meta)


# ---------------------------------------------------------------- ingestion

def field_from_records(records, fov_samples=None, wavelength_samples=None) -> ZernikeField:
    """Assemble a field from ``{fov_deg, wavelength_nm, coeffs}`` records.

    When the sample axes are given, every (fov, wavelength) pair must be
    present; otherwise the axes are the sorted unique values in the records.
    """
    cells = {}
    for rec in records:
        key = (round(float(rec["fov_deg"]), 6), round(float(rec["wavelength_nm"]), 6))
        c = [float(v) for v in rec["coeffs"]]
        if len(c) != N_TERMS:
            raise InvalidArgument(f"cell {key} has {len(c)} coefficients, expected {N_TERMS}")
        cells[key] = c
    if fov_samples is None:
        fov_samples = sorted({k[0] for k in cells})
    if wavelength_samples is None:
        wavelength_samples = sorted({k[1] for k in cells})
    coeffs = np.empty((len(fov_samples), len(wavelength_samples), N_TERMS))
    for i, f in enumerate(fov_samples):
        for k, w in enumerate(wavelength_samples):
            key = (round(float(f), 6), round(float(w), 6))
            if key not in cells:
                raise PrescriptionIncomplete(f"missing Zernike cell fov={f} deg, wavelength={w} nm")
            coeffs[i, k] = cells[key]
    return ZernikeField(coeffs, fov_samples, wavelength_samples)


def load_field(path, fov_samples=None, wavelength_samples=None) -> ZernikeField:
    """Read a coefficient table from JSON (``cells`` records) or CSV (long format)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return field_from_records(_read_csv_records(path), fov_samples, wavelength_samples)
    doc = json.loads(path.read_text())
    return field_from_json(doc, fov_samples, wavelength_samples)


def field_from_json(doc, fov_samples=None, wavelength_samples=None) -> ZernikeField:
    if isinstance(doc, dict):
        conv = doc.get("convention", "fringe").lower()
        if conv != "fringe":
            raise InvalidArgument(f"unsupported Zernike convention {conv!r}; only 'fringe' is implemented")
        records = doc["cells"]
    else:
        records = doc
    return field_from_records(records, fov_samples, wavelength_samples)


def field_to_json(field: ZernikeField) -> dict:
    return {"convention": "fringe", "units": "waves", "terms": N_TERMS, "cells": field.to_records()}


def _read_csv_records(path):
    cells = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (float(row["fov_deg"]), float(row["wavelength_nm"]))
            term = int(row["term"])
            if not 1 <= term <= N_TERMS:
                raise InvalidArgument(f"term index {term} out of range in {path}")
            cells.setdefault(key, [None] * N_TERMS)[term - 1] = float(row["value"])
    records = []
    for (f, w), c in cells.items():
        if any(v is None for v in c):
            raise PrescriptionIncomplete(f"CSV cell fov={f} wavelength={w} lacks some of the {N_TERMS} terms")
        records.append({"fov_deg": f, "wavelength_nm": w, "coeffs": c})
    return records


def write_field_csv(field: ZernikeField, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fov_deg", "wavelength_nm", "term", "value"])
        for i, f in enumerate(field.fov_samples):
            for k, wl in enumerate(field.wavelength_samples):
                for j in range(N_TERMS):
                    w.writerow([repr(float(f)), repr(float(wl)), j + 1, repr(float(field.coeffs[i, k, j]))])
