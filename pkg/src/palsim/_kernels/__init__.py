"""Hot-loop kernels with a compiled backend and a NumPy fallback.

The Cython extension is used when it imports; set ``PALSIM_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import _pykernels

if os.environ.get("PALSIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

remap_bilinear = _impl.remap_bilinear
convolve_rows = _impl.convolve_rows


def backends():
    """Map of every importable backend name to its module."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
