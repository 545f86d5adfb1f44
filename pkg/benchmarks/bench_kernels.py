"""Compare the compiled and NumPy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times the stripe convolution used by degradation (one 288x1504 plane, 101
stripes, 7x7 and 15x15 kernels) and the bilinear remap used by unfolding
(288x1504 output from a 1024x1280 annular frame), and checks that both
backends agree.
"""

import argparse
import time

import numpy as np

from palsim import _kernels
from palsim.prescription import DEFAULT_CAMERA
from palsim.projection import row_assignment


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def bench_convolve(mod, img, kernel, r2f):
    cuts = np.flatnonzero(np.diff(r2f)) + 1
    bounds = zip(np.r_[0, cuts], np.r_[cuts, r2f.size])
    return [mod.convolve_rows(img, kernel, int(a), int(b)) for a, b in bounds]


def bench_remap(mod, src):
    h, w = 288, 1504
    lo, hi = DEFAULT_CAMERA.theta_range
    r = DEFAULT_CAMERA.radius(lo + np.arange(h) * (hi - lo) / (h - 1))
    phi = 2 * np.pi * np.arange(w) / w
    cx, cy = DEFAULT_CAMERA.center
    mx = cx + r[:, None] * np.cos(phi)
    my = cy + r[:, None] * np.sin(phi)
    return mod.remap_bilinear(src, mx, my)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    img = rng.random((288, 1504))
    src = rng.random((1024, 1280, 3))
    r2f = row_assignment(288, np.arange(101.0))
    backends = _kernels.backends()
    print(f"active backend: {_kernels.BACKEND}; available: {', '.join(backends)}")
    print(f"{'case':<22}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}")

    cases = []
    for size in (7, 15):
        k = rng.random((size, size))
        k /= k.sum()
        cases.append((f"convolve {size}x{size}", lambda m, k=k: bench_convolve(m, img, k, r2f)))
    cases.append(("remap 288x1504", lambda m: bench_remap(m, src)))

    for name, fn in cases:
        times, outs = {}, {}
        for bname, mod in backends.items():
            outs[bname] = fn(mod)
            times[bname] = _best(lambda: fn(mod), args.repeat)
        if len(outs) == 2:
            a, b = outs["python"], outs["cython"]
            a = np.concatenate(a) if isinstance(a, list) else a[0]
            b = np.concatenate(b) if isinstance(b, list) else b[0]
            assert np.allclose(a, b, atol=1e-12), f"backends disagree on {name}"
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<22}" + "".join(f"{times[b] * 1e3:>10.1f}ms" for b in backends) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
