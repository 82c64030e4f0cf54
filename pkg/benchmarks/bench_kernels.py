"""Time the numba and pure-numpy kernel paths on realistic shapes.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each kernel is warmed up once (so numba compilation is excluded), then timed
``repeat`` times; the best time is reported along with the max abs difference
between the two outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from echosonar import kernels
from echosonar._backend import BACKEND, NUMBA_AVAILABLE
from echosonar.chirp import ChirpSpec, generate_chirp, highpass_taps


def _best(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t)
    return min(times), out


def _max_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def cases(quick: bool):
    rng = np.random.default_rng(0)
    spec = ChirpSpec()
    tx = generate_chirp(spec).samples
    n_win = 100 if quick else 1000
    seconds = n_win * spec.chirp_len_samples / spec.sample_rate_hz
    audio = rng.standard_normal((7, n_win * spec.chirp_len_samples))
    taps = highpass_taps(17_000.0, spec.sample_rate_hz)
    delays = rng.integers(0, 400, size=(n_win, 40, 7))
    amps = rng.uniform(0, 0.1, size=(n_win, 40, 7))
    b = 4 if quick else 32
    x = rng.standard_normal((b, 16, 64, 25)).astype(np.float32)
    cols = rng.standard_normal((b * 64 * 25, 16 * 9)).astype(np.float32)
    pooled, arg = kernels.maxpool2x2_numpy(x)
    yield f"fir_zero_phase  7ch x {seconds:.1f}s", "fir_zero_phase", (audio, taps)
    yield f"render_echoes   {n_win} win x 40 echo", "render_echoes", (tx, delays, amps)
    yield f"im2col3x3       {b}x16x64x25", "im2col3x3", (x,)
    yield f"col2im3x3       {b}x16x64x25", "col2im3x3", (cols, x.shape)
    yield f"maxpool2x2      {b}x16x64x25", "maxpool2x2", (x,)
    yield f"maxpool2x2_bwd  {b}x16x64x25", "maxpool2x2_backward", (pooled, arg, x.shape)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small shapes, for smoke runs")
    args = ap.parse_args(argv)
    print(f"active backend: {BACKEND}  (numba available: {NUMBA_AVAILABLE})")
    print(f"{'kernel':40s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for label, name, fargs in cases(args.quick):
        t_nb, out_nb = _best(getattr(kernels, name + "_numba"), fargs, args.repeat)
        t_np, out_np = _best(getattr(kernels, name + "_numpy"), fargs, args.repeat)
        print(f"{label:40s} {t_nb * 1e3:10.2f} {t_np * 1e3:10.2f} {t_np / t_nb:8.2f} {_max_diff(out_nb, out_np):11.3g}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
