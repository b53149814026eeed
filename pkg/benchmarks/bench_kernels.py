"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel and shape: best-of-N wall time per call for each
backend and the speed ratio. The shapes are the ones the training loops and
the adaptation protocol actually hit.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from actir.kernels import _reference

try:
    from actir.kernels import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    x = rng.normal(size=(1000, 8))
    w = rng.normal(size=(8, 8))
    b = rng.normal(size=8)
    logits = rng.normal(size=(1000, 2))
    y = rng.integers(0, 2, size=1000)
    feats = rng.normal(size=(10, 8))
    w0 = np.eye(2, 8)
    ys = rng.integers(0, 2, size=10)
    big = rng.normal(size=(256, 392))
    wbig = rng.normal(size=(64, 392))
    return [
        ("dense_forward 1000x8 -> 8", "dense_forward", (x, w, b)),
        ("dense_forward 256x392 -> 64", "dense_forward", (big, wbig, np.zeros(64))),
        ("softmax_xent 1000x2", "softmax_xent", (logits, y)),
        ("group_center 1000x8, 2 groups", "group_center", (x, y, 2)),
        ("finetune_head 10 shots, 20 steps", "finetune_head", (feats, ys, w0, 20, 1e-2)),
    ]


def best_time(fn, args, repeat, number):
    return min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number)) / number


def end_to_end(pure: bool) -> float:
    """Seconds for 200 ACTIR steps on the synthetic task in a fresh interpreter."""
    code = (
        "import time\n"
        "from actir import datagen, model, objectives as O\n"
        "d = datagen.generate_domains('synthetic', {'train0': 0.95, 'train1': 0.7}, 1000, 0)\n"
        "p = model.init_model(model.RepSplit(2, 6), [2, 8, 8, 8], datagen.domain_rng(0, 'init'), domains=list(d))\n"
        "t = time.perf_counter(); O.train_actir(p, d, O.ActirHyper(steps=200)); print(time.perf_counter() - t)\n"
    )
    env = dict(os.environ, ACTIR_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=200)
    args = parser.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the numpy fallback is available")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'cython (us)':>12s} {'numpy (us)':>12s} {'ratio':>7s}")
    for label, name, fargs in cases(rng):
        number = max(1, args.number // 20) if name == "finetune_head" else args.number
        tc = best_time(getattr(_ckernels, name), fargs, args.repeat, number)
        tp = best_time(getattr(_reference, name), fargs, args.repeat, number)
        print(f"{label:36s} {tc * 1e6:12.1f} {tp * 1e6:12.1f} {tp / tc:7.2f}")
    tc, tp = end_to_end(False), end_to_end(True)
    print(f"{'200 ACTIR training steps':36s} {tc * 1e6:12.0f} {tp * 1e6:12.0f} {tp / tc:7.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
