"""Compare the compiled kernels with the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from cotforge import _kernels_py

try:
    from cotforge import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng):
    V, L = 64, 80
    logits = rng.normal(size=(L, V))
    targets = rng.integers(0, V, size=L)
    targets[: L // 3] = -100
    teacher = rng.normal(size=(L, V))
    mask = (targets != -100).astype(np.uint8)
    a = rng.integers(0, 50, size=120)
    b = rng.integers(0, 50, size=140)
    return {
        "masked_nll": lambda k: k.masked_nll(logits, targets),
        "kl_rows": lambda k: k.kl_rows(teacher, logits, 2.0, mask),
        "lcs_length": lambda k: k.lcs_length(a, b),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = {"python": _kernels_py}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    print(f"{'kernel':<12} " + " ".join(f"{b + ' (us)':>14}" for b in backends) + f" {'speedup':>8}")
    for name, fn in cases(rng).items():
        times = {}
        for b, mod in backends.items():
            t = min(timeit.repeat(lambda: fn(mod), number=args.number, repeat=args.repeat))
            times[b] = 1e6 * t / args.number
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<12} " + " ".join(f"{times[b]:>14.1f}" for b in backends) + f" {speed:>8.1f}x")


if __name__ == "__main__":
    main()
