"""Time the compiled and pure-Python kernel backends on the same inputs.

    python benchmarks/bench_kernels.py --T 64 256 1024 --repeat 5
"""

import argparse
import timeit

import numpy as np

from grcattn import kernels


def cases(T, d, rng):
    h = rng.normal(size=(T, d))
    z = rng.uniform(size=T)
    z[0] = 1.0
    e = rng.normal(scale=3.0, size=T)
    p = rng.uniform(size=T)
    prev = rng.dirichlet(np.ones(T))
    a = rng.integers(0, 16, size=T)
    b = rng.integers(0, 16, size=T)
    return {
        "grc_scan": lambda k: k.grc_scan(h, z),
        "dual_weights": lambda k: k.dual_weights(z),
        "inverse_dual": lambda k: k.inverse_dual(prev),
        "decgrc_gates": lambda k: k.decgrc_gates(e),
        "mocha_alpha": lambda k: k.mocha_alpha(p, prev),
        "mocha_beta": lambda k: k.mocha_beta(prev, e, 4),
        "edit_distance": lambda k: k.edit_distance(a, b),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, nargs="+", default=[64, 256, 1024])
    ap.add_argument("--d", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    names = kernels.available_backends()
    if "cython" not in names:
        print("compiled backend not built; timing the python fallback only")
    backends = {n: kernels.get_backend(n) for n in names}
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<14} {'T':>5} " + " ".join(f"{n + ' us':>12}" for n in names) + "   speedup")
    for T in args.T:
        for name, fn in cases(T, args.d, rng).items():
            times = {}
            for bname, mod in backends.items():
                timer = timeit.Timer(lambda: fn(mod))
                loops, _ = timer.autorange()
                best = min(timer.repeat(args.repeat, loops)) / loops
                times[bname] = best * 1e6
            cols = " ".join(f"{times[n]:12.1f}" for n in names)
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{name:<14} {T:>5} {cols}   {speed:6.1f}x")


if __name__ == "__main__":
    main()
