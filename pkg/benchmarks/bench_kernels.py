"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--batch 4096] [--repeat 5]

Both backends run on the same inputs from the desk-scale model's right-arm
path; the script reports the best wall time per call and the largest
disagreement between backends.
"""

import argparse
import timeit
from pathlib import Path

import numpy as np

from ikseed.chain import load_chain_file
from ikseed.goodness import GoodnessParams, raw_limit_distances
from ikseed.kernels import get_backend

MODEL = Path(__file__).resolve().parents[1] / "src" / "ikseed" / "data" / "models" / "seednoid_like.json"


def inputs(batch, rng):
    chain = load_chain_file(MODEL)
    sp = chain.path(chain.arm("right").frames.hand)
    lo, hi = chain.lower[sp.qidx], chain.upper[sp.qidx]
    Q = rng.uniform(lo, hi, size=(batch, lo.size))
    D = raw_limit_distances(Q, lo, hi, GoodnessParams().d_max)
    J = rng.normal(size=(batch, 6, 9))
    return sp, Q, D, J


def cases(k, sp, Q, D, J):
    args = (sp.origins, sp.kinds, sp.axes, sp.tail)
    return {
        "serial_fk": lambda: k.serial_fk(*args, Q),
        "serial_jacobian (1 state)": lambda: k.serial_jacobian(*args, Q[0]),
        "serial_goodness": lambda: k.serial_goodness(*args, Q, D, 1.0),
        "gram_root_det": lambda: k.gram_root_det(J),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    data = inputs(args.batch, np.random.default_rng(0))
    py, c = get_backend("python"), get_backend("c")
    py_cases, c_cases = cases(py, *data), cases(c, *data)

    print(f"batch {args.batch}, best of {args.repeat}")
    print(f"{'kernel':28s} {'python ms':>10s} {'c ms':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name in py_cases:
        t_py = min(timeit.repeat(py_cases[name], number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(c_cases[name], number=1, repeat=args.repeat))
        a, b = py_cases[name](), c_cases[name]()
        a = a if isinstance(a, tuple) else (a,)
        b = b if isinstance(b, tuple) else (b,)
        diff = max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(a, b))
        print(f"{name:28s} {1e3 * t_py:10.3f} {1e3 * t_c:10.3f} {t_py / t_c:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
