"""Compare the compiled element kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--elements 2000] [--repeat 5] [--run]

Times the displacement/damage element kernel and the per-element Schur
complement on random element states.  ``--run`` additionally times a short
plate run in two subprocesses, one with ``GRADAMAGE_PURE_PYTHON=1``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gradamage import kernels
from gradamage.element_gd import _gd_parts, condense, gd_element_system
from gradamage.material import MaterialParams
from gradamage.verify import random_element_states

PARAMS = MaterialParams(E=1000.0, nu=0.3, d0=0.5, d1=1.0, c=100.0)

RUN_SNIPPET = """
import time
from gradamage import *
m = generate_quarter_plate_with_hole(refinement=1)
s = Solver(m, GradientDamageFormulation(m, MaterialParams(d0=0.0, d1=1.0, c=100.0)), plate_bcs())
r = s.run(LoadProgram(10, 5.0))
print(BACKEND, r.assembly_s, r.solve_s)
"""


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--elements", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--run", action="store_true", help="also time a short plate run per backend")
    args = ap.parse_args(argv)

    if kernels.ua_kernel_c is None:
        print("compiled extension not built; only the numpy backend is available")
        return 1

    rng = np.random.default_rng(0)
    geom, u, a, lam, ab, act = random_element_states(rng, args.elements)
    n = args.elements
    print(f"{n} elements, best of {args.repeat}")
    print(f"{'operation':<28}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}")

    def row(name, t_py, t_c):
        print(f"{name:<28}{1e3 * t_py:>12.2f}{1e3 * t_c:>12.2f}{t_py / t_c:>10.1f}")

    t_py = best(lambda: _gd_parts(geom, u, a, lam, ab, act, PARAMS, True, kernels.ua_kernel_py), args.repeat)
    t_c = best(lambda: _gd_parts(geom, u, a, lam, ab, act, PARAMS, True, kernels.ua_kernel_c), args.repeat)
    row("element kernel", t_py, t_c)

    R, K, _, _ = gd_element_system(geom, u, a, lam, ab, act, PARAMS)
    Ru, Ku, r_lam, col, _, _ = _gd_parts(geom, u, a, lam, ab, act, PARAMS, True, kernels.ua_kernel_c)
    flags = act.astype(np.uint8)
    t_py = best(lambda: condense(R, K, act), args.repeat)
    t_c = best(lambda: kernels.condense_gd_c(Ku, Ru, col, r_lam, flags), args.repeat)
    row("static condensation", t_py, t_c)

    if args.run:
        for pure in (True, False):
            env = dict(os.environ)
            env.pop("GRADAMAGE_PURE_PYTHON", None)
            if pure:
                env["GRADAMAGE_PURE_PYTHON"] = "1"
            out = subprocess.run([sys.executable, "-c", RUN_SNIPPET], env=env, capture_output=True, text=True,
                                 check=True).stdout.split()
            print(f"plate run, {out[0]:<8} backend: assembly {float(out[1]):.2f} s, solve {float(out[2]):.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
