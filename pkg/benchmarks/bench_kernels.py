"""Time each hot kernel under numba and numpy and check that both agree.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import time

import numpy as np

from tidelevy import kernels
from tidelevy._accel import NUMBA_ENABLED


def _best(fn, args, repeat):
    fn(*args)  # warm-up, includes JIT compilation
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    # friction on a 32-path batch of 33x33 nodal fields
    v = rng.normal(size=(2, 32, 33, 33))
    gamma = rng.uniform(0.1, 1.0, (33, 33))
    # rotation solve on a 32-path batch of 16x16 modes
    r = rng.normal(size=(2, 32, 16, 16))
    a = rng.uniform(0, 1, (16, 16))
    # modulus on a 400-sample path
    t = np.linspace(0, 1, 400)
    x = np.cumsum(rng.normal(size=400))
    dist = np.abs(x[:, None] - x[None, :])
    diam = kernels._cell_diameters_np(dist)
    return [
        ("friction", kernels._friction_np, kernels._friction_nb, (v[0], v[1], gamma)),
        ("rotation_solve", kernels._rotation_solve_np, kernels._rotation_solve_nb, (r[0], r[1], a, 0.5)),
        ("cell_diameters", kernels._cell_diameters_np, kernels._cell_diameters_nb, (dist,)),
        ("partition_modulus", kernels._partition_modulus_np, kernels._partition_modulus_nb, (diam, t, 0.05)),
    ]


def run(repeat=20, seed=0):
    rows = []
    for name, f_np, f_nb, args in cases(np.random.default_rng(seed)):
        out_np, out_nb = f_np(*args), f_nb(*args)
        same = all(np.allclose(p, q, rtol=1e-12, atol=0)
                   for p, q in zip(np.atleast_1d(out_np), np.atleast_1d(out_nb)))
        t_np, t_nb = _best(f_np, args, repeat), _best(f_nb, args, repeat)
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "speedup": t_np / t_nb,
                     "agree": bool(same)})
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not NUMBA_ENABLED:
        print("numba disabled; the numba column times the numpy fallback")
    print(f"{'kernel':<18} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}  agree")
    for r in run(args.repeat, args.seed):
        print(f"{r['kernel']:<18} {1e3 * r['numpy_s']:11.3f} {1e3 * r['numba_s']:11.3f} "
              f"{r['speedup']:8.2f}  {r['agree']}")


if __name__ == "__main__":
    main()
