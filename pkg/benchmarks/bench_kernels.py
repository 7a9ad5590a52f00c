"""Benchmark the numba kernels against the pure-numpy fallback.

Times the hot stencils (symmetric gradient and its transpose, 1D and 2D)
and the plastic radial return, plus a whole 2D viscoplastic step loop.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from stagdyn import kernels
from stagdyn.grid import Grid, build
from stagdyn.integrator import IntegratorConfig, initial_state, no_loading, run_simulation
from stagdyn.materials import PlasticCreepMaterial


def timeit(fn, repeat):
    fn()  # warm up (JIT compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_stencils(repeat):
    rng = np.random.default_rng(0)
    v1 = rng.standard_normal(200_000)
    s1 = rng.standard_normal(200_001)
    nx = ny = 384
    vx = rng.standard_normal((nx + 1, ny))
    vy = rng.standard_normal((nx, ny + 1))
    wxx = rng.standard_normal((nx, ny))
    wyy = rng.standard_normal((nx, ny))
    wxy = rng.standard_normal((nx + 1, ny + 1))
    trial = np.abs(rng.standard_normal(200_000))

    cases = [
        ("grad_1d (2e5)", lambda: kernels.grad_1d(v1, 1e-3)),
        ("grad_1d_t (2e5)", lambda: kernels.grad_1d_t(s1, 1e-3)),
        ("grad_2d (384^2)", lambda: kernels.grad_2d(vx, vy, 1e-2)),
        ("grad_2d_t (384^2)", lambda: kernels.grad_2d_t(wxx, wyy, wxy, 1e-2)),
        ("radial_return (2e5)",
         lambda: kernels.radial_return(trial, 0.3, 2.0)),
    ]
    rows = []
    for name, fn in cases:
        per_backend = {}
        for backend in ("numpy", "numba") if kernels.have_numba() else ("numpy",):
            kernels.set_backend(backend)
            per_backend[backend] = timeit(fn, repeat)
        rows.append((name, per_backend))
    return rows


def bench_step_loop(repeat):
    d = build(Grid(dim=2, nx=96, ny=96, h=1.0 / 96.0, bc=("dirichlet",) * 4),
              1.0, {"bulk_modulus": 1.0, "shear_modulus": 0.6})
    m = PlasticCreepMaterial(viscosity=0.5, sigma_y=0.05)
    rng = np.random.default_rng(1)
    sigma0 = rng.standard_normal(d.n_s) * 0.2
    sigma0[~d.s_active] = 0.0

    def run():
        st = initial_state(d, m, sigma=sigma0)
        cfg = IntegratorConfig(tau=2e-3, t_end=100 * 2e-3,
                               skip_cfl_check=True)
        run_simulation(d, m, no_loading(d), cfg, st)

    per_backend = {}
    for backend in ("numpy", "numba") if kernels.have_numba() else ("numpy",):
        kernels.set_backend(backend)
        per_backend[backend] = timeit(run, max(1, repeat // 4))
    return [("viscoplastic 2D 96^2 x 100 steps", per_backend)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not kernels.have_numba():
        print("numba not importable: timing the numpy fallback only")
    rows = bench_stencils(args.repeat) + bench_step_loop(args.repeat)
    print(f"{'case':<36} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, per in rows:
        t_np = per["numpy"]
        if "numba" in per:
            t_nb = per["numba"]
            print(f"{name:<36} {t_np * 1e3:>10.3f}ms {t_nb * 1e3:>10.3f}ms "
                  f"{t_np / t_nb:>8.2f}x")
        else:
            print(f"{name:<36} {t_np * 1e3:>10.3f}ms {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()
