"""Benchmark the numba kernels against the pure-numpy fallback.

Runs each hot kernel on realistic shapes, checks that both backends agree,
then times a full forward solve per backend. The numpy path is selected by
re-executing this script with TRAFFICFLOW_KERNELS=numpy, so run it directly:

    python benchmarks/compare_backends.py
"""

import os
import subprocess
import sys
import time

import numpy as np

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def bench_kernels():
    from trafficflow.kernels import numba_backend, numpy_backend

    rng = np.random.default_rng(0)
    n, w = 200, 16
    m = rng.uniform(0.0, 1.0, n)
    kvals = 25.0 / (1.0 + np.arange(w) * 0.005)
    v_face = rng.uniform(0.2, 1.0, n + 1)
    lam = rng.uniform(0.0, 1.0, n)
    src = rng.uniform(0.0, 1.0, n)
    dt, dx = 0.00495, 0.005

    fluxes = numpy_backend.edge_fluxes(m, v_face, dt, dx, 2)
    cases = [
        ("windowed_corr", lambda b: b.windowed_corr(m, kvals, dx)),
        ("rev_windowed_corr", lambda b: b.rev_windowed_corr(m, kvals, dx)),
        ("edge_fluxes", lambda b: b.edge_fluxes(m, v_face, dt, dx, 2)),
        ("apply_fluxes", lambda b: b.apply_fluxes(m, fluxes, dt, dx)),
        ("adjoint_step", lambda b: b.adjoint_step(lam, v_face[:n], src, 0.0, dt, dx)),
    ]

    numba_backend.warmup()
    print(f"{'kernel':<20} {'numba':>10} {'numpy':>10} {'speedup':>9}  agree")
    reps = 2000
    for name, call in cases:
        ref = call(numpy_backend)
        out = call(numba_backend)
        ref0 = ref[0] if isinstance(ref, tuple) else ref
        out0 = out[0] if isinstance(out, tuple) else out
        agree = np.allclose(ref0, out0, rtol=1e-12, atol=1e-14)

        t0 = time.perf_counter()
        for _ in range(reps):
            call(numba_backend)
        t_nb = (time.perf_counter() - t0) / reps

        t0 = time.perf_counter()
        for _ in range(reps):
            call(numpy_backend)
        t_np = (time.perf_counter() - t0) / reps

        print(f"{name:<20} {t_nb * 1e6:>8.1f}us {t_np * 1e6:>8.1f}us "
              f"{t_np / t_nb:>8.1f}x  {agree}")
        assert agree, f"backend mismatch in {name}"


def bench_solve():
    import trafficflow as tf
    from trafficflow.kernels import BACKEND

    scn = tf.parse_scenario(os.path.join(REPO, "scenarios", "fig4a_separated.cfg"))
    tf.simulate_forward(scn)  # warm the JIT cache
    t0 = time.perf_counter()
    reps = 5
    for _ in range(reps):
        traj = tf.simulate_forward(scn)
    elapsed = (time.perf_counter() - t0) / reps
    print(f"forward solve [{BACKEND}]: {elapsed * 1e3:.1f} ms "
          f"({traj.n_nodes} nodes, 3 edges x 200 cells)")


def main():
    if os.environ.get("TRAFFICFLOW_KERNELS", "numba") == "numba":
        bench_kernels()
        bench_solve()
        print(flush=True)
        env = dict(os.environ, TRAFFICFLOW_KERNELS="numpy")
        subprocess.run([sys.executable, os.path.abspath(__file__)],
                       env=env, check=True)
    else:
        bench_solve()


if __name__ == "__main__":
    main()
