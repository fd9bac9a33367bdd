"""Time the numba kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Each kernel is warmed up once (numba compile) before timing. Outputs of the
two flavours are compared so a speedup never hides a wrong answer.
"""
import argparse
import time

import numpy as np

from roar import kernels as K
from roar._accel import HAVE_NUMBA


def best_of(fn, args, repeat):
    fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    B, H = 10, 128
    gx = rng.standard_normal((B, 3 * H))
    gh = rng.standard_normal((B, 3 * H))
    h = rng.standard_normal((B, H))
    g = rng.standard_normal((B, H))
    _, r, z, n = K.gru_gates_forward_np(gx, gh, h)
    X = rng.standard_normal((500, 4096))
    phi = np.array([1.0, 1.0])
    psi = np.array([1.0, -1.0])
    P = rng.random((200, 50))
    thr = np.unique(P.max(axis=1))[::-1].copy()
    return [
        ("gru_gates_forward", K.gru_gates_forward_np, K.gru_gates_forward_nb, (gx, gh, h)),
        ("gru_gates_backward", K.gru_gates_backward_np, K.gru_gates_backward_nb, (g, gh, h, r, z, n)),
        ("haar_rows", K.haar_rows_np, K.haar_rows_nb, (X, phi, psi)),
        ("first_crossings", K.first_crossings_np, K.first_crossings_nb, (P, thr)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy kernels exist")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20} {'numpy_us':>10} {'numba_us':>10} {'speedup':>8}  match")
    for name, f_np, f_nb, a in cases(rng):
        t_np = best_of(f_np, a, args.repeat)
        t_nb = best_of(f_nb, a, args.repeat)
        out_np, out_nb = f_np(*a), f_nb(*a)
        if not isinstance(out_np, tuple):
            out_np, out_nb = (out_np,), (out_nb,)
        ok = all(np.allclose(x, y, rtol=1e-12, atol=1e-12) for x, y in zip(out_np, out_nb))
        print(f"{name:<20} {t_np * 1e6:>10.1f} {t_nb * 1e6:>10.1f} {t_np / t_nb:>8.2f}  {ok}")


if __name__ == "__main__":
    main()
