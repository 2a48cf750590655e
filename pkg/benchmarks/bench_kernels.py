"""Compare the numba kernels with their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--trials 64] [--repeat 3]

Each kernel runs once to warm up (JIT compile for numba), then ``repeat``
times; the best wall time is reported. Outputs of both backends are checked
against each other before timing is printed.
"""

import argparse
import time

import numpy as np

from penselect import kernels
from penselect.bounds import uniform_ball
from penselect.models import ModelCollection
from penselect.noise import NoiseSpec, sample_trials, trial_generator
from penselect.select import PenaltySpec, penalties


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--min-block", type=int, default=8)
    ap.add_argument("--trials", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    t0 = time.perf_counter()
    coll = ModelCollection.dyadic(args.n, args.min_block)
    print(f"dyadic collection n={args.n} min_block={args.min_block}: {len(coll)} models, "
          f"{coll.indices.size} atom refs, built in {time.perf_counter() - t0:.2f}s")

    noise = NoiseSpec.make("gaussian", sd=0.1)
    f = np.r_[np.zeros(args.n // 2), np.ones(args.n - args.n // 2)]
    Y = f[:, None] + sample_trials(noise, args.n, 1, 0, args.trials).T
    pen = penalties(PenaltySpec.from_noise("general", 2.0, noise), coll)[coll.selection_order]
    indptr, indices = coll.ordered_csr
    G = coll.atom_gains(Y)
    yy = (Y * Y).sum(axis=0)

    rng = trial_generator(5, 0)
    A = rng.standard_normal((1024, 64))
    pts = uniform_ball(3, 100_000, rng)

    cases = {
        "atom_select": lambda be: kernels.atom_select(G, yy, indptr, indices, pen, backend_name=be),
        "model_sums": lambda be: kernels.model_sums(G[:, :8], indptr, indices, backend_name=be),
        "mgs": lambda be: kernels.mgs(A, backend_name=be),
        "greedy_pack": lambda be: kernels.greedy_pack(pts, 0.25, backend_name=be),
    }
    print(f"{'kernel':<14}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, fn in cases.items():
        t_nb, out_nb = best_of(lambda: fn("numba"), args.repeat)
        t_np, out_np = best_of(lambda: fn("numpy"), args.repeat)
        if isinstance(out_nb, tuple):
            assert np.array_equal(out_nb[0], out_np[0])
            assert np.allclose(out_nb[1], out_np[1], rtol=1e-12)
        elif out_nb.dtype.kind == "i":
            assert np.array_equal(out_nb, out_np)
        else:
            assert np.allclose(out_nb, out_np, rtol=1e-10, atol=1e-12)
        print(f"{name:<14}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
