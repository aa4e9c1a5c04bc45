#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Covers the primitives (affine forward/backward at training batch sizes,
optimizer steps, sum-tree ops) plus an end-to-end DQN training slice run
once per backend. Numbers are wall-clock on this machine; run with
QUIZFORGE_BACKEND pinned if you want to benchmark a single backend.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import importlib
import os
import subprocess
import sys
import time

import numpy as np

from quizforge import kernels_numpy


def _load_cython():
    try:
        return importlib.import_module("quizforge._ckernels")
    except ImportError:
        return None


def timeit(fn, *args, reps):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - t0) / reps * 1e6  # microseconds


def bench_primitives(backends, quick=False):
    rng = np.random.default_rng(0)
    scale = 0.2 if quick else 1.0
    rows = []

    for batch in (1, 128, 256):
        reps = max(50, int(scale * (20000 if batch == 1 else 2000)))
        x = rng.normal(size=(batch, 64))
        w = rng.normal(size=(64, 64))
        b = rng.normal(size=64)
        out = np.empty((batch, 64))
        rows.append((f"affine_forward 64x64 B={batch}",
                     {name: timeit(k.affine_forward, x, w, b, out, True, reps=reps)
                      for name, k in backends}))
        act = np.abs(out)
        d = rng.normal(size=(batch, 64))
        dw = np.empty_like(w)
        db = np.empty(64)
        dx = np.empty_like(x)
        rows.append((f"affine_backward 64x64 B={batch}",
                     {name: timeit(k.affine_backward, x, w, act, d, True, dw, db, dx,
                                   reps=reps)
                      for name, k in backends}))

    n_params = 5508  # 15 -> 64 -> 64 -> 4 Q network
    p = rng.normal(size=n_params)
    g = rng.normal(size=n_params)
    m = np.zeros(n_params)
    v = np.zeros(n_params)
    reps = max(100, int(scale * 20000))
    rows.append(("adam_step 5508 params",
                 {name: timeit(k.adam_step, p, g, m, v, 5, 0.005, 0.9, 0.999, 1e-8,
                               reps=reps)
                  for name, k in backends}))

    cap = 50_000
    nodes = np.zeros(2 * cap - 1)
    for i in range(0, cap, 7):
        kernels_numpy.sumtree_update(nodes, cap, i, rng.random() + 0.01)
    rs = rng.random(128) * nodes[0]
    out_idx = np.empty(128, dtype=np.int64)
    reps = max(50, int(scale * 3000))
    rows.append(("sumtree_query_batch 128 of 50k",
                 {name: timeit(k.sumtree_query_batch, nodes, cap, rs, out_idx,
                               reps=reps)
                  for name, k in backends}))
    idx = np.arange(128, dtype=np.int64)
    vals = rng.random(128) + 0.01
    rows.append(("sumtree_update_batch 128 of 50k",
                 {name: timeit(k.sumtree_update_batch, nodes, cap, idx, vals,
                               reps=reps)
                  for name, k in backends}))
    return rows


def bench_training(quick=False):
    """Run the same short DQN job under each backend (separate processes,
    since the backend is fixed at import time)."""
    episodes = 10 if quick else 30
    code = f"""
import time
import quizforge
from quizforge.datagen import DatasetSpec, generate_synthetic
from quizforge.environment import build_universe
from quizforge.harness import make_target
from quizforge.agents import TrainConfig, dqn_train, sarsa_train

ds = generate_synthetic(DatasetSpec(n_mcqs=800, n_topics=10, n_levels=5, seed=7))
u = build_universe(ds, k=10, n=1500, seed=3)
spec = make_target("uniform", u.n_topics, u.n_levels, alpha=0.5)
for name, trainer in (("dqn", dqn_train), ("sarsa", sarsa_train)):
    cfg = TrainConfig(episodes={episodes}, seed=1)
    t0 = time.time()
    _, log = trainer(u, spec, cfg)
    steps = sum(st.steps for st in log.episodes)
    print(f"RESULT {{quizforge.KERNEL_BACKEND}} {{name}} {{(time.time()-t0)/max(1,steps)*1e3:.3f}} ms/step ({{steps}} steps)")
"""
    lines = []
    for backend in ("cython", "numpy"):
        env = dict(os.environ, QUIZFORGE_BACKEND=backend)
        proc = subprocess.run([sys.executable, "-c", code], env=env,
                              capture_output=True, text=True)
        if proc.returncode != 0:
            lines.append(f"  {backend}: failed ({proc.stderr.strip().splitlines()[-1]})")
        else:
            lines.extend("  " + l.removeprefix("RESULT ")
                         for l in proc.stdout.splitlines() if l.startswith("RESULT"))
    return lines


def bench_a3c_scaling(quick=False):
    """Wall-clock per training run for A3C at 1 vs 4 workers (informational:
    thread scaling needs both multiple cores and GIL-released kernels)."""
    import os as _os

    from quizforge.agents import TrainConfig, a3c_train
    from quizforge.datagen import DatasetSpec, generate_synthetic
    from quizforge.environment import build_universe
    from quizforge.harness import make_target

    ds = generate_synthetic(DatasetSpec(n_mcqs=600, n_topics=10, n_levels=5, seed=7))
    u = build_universe(ds, k=10, n=800, seed=3)
    spec = make_target("uniform", u.n_topics, u.n_levels, alpha=0.5)
    episodes = 20 if quick else 60
    lines = [f"  ({_os.cpu_count()} cpu cores visible)"]
    for workers in (1, 4):
        cfg = TrainConfig(episodes=episodes, workers=workers, seed=1)
        t0 = time.perf_counter()
        a3c_train(u, spec, cfg)
        lines.append(f"  a3c workers={workers}: {time.perf_counter() - t0:.2f}s "
                     f"for {episodes} episodes")
    return lines


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="fewer repetitions")
    args = parser.parse_args()

    ck = _load_cython()
    backends = [("numpy", kernels_numpy)]
    if ck is not None:
        backends.insert(0, ("cython", ck))
    else:
        print("compiled kernels not available; benchmarking the fallback only\n")

    print(f"{'primitive':38s}" + "".join(f"{name:>12s}" for name, _ in backends)
          + ("     speedup" if ck else ""))
    for label, results in bench_primitives(backends, quick=args.quick):
        line = f"{label:38s}" + "".join(f"{results[name]:10.1f}us" for name, _ in backends)
        if ck is not None:
            line += f"{results['numpy'] / results['cython']:10.2f}x"
        print(line)

    print("\nend-to-end training (one process per backend):")
    for line in bench_training(quick=args.quick):
        print(line)

    print("\na3c worker scaling (informational):")
    for line in bench_a3c_scaling(quick=args.quick):
        print(line)


if __name__ == "__main__":
    main()
