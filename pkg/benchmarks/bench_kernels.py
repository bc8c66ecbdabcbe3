"""Compare the compiled and pure-Python crossing-time kernels.

Times one batch evaluation of every user's crossing on a synthetic corpus,
then a full training run, under each available backend.

    python benchmarks/bench_kernels.py [--sessions 200] [--repeat 50]
"""
import argparse
import time

import numpy as np

from hri_engagement import kernels
from hri_engagement.behaviors import default_parameter_set
from hri_engagement.engine import CompiledDataset
from hri_engagement.synthgen import ScenarioConfig, generate
from hri_engagement.trainer import TrainConfig, train


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sessions", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    corpus = generate(ScenarioConfig(n_sessions=args.sessions, seed=args.seed))
    data = CompiledDataset(corpus)
    gt = ScenarioConfig().ground_truth
    slopes = data.slopes(gt.means(), gt.variances(), True)
    print(f"{data.n_users} users, {data.durations.size} sections")

    results = {}
    for name in kernels.available_backends():
        kernels.set_backend(name)
        batch = best_of(lambda: kernels.crossing_times(data.offsets, data.durations, slopes, gt.t_max), args.repeat)
        t0 = time.perf_counter()
        report = train(corpus, default_parameter_set(), TrainConfig(seed=args.seed))
        fit = time.perf_counter() - t0
        results[name] = (batch, fit, report.objective_trajectory[-1])
        print(f"{name:>9}: kernel {batch * 1e6:10.1f} us/batch   training {fit:7.2f} s   objective {results[name][2]:.6f}")

    if len(results) == 2:
        (cb, cf, co), (pb, pf, po) = results["compiled"], results["python"]
        print(f"speedup: kernel x{pb / cb:.1f}, training x{pf / cf:.1f}; objectives equal: {np.float64(co) == po}")


if __name__ == "__main__":
    main()
