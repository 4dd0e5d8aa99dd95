"""Time surrogate prediction and particle-filter assimilation against particle count.

    python benchmarks/bench_surrogate.py [--particles 100 1000 10000]
"""

import argparse
import time
import warnings

import numpy as np

from grainrom.pipeline.assimilation import assimilate_scenario
from grainrom.pipeline.data import DatasetManifest, ScenarioRecord
from grainrom.pipeline.model import predict, train
from grainrom.trace import ForceTrace, theta_grid


def synthetic_manifest(n_conditions=10, n_theta=128):
    th = theta_grid(n_theta)
    m = DatasetManifest(th)
    for w in np.linspace(1.0, 10.0, n_conditions):
        fx = (1 + 0.2 * w) * np.sin(th + 0.05 * w) + 0.1 * np.sin(3 * th) * w
        fz = np.sqrt(w) * np.cos(th) ** 2 - 0.05 * w * np.sin(2 * th)
        m.add(ScenarioRecord("flat", float(w), ForceTrace(th, fx, fz)))
    return m


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--particles", type=int, nargs="+", default=[100, 1000, 10000])
    ap.add_argument("--observations", type=int, default=10)
    args = ap.parse_args()

    start = time.perf_counter()
    model = train(synthetic_manifest(), "flat")
    print(f"train: {time.perf_counter() - start:.2f} s, {model.n_coefficients} coefficient GPs")

    times = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for w in np.linspace(1.0, 10.0, 200):
            start = time.perf_counter()
            predict(model, float(w))
            times.append(time.perf_counter() - start)
    print(f"predict: median {np.median(times) * 1e3:.3f} ms over {len(times)} calls")

    rng = np.random.default_rng(0)
    truth = predict(model, 4.5).trace
    th = np.sort(rng.choice(truth.theta, args.observations, replace=False))
    obs = [(float(t), b, float(np.interp(t, truth.theta, truth.behavior(b)))) for t in th for b in ("fx", "fz")]
    for n in args.particles:
        start = time.perf_counter()
        assimilate_scenario(model, 4.5, obs, n_particles=n, seed=0)
        print(f"assimilate: N={n:6d}  {(time.perf_counter() - start) * 1e3:8.1f} ms for {len(obs)} observations")


if __name__ == "__main__":
    main()
