"""Time the SPH pair loops and a full step on the compiled and numpy backends.

    python benchmarks/bench_sph_backends.py [--widths 0.06 0.12 0.24] [--repeat 5]
"""

import argparse
import time

import numpy as np

from grainrom.sph import backend
from grainrom.sph.config import Domain, SphConfig
from grainrom.sph.geometry import make_bed
from grainrom.sph.rheology import MaterialParams
from grainrom.sph.solver import Simulation, hydrostatic_state, particle_stress


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench(width, repeat, mat, cfg):
    dom = Domain(width=width, fill_depth=0.04, wall_height=0.06)
    s = hydrostatic_state(make_bed(dom, cfg.particle_spacing, mat.bulk_density), mat, cfg)
    s.v[:] = 1e-3 * np.random.default_rng(0).standard_normal(s.v.shape)
    h, dhc = cfg.h, cfg.delta * cfg.h * cfg.sound_speed
    rows = {}
    for name in sorted(backend.BACKENDS):
        be = backend.get(name)
        pi, pj = be.find_pairs(s.x, s.kind, 2 * h)
        _, grad = be.continuity_pass(s.x, s.v, s.rho, s.mass, s.kind, pi, pj, h, dhc)
        stress = np.ascontiguousarray(particle_stress(s, grad, mat, cfg)[0])
        sim = Simulation(s.copy(), mat, cfg, backend=name)
        sim.step()
        rows[name] = {
            "pairs": best_of(lambda: be.find_pairs(s.x, s.kind, 2 * h), repeat),
            "continuity": best_of(lambda: be.continuity_pass(s.x, s.v, s.rho, s.mass, s.kind, pi, pj, h, dhc), repeat),
            "momentum": best_of(lambda: be.momentum_pass(s.x, s.v, s.rho, s.mass, stress, pi, pj, h,
                                                         cfg.sound_speed, cfg.visc_alpha, cfg.visc_beta), repeat),
            "step": best_of(sim.step, repeat),
        }
    return s.n, len(pi), rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--widths", type=float, nargs="+", default=[0.06, 0.12, 0.24])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    mat, cfg = MaterialParams(), SphConfig()
    names = sorted(backend.BACKENDS)
    print(f"active backend: {backend.NAME}; available: {', '.join(names)}")
    print(f"{'particles':>9} {'pairs':>7} {'kernel':>11} " + " ".join(f"{n + ' ms':>10}" for n in names)
          + ("   speedup" if len(names) > 1 else ""))
    for width in args.widths:
        n, pairs, rows = bench(width, args.repeat, mat, cfg)
        for kernel in ("pairs", "continuity", "momentum", "step"):
            ms = [rows[name][kernel] * 1e3 for name in names]
            line = f"{n:9d} {pairs:7d} {kernel:>11} " + " ".join(f"{t:10.2f}" for t in ms)
            if len(names) > 1:
                line += f"   {rows['python'][kernel] / rows['cython'][kernel]:7.1f}x"
            print(line)


if __name__ == "__main__":
    main()
