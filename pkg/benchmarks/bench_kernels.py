"""Compiled vs pure-Python co-simulation kernels.

Times each packaged system on both backends over the same number of steps
and reports throughput, speedup and the largest relative disagreement.

    python benchmarks/bench_kernels.py --steps 5000
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from gpebo import kernels
from gpebo.config import load_config
from gpebo.scenario import ADAPTERS


def _case(name, overrides=()):
    cfg = load_config(name, list(overrides))
    ad = ADAPTERS[cfg.system](cfg)
    params = ad.parameters(cfg.base_parameters()) if cfg.parameters is not None else None
    return cfg, ad, ad.initial_vector(), params


def _timed(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench(steps: int, repeat: int) -> list[dict]:
    if "cython" not in kernels.BACKENDS:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    cases = {
        "academic": _case("academic-gain-sweep", ["observer.gamma=100"]),
        "power": _case("power-load-change"),
        "reactor": _case("reactor-digester"),
    }
    rows = []
    for system, (cfg, ad, z0, params) in cases.items():
        timings = {}
        outputs = {}
        for backend in ("python", "cython"):
            with kernels.use_backend(backend):
                timings[backend], outputs[backend] = _timed(
                    lambda: ad.simulate(z0, params, steps, cfg.t0), 1 if backend == "python" else repeat)
        a, b = outputs["python"], outputs["cython"]
        rows.append(dict(system=system, steps=steps,
                         python_s=timings["python"], cython_s=timings["cython"],
                         speedup=timings["python"] / timings["cython"],
                         max_rel_diff=float(np.max(np.abs(a - b) / (1.0 + np.abs(a))))))
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--repeat", type=int, default=5, help="repetitions for the compiled timing (best of)")
    args = p.parse_args(argv)
    rows = bench(args.steps, args.repeat)
    print(f"{'system':<10}{'steps':>8}{'python [s]':>13}{'cython [s]':>13}{'speedup':>10}{'max rel diff':>15}")
    for r in rows:
        print(f"{r['system']:<10}{r['steps']:>8}{r['python_s']:>13.4f}{r['cython_s']:>13.5f}"
              f"{r['speedup']:>10.0f}{r['max_rel_diff']:>15.2e}")


if __name__ == "__main__":
    main()
