"""Compare the compiled likelihood kernel with the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 20] [--traps 7] [--spacing 750] [--hourly]

Times full negative log-likelihood + gradient evaluations on simulated
desk-scale data and checks that both backends agree. With --hourly, p0
varies by occasion, which disables the compiled kernel's reuse of
per-occasion terms.
"""
import argparse
import math
import time

import numpy as np

from scrfit.covariates import CovariateSurface
from scrfit.geometry import TrapArray, build_state_space
from scrfit.likelihood import LikelihoodContext
from scrfit.model import CovariateRegistry
from scrfit.simulate import SimConfig, simulate


def problem(n_traps, spacing, occasions, sessions, lam, seed, hourly=False):
    xy = [(i * 1000.0, j * 1000.0) for j in range(n_traps) for i in range(n_traps)]
    traps = TrapArray([f"T{k}" for k in range(len(xy))], xy)
    ss = build_state_space(traps, 4500.0, spacing)
    truth = {"p0.(Intercept)": math.log(0.3 / 0.7), "sig.(Intercept)": math.log(1500.0),
             "d0.(Intercept)": math.log(lam / (ss.area / 1e6))}
    formula, reg = "D~1", CovariateRegistry()
    if hourly:
        formula = "D~1; p0~hour"
        truth["p0.hour"] = 0.5
        reg = CovariateRegistry([CovariateSurface("hour", "occasion",
                                                  np.sin(2 * np.pi * np.arange(occasions) / occasions))])
    cfg = SimConfig(formula, truth, ss, traps, occasions, sessions, seed=seed, registry=reg)
    data, _ = simulate(cfg, 0)
    return cfg, data


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times), float(np.median(times))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--traps", type=int, default=7, help="traps per side of the square grid")
    ap.add_argument("--spacing", type=float, default=750.0, help="state-space lattice spacing (m)")
    ap.add_argument("--occasions", type=int, default=5)
    ap.add_argument("--sessions", type=int, default=3)
    ap.add_argument("--lam", type=float, default=120.0)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--hourly", action="store_true", help="let p0 vary by occasion")
    args = ap.parse_args()

    cfg, data = problem(args.traps, args.spacing, args.occasions, args.sessions, args.lam, args.seed,
                        args.hourly)
    design = cfg.design()
    theta = cfg.theta(design) + 0.05
    print(f"G={cfg.statespace.n_points} J={data.traps.n_traps} K={data.n_occasions} "
          f"sessions={data.n_sessions} n={data.counts()}")
    results = {}
    for backend in ("compiled", "python"):
        ctx = LikelihoodContext(data, cfg.statespace, design, backend=backend)
        results[backend] = ctx.nll_and_grad(theta)
        fast, med = best_of(lambda: ctx.nll_and_grad(theta), args.repeat)
        vfast, vmed = best_of(lambda: ctx.nll_and_grad(theta, want_grad=False), args.repeat)
        results[backend + "_t"] = med
        print(f"{backend:9s} value+grad best {fast * 1e3:8.2f} ms  median {med * 1e3:8.2f} ms   "
              f"value only median {vmed * 1e3:8.2f} ms")
    (va, ga), (vb, gb) = results["compiled"], results["python"]
    print(f"speed-up (median, value+grad): {results['python_t'] / results['compiled_t']:.2f}x")
    print(f"agreement: |dnll|/nll = {abs(va - vb) / abs(va):.2e}, "
          f"max |dgrad| = {np.max(np.abs(ga - gb)):.2e}")


if __name__ == "__main__":
    main()
