"""Warm versus cold inner-loop start for the two-step baseline, next to Gen-Oja.

Warm start carries the last inner iterate into the next outer step; cold
start resets it to zero. Reports final mean error and its ratio to Gen-Oja.
"""

import argparse
import dataclasses

from genoja.harness.experiment import run_many, summarize
from genoja.harness.presets import FIG1_BASE, TWO_STEP_TAUS
from genoja.solvers import SolverConfig

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--horizon", type=int, default=100_000)
    p.add_argument("--trials", type=int, default=10)
    args = p.parse_args()

    base = dataclasses.replace(FIG1_BASE, horizon=args.horizon, trials=args.trials)
    inner = dataclasses.replace(base.schedule, alpha_factor=0.5)
    jobs = [("gen-oja", base)]
    for warm in (False, True):
        for tau in TWO_STEP_TAUS:
            cfg = dataclasses.replace(base, solver=SolverConfig("two-step", tau=tau, warm_start=warm), schedule=inner)
            jobs.append((f"tau={tau} {'warm' if warm else 'cold'}", cfg))
    results = run_many(cfg for _, cfg in jobs)
    ref = summarize(results[0])[0]
    for (label, _), trace in zip(jobs, results):
        if isinstance(trace, Exception):
            print(f"{label:>16}  error: {trace}")
            continue
        final, slope = summarize(trace)
        print(f"{label:>16}  final {final:.3e}  slope {slope:6.3f}  ratio {final / ref:7.1f}x")
