"""Grid over the slow-step constant gamma in beta = gamma / gap on the d=20 problem.

Prints final mean error and tail slope of Gen-Oja and of the cold-start
two-step baseline for each gamma; this is the grid the presets' gamma = 3
was read off.
"""

import argparse
import dataclasses

from genoja.harness.experiment import run_many, summarize
from genoja.harness.presets import FIG1_BASE
from genoja.solvers import SolverConfig

GAMMAS = (0.25, 0.5, 1.0, 2.0, 3.0, 6.0, 16.0)


def configs(gammas, horizon, trials):
    out = []
    for g in gammas:
        base = dataclasses.replace(
            FIG1_BASE, horizon=horizon, trials=trials, schedule=dataclasses.replace(FIG1_BASE.schedule, beta_gamma=g)
        )
        out.append((g, "gen-oja", base))
        for tau in (10, 1000):
            two = dataclasses.replace(
                base,
                solver=SolverConfig("two-step", tau=tau),
                schedule=dataclasses.replace(base.schedule, alpha_factor=0.5),
            )
            out.append((g, f"two-step-{tau}", two))
    return out


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--horizon", type=int, default=100_000)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--gamma", type=float, action="append")
    args = p.parse_args()
    jobs = configs(args.gamma or GAMMAS, args.horizon, args.trials)
    results = run_many(cfg for _, _, cfg in jobs)
    print(f"{'gamma':>6} {'solver':>15} {'final':>10} {'slope':>7}")
    for (g, name, _), trace in zip(jobs, results):
        if isinstance(trace, Exception):
            print(f"{g:6.2f} {name:>15} error: {trace}")
            continue
        final, slope = summarize(trace)
        print(f"{g:6.2f} {name:>15} {final:10.3e} {slope:7.3f}")
