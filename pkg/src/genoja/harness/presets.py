"""Named experiment bundles.

The ``fig1-*`` presets share one problem: the d=20 gaussian-gev stream with
population seed 0 (spectra 1/i, Haar eigenbases), T=1e5 samples and ten
trials seeded 0..9. Step sizes are ``alpha* = 1/R^2`` and
``beta* = 3/gap`` with a ``1/(100 + t)`` decay. Full-length runs (T=1e6)
are available by overriding the horizon; at 1e5 the tail slope is already
well identified.
"""

from __future__ import annotations

import dataclasses

from genoja.harness.config import ExperimentConfig, ScheduleConfig, StreamConfig
from genoja.solvers import SolverConfig

FIG1_STREAM = StreamConfig(kind="gaussian-gev", dim=20, seed=0)
FIG1_GAMMA = 3.0
FIG1_OFFSET = 100.0
FIG1_SCHEDULE = ScheduleConfig(alpha_factor=1.0, beta_gamma=FIG1_GAMMA, offset=FIG1_OFFSET)
FIG1_BASE = ExperimentConfig(stream=FIG1_STREAM, schedule=FIG1_SCHEDULE, horizon=100_000, trials=10)

TWO_STEP_TAUS = (10, 1000, 10000)
ALPHA_FACTORS = (("alpha*", 1.0), ("alpha*/8", 1 / 8), ("alpha*/16", 1 / 16))
BETA_VARIANTS = (
    ("beta*/t", "inverse-t", FIG1_GAMMA),
    ("beta*/16t", "inverse-t", FIG1_GAMMA / 16),
    ("beta*/sqrt(t)", "inverse-sqrt-t", FIG1_GAMMA),
    ("beta*/16sqrt(t)", "inverse-sqrt-t", FIG1_GAMMA / 16),
)


def _sched(**kw):
    return dataclasses.replace(FIG1_SCHEDULE, **kw)


def fig1_left():
    """Gen-Oja against the alternating two-step baseline at equal sample budget."""
    out = [("gen-oja", FIG1_BASE)]
    for tau in TWO_STEP_TAUS:
        cfg = dataclasses.replace(
            FIG1_BASE, solver=SolverConfig("two-step", tau=tau), schedule=_sched(alpha_factor=0.5)
        )
        out.append((f"two-step-tau{tau}", cfg))
    return out


def fig1_middle():
    """Gen-Oja with the fast step shrunk by 1, 8 and 16."""
    return [(label, dataclasses.replace(FIG1_BASE, schedule=_sched(alpha_factor=f))) for label, f in ALPHA_FACTORS]


def fig1_right():
    """Four slow-step decays, each reporting both the raw and the averaged iterate."""
    solver = SolverConfig("gen-oja-averaged")
    return [
        (label, dataclasses.replace(FIG1_BASE, solver=solver, schedule=_sched(beta_rule=rule, beta_gamma=g)))
        for label, rule, g in BETA_VARIANTS
    ]


def cca():
    """Gen-Oja on the CCA block stream: dx = dy = 2, canonical correlations 0.9 and 0.5."""
    stream = StreamConfig(
        kind="cca-gaussian", seed=0, dx=2, dy=2, correlations=(0.9, 0.5), joint_seed=7, whiten=False
    )
    schedule = ScheduleConfig(alpha_rule="log-decay", alpha_factor=0.5, beta_gamma=6.0, offset=100.0)
    return [("gen-oja", ExperimentConfig(stream=stream, schedule=schedule, horizon=100_000, trials=10))]


PRESETS = {"fig1-left": fig1_left, "fig1-middle": fig1_middle, "fig1-right": fig1_right, "cca": cca}


def preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}") from None
