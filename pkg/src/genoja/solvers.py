"""Gen-Oja, Oja, the alternating two-step baseline, and step-size schedules.

All update functions accept vectors with an optional leading trial axis, so
``run`` advances every trial of an experiment in one vectorized loop. Rows
never interact; trial ``i`` is driven only by its own seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from genoja.core import sin2_b, solve_reference
from genoja.errors import DegenerateDirection, InvalidSchedule, NotStarted, NumericalDivergence
from genoja.streams import init_rng, open_stream, stack_blocks
from genoja.trace import Trace, log_checkpoints

ALPHA_RULES = ("constant", "log-decay")
BETA_RULES = ("inverse-t", "inverse-sqrt-t", "constant")
SOLVERS = ("gen-oja", "oja", "two-step", "gen-oja-averaged")
DEFAULT_GAMMA = 6.0
CHUNK = 4096


@dataclass(frozen=True)
class StepSchedule:
    """Rules for the fast step ``alpha_t`` and the slow step ``beta_t``.

    ``alpha`` is the constant step or the numerator ``c`` of
    ``c / max(1, ln(offset + t))``. ``beta`` is the numerator ``b`` of
    ``b / (offset + t)`` or ``b / sqrt(offset + t)``, or the constant step.
    """

    alpha_rule: str = "constant"
    alpha: float = 1.0
    beta_rule: str = "inverse-t"
    beta: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.alpha_rule not in ALPHA_RULES:
            raise InvalidSchedule(f"alpha_rule must be one of {ALPHA_RULES}, got {self.alpha_rule!r}")
        if self.beta_rule not in BETA_RULES:
            raise InvalidSchedule(f"beta_rule must be one of {BETA_RULES}, got {self.beta_rule!r}")
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidSchedule(f"{name} must be positive and finite, got {value!r}")
        if not (math.isfinite(self.offset) and self.offset >= 0):
            raise InvalidSchedule(f"offset must be >= 0, got {self.offset!r}")

    @classmethod
    def gap_scaled(cls, reference, gamma=DEFAULT_GAMMA, **kwargs):
        """Schedule with ``b = gamma / gap`` for the given reference spectrum."""
        if not reference.gap_usable:
            raise InvalidSchedule(f"eigengap {reference.gap:.3e} is too small for a gap-scaled step")
        return cls(beta=gamma / reference.gap, **kwargs)


def schedule_at(schedule, t):
    """Return ``(alpha_t, beta_t)`` for iteration ``t >= 1``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    s = schedule.offset + t
    if schedule.alpha_rule == "constant":
        alpha = schedule.alpha
    else:
        alpha = schedule.alpha / max(1.0, math.log(s))
    if schedule.beta_rule == "inverse-t":
        beta = schedule.beta / s
    elif schedule.beta_rule == "inverse-sqrt-t":
        beta = schedule.beta / math.sqrt(s)
    else:
        beta = schedule.beta
    return alpha, beta


@dataclass(frozen=True, eq=False)
class SolverState:
    """Coupled iterates; ``v_bar`` is None unless iterate averaging is on."""

    w: np.ndarray
    v: np.ndarray
    v_bar: np.ndarray = None
    t: int = 0


def unit_sphere(rng, d, n=None):
    shape = (d,) if n is None else (n, d)
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def initial_state(seed, d, averaging=False):
    """``w_0`` then ``v_0``, independently uniform on the unit sphere."""
    rng = init_rng(seed)
    w = unit_sphere(rng, d)
    v = unit_sphere(rng, d)
    return SolverState(w=w, v=v, v_bar=v.copy() if averaging else None, t=0)


def _normalize(x, t):
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    if not np.all(np.isfinite(n)):
        raise NumericalDivergence(f"non-finite iterate at iteration {t}", iteration=t)
    if np.any(n == 0):
        raise DegenerateDirection(f"zero update direction at iteration {t}")
    return x / n


def _check_finite(state):
    if not (np.all(np.isfinite(state.w)) and np.all(np.isfinite(state.v))):
        raise NumericalDivergence(f"non-finite iterate at iteration {state.t}", iteration=state.t)
    return state


def gen_oja_step(state, sample, alpha, beta):
    """One iteration: SGD step on ``w``, Oja-style step on ``v``, renormalize ``v``."""
    t = state.t + 1
    with np.errstate(over="ignore", invalid="ignore"):
        w = state.w - alpha * (sample.apply_B(state.w) - sample.apply_A(state.v))
        v = _normalize(state.v + beta * w, t)
    v_bar = state.v_bar
    if v_bar is not None:
        v_bar = v_bar + (v - v_bar) / t
    return _check_finite(SolverState(w=w, v=v, v_bar=v_bar, t=t))


def oja_step(v, A_t, beta):
    """``normalize(v + beta A_t v)``; ``A_t`` may be a matrix or a sample."""
    Av = A_t.apply_A(v) if hasattr(A_t, "apply_A") else np.asarray(A_t) @ v
    return _normalize(v + beta * Av, None)


def two_step_baseline(v, w, cursor, tau, alpha_inner, beta, warm_start=False):
    """One outer iteration of the alternating baseline.

    Runs ``tau`` SGD steps on the least-squares problem for ``B^{-1} A v`` with
    fresh samples from ``cursor``, averages the inner iterates, then takes one
    Oja-style step along the average. Returns ``(v_new, w_last)``; pass
    ``w_last`` back in to warm-start the next outer iteration.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if not warm_start:
        w = np.zeros_like(v)
    w_sum = np.zeros_like(v)
    for _ in range(tau):
        sample = next(cursor)
        w = w - alpha_inner * (sample.apply_B(w) - sample.apply_A(v))
        w_sum += w
    return _normalize(v + beta * (w_sum / tau), None), w


def streaming_average(state, mode="uniform-tail"):
    """Reported direction: the normalized running average, or ``v`` itself for ``mode='none'``."""
    if mode == "none":
        return state.v
    if mode != "uniform-tail":
        raise ValueError(f"unknown averaging mode {mode!r}")
    if state.t == 0 or state.v_bar is None:
        raise NotStarted("no averaged iterate before the first step")
    return state.v_bar / np.linalg.norm(state.v_bar, axis=-1, keepdims=True)


# -- driver ----------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    name: str = "gen-oja"
    tau: int = 1
    warm_start: bool = False

    def __post_init__(self):
        if self.name not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.name!r}")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")

    @property
    def averaging(self):
        return self.name == "gen-oja-averaged"


def _errors(u1, V, B):
    out = np.full(V.shape[0], np.nan)
    for k, v in enumerate(V):
        if np.all(np.isfinite(v)):
            out[k] = sin2_b(u1, v, B)
    return out


def run(solver, stream, schedule, horizon, checkpoints=None, seeds=None, reference=None):
    """Run one trial per seed over ``horizon`` samples and record ``sin^2_B(u_1, v_t)``.

    ``checkpoints`` defaults to 200 log-spaced points. A trial whose iterates
    stop being finite is frozen and reported as NaN from then on; the loop
    stops early once every trial has diverged.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if checkpoints is None:
        checkpoints = log_checkpoints(horizon)
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    if checkpoints.size == 0 or checkpoints[0] < 1 or checkpoints[-1] > horizon or np.any(np.diff(checkpoints) <= 0):
        raise ValueError("checkpoints must be strictly increasing within [1, horizon]")
    seeds = [stream.seed] if seeds is None else [int(s) for s in seeds]
    if reference is None:
        reference = solve_reference(stream.population)
    if solver.name == "two-step" and horizon % solver.tau:
        raise ValueError(f"horizon {horizon} is not a multiple of tau={solver.tau}")

    d = stream.dim
    states = [initial_state(s, d) for s in seeds]
    w = np.stack([s.w for s in states])
    v = np.stack([s.v for s in states])
    v_bar = v.copy() if solver.averaging else None
    streams = [open_stream(stream, s) for s in seeds]
    u1, B = reference.u1, stream.population.B
    K = len(seeds)

    errors = np.full((checkpoints.size, K), np.nan)
    avg_errors = np.full((checkpoints.size, K), np.nan) if solver.averaging else None
    diverged_at = [None] * K
    alive = np.ones(K, dtype=bool)

    tau = solver.tau
    w_sum = np.zeros_like(w)
    ci = 0
    t = 0
    started = time.perf_counter()
    with np.errstate(over="ignore", invalid="ignore"):
        while t < horizon and alive.any():
            block = stack_blocks([st.draw_block(min(CHUNK, horizon - t)) for st in streams])
            for i in range(len(block)):
                t += 1
                sample = block[i]
                if solver.name == "two-step":
                    if (t - 1) % tau == 0:
                        if not solver.warm_start:
                            w = np.zeros_like(w)
                        w_sum[:] = 0.0
                    alpha, _ = schedule_at(schedule, t)
                    w = w - alpha * (sample.apply_B(w) - sample.apply_A(v))
                    w_sum += w
                    if t % tau == 0:
                        _, beta = schedule_at(schedule, t // tau)
                        v = v + beta * (w_sum / tau)
                        norms = np.linalg.norm(v, axis=-1, keepdims=True)
                        v = _divide_rows(v, norms, t)
                elif solver.name == "oja":
                    _, beta = schedule_at(schedule, t)
                    v = v + beta * sample.apply_A(v)
                    v = _divide_rows(v, np.linalg.norm(v, axis=-1, keepdims=True), t)
                else:
                    alpha, beta = schedule_at(schedule, t)
                    w = w - alpha * (sample.apply_B(w) - sample.apply_A(v))
                    v = v + beta * w
                    v = _divide_rows(v, np.linalg.norm(v, axis=-1, keepdims=True), t)
                    if v_bar is not None:
                        v_bar += (v - v_bar) / t

                finite = np.isfinite(v).all(axis=1) & np.isfinite(w).all(axis=1)
                if not finite[alive].all():
                    for k in np.flatnonzero(alive & ~finite):
                        diverged_at[k] = t
                    alive &= finite
                    v[~alive] = np.nan
                    w[~alive] = np.nan

                if ci < checkpoints.size and t == checkpoints[ci]:
                    errors[ci] = _errors(u1, v, B)
                    if v_bar is not None:
                        errors_avg = _errors(u1, v_bar, B)
                        errors_avg[~alive] = np.nan
                        avg_errors[ci] = errors_avg
                    ci += 1
                if not alive.any():
                    break

    return Trace(
        t=checkpoints,
        errors=errors,
        avg_errors=avg_errors,
        samples_consumed=t,
        diverged_at=diverged_at,
        meta={
            "lambda1": repr(reference.lambda1),
            "gap": repr(reference.gap),
            "radius_sq": repr(stream.radius_sq),
            "wall_clock": f"{time.perf_counter() - started:.3f}",
        },
    )


def _divide_rows(v, norms, t):
    if np.any(norms == 0):
        raise DegenerateDirection(f"zero update direction at iteration {t}")
    out = v / norms
    # an overflowing norm would otherwise map the row to an all-zero vector
    out[~np.isfinite(norms[:, 0])] = np.nan
    return out


def run_single(solver, stream, schedule, horizon, seed=None, checkpoints=None):
    """Convenience wrapper: one trial, seeded by ``seed`` (default: the stream's own)."""
    seed = stream.seed if seed is None else seed
    return run(solver, replace(stream, seed=seed), schedule, horizon, checkpoints, seeds=[seed])
