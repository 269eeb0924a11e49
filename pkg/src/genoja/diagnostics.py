"""Empirical checks on the fixed-v Markov chain and the prediction error.

For a frozen direction ``v`` the fast iterate follows the linear recursion
``w_k = w_{k-1} - alpha (B_k w_{k-1} - A_k v)`` whose stationary mean is
``B^{-1} A v``. These probes run that chain over independent replicas (one
trial-axis row each, replica ``r`` seeded with ``seed + r``) and compare it with
the target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from genoja.errors import StepOutOfRange
from genoja.solvers import initial_state, schedule_at
from genoja.streams import open_stream, stack_blocks

CHUNK = 4096


@dataclass(frozen=True, eq=False)
class ChainProbe:
    v_fixed: np.ndarray
    alpha: float
    horizon: int
    replicas: int = 16
    seed: int = 0
    burn_in_fraction: float = 0.5
    w0: np.ndarray = None


@dataclass(frozen=True, eq=False)
class StationaryReport:
    empirical_mean: np.ndarray
    target: np.ndarray
    rel_err: float


@dataclass(frozen=True, eq=False)
class MixingReport:
    k: np.ndarray
    distance: np.ndarray
    slope: float
    slope_stderr: float
    fit_points: int


@dataclass(frozen=True, eq=False)
class PredictionError:
    xi: np.ndarray
    norm: float
    t: int


@dataclass(frozen=True, eq=False)
class PredictionErrorReport:
    t: np.ndarray
    norms: np.ndarray
    first_half_mean: float
    second_half_mean: float


def stationary_target(problem, v):
    return np.linalg.solve(problem.B, problem.A @ np.asarray(v, dtype=float))


def check_step(alpha, radius_sq):
    if not 0 < alpha <= 2.0 / radius_sq:
        raise StepOutOfRange(f"alpha={alpha!r} outside (0, 2/R^2] = (0, {2.0 / radius_sq!r}] for R^2={radius_sq!r}")


def _chain(probe, stream, record):
    """Advance all replicas of the fixed-v chain, calling ``record(k, W)`` after each step."""
    check_step(probe.alpha, stream.radius_sq)
    d = stream.dim
    v = np.asarray(probe.v_fixed, dtype=float)
    seeds = [probe.seed + r for r in range(probe.replicas)]
    streams = [open_stream(stream, s) for s in seeds]
    w0 = np.zeros(d) if probe.w0 is None else np.asarray(probe.w0, dtype=float)
    W = np.tile(w0, (probe.replicas, 1))
    V = np.tile(v, (probe.replicas, 1))
    k = 0
    while k < probe.horizon:
        block = stack_blocks([st.draw_block(min(CHUNK, probe.horizon - k)) for st in streams])
        for i in range(len(block)):
            sample = block[i]
            W = W - probe.alpha * (sample.apply_B(W) - sample.apply_A(V))
            k += 1
            record(k, W)
    return W


def stationary_mean_check(probe, stream):
    """Time-and-replica average of the chain after burn-in versus ``B^{-1} A v``."""
    burn = int(probe.horizon * probe.burn_in_fraction)
    acc = np.zeros(stream.dim)
    count = 0

    def record(k, W):
        nonlocal acc, count
        if k > burn:
            acc += W.sum(axis=0)
            count += W.shape[0]

    _chain(probe, stream, record)
    mean = acc / count
    target = stationary_target(stream.population, probe.v_fixed)
    scale = np.linalg.norm(target)
    err = np.linalg.norm(mean - target)
    rel = err / scale if scale > 0 else err
    return StationaryReport(empirical_mean=mean, target=target, rel_err=float(rel))


def geometric_ks(horizon, count=60, dense=32):
    """Step indices for the mixing curve: every step up to ``dense``, then log-spaced to ``horizon``."""
    head = np.arange(0, min(dense, horizon) + 1)
    tail = np.rint(np.geomspace(1, horizon, count)).astype(np.int64)
    return np.unique(np.concatenate([head, tail]))


def mixing_decay_probe(probe, stream, ks=None, floor=None, floor_factor=1.5):
    """Distance of the replica-mean iterate from ``B^{-1} A v`` at steps ``ks``.

    The log-distance slope is fitted over the leading points above the noise
    floor, taken as ``floor_factor`` times the median distance over the last
    quarter of ``ks`` unless given.
    """
    ks = geometric_ks(probe.horizon) if ks is None else np.asarray(ks, dtype=np.int64)
    target = stationary_target(stream.population, probe.v_fixed)
    dist = np.empty(ks.size)
    lookup = {int(k): j for j, k in enumerate(ks)}
    w0 = np.zeros(stream.dim) if probe.w0 is None else np.asarray(probe.w0, dtype=float)
    if 0 in lookup:
        dist[lookup[0]] = np.linalg.norm(w0 - target)

    def record(k, W):
        j = lookup.get(k)
        if j is not None:
            dist[j] = np.linalg.norm(W.mean(axis=0) - target)

    _chain(ChainProbe(probe.v_fixed, probe.alpha, int(ks.max()), probe.replicas, probe.seed, probe.burn_in_fraction, w0), stream, record)

    if floor is None:
        floor = floor_factor * float(np.median(dist[-max(1, ks.size // 4):]))
    keep = dist > floor
    # cut at the first point that reaches the floor
    if not keep.all():
        keep[np.argmin(keep):] = False
    slope, stderr = np.nan, np.nan
    if keep.sum() >= 3:
        fit = stats.linregress(ks[keep], np.log(dist[keep]))
        slope, stderr = float(fit.slope), float(fit.stderr)
    return MixingReport(k=ks, distance=dist, slope=slope, slope_stderr=stderr, fit_points=int(keep.sum()))


def prediction_error(w_t, v_prev, M):
    """``xi_t = w_t - B^{-1} A v_{t-1}`` with ``M = B^{-1} A`` precomputed."""
    xi = np.asarray(w_t) - M @ np.asarray(v_prev)
    return xi


def prediction_error_trace(stream, schedule, horizon, seed=None, freeze_v=False, w0=None, v0=None):
    """Run Gen-Oja once and record ``||xi_t||`` at every step.

    ``freeze_v=True`` skips the slow update, leaving the plain fixed-v chain.
    """
    problem = stream.population
    M = np.linalg.solve(problem.B, problem.A)
    seed = stream.seed if seed is None else seed
    state = initial_state(seed, stream.dim)
    w = state.w if w0 is None else np.asarray(w0, dtype=float)
    v = state.v if v0 is None else np.asarray(v0, dtype=float) / np.linalg.norm(v0)
    src = open_stream(stream, seed)
    norms = np.empty(horizon)
    t = 0
    while t < horizon:
        block = src.draw_block(min(CHUNK, horizon - t))
        for i in range(len(block)):
            sample = block[i]
            t += 1
            alpha, beta = schedule_at(schedule, t)
            w = w - alpha * (sample.apply_B(w) - sample.apply_A(v))
            norms[t - 1] = np.linalg.norm(w - M @ v)
            if not freeze_v:
                v = v + beta * w
                v = v / np.linalg.norm(v)
    half = horizon // 2
    return PredictionErrorReport(
        t=np.arange(1, horizon + 1),
        norms=norms,
        first_half_mean=float(norms[:half].mean()) if half else float("nan"),
        second_half_mean=float(norms[half:].mean()),
    )


def batch_means_stderr(x, n_batches=20):
    """Standard error of the mean of a correlated series via non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    size = x.size // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))
