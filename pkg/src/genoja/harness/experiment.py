"""Execute configured experiments and diagnostics; optional process-level parallelism."""

from __future__ import annotations

import io
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from genoja.diagnostics import ChainProbe, check_step, mixing_decay_probe, stationary_mean_check
from genoja.errors import ConfigError, GenOjaError, NotFittable, StepOutOfRange
from genoja.harness.config import config_items, resolve
from genoja.solvers import run
from genoja.trace import fit_tail_slope, log_checkpoints

THREADS_ENV = "GENOJA_THREADS"


def run_experiment(cfg):
    """Run every trial of ``cfg`` and return the trace with config and resolved values in ``meta``."""
    res = resolve(cfg)
    checkpoints = log_checkpoints(cfg.horizon, cfg.checkpoints)
    trace = run(cfg.solver, res.stream, res.schedule, cfg.horizon, checkpoints, seeds=cfg.seeds, reference=res.reference)
    wall = trace.meta.pop("wall_clock")
    meta = {f"config.{k}": v for k, v in config_items(cfg)}
    meta.update(trace.meta)
    meta["alpha"] = repr(res.schedule.alpha)
    meta["beta"] = repr(res.schedule.beta)
    meta["samples_consumed"] = str(trace.samples_consumed)
    meta["diverged_at"] = " ".join("-" if t is None else str(t) for t in trace.diverged_at)
    meta["wall_clock"] = wall
    trace.meta = meta
    return trace


def summarize(trace, tail_fraction=0.5):
    """``(final mean error, tail slope)``; the slope is NaN when the tail cannot be fitted."""
    final = float(trace.mean()[-1])
    try:
        slope = fit_tail_slope(trace, tail_fraction)
    except NotFittable:
        slope = float("nan")
    return final, slope


def thread_cap():
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _guarded(cfg):
    try:
        return run_experiment(cfg)
    except GenOjaError as err:
        return err
    except ValueError as err:
        return err


def run_many(cfgs, workers=None):
    """Run configs in parallel (at most ``GENOJA_THREADS`` processes), results in input order.

    A config that fails yields its exception in place of a trace.
    """
    cfgs = list(cfgs)
    workers = min(thread_cap() if workers is None else workers, len(cfgs))
    if workers <= 1:
        return [_guarded(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_guarded, cfgs))


# -- diagnose ---------------------------------------------------------------


def _direction(spec, reference, dim):
    if spec in ("u1", "u2"):
        j = int(spec[1]) - 1
        if j >= dim:
            raise ConfigError(f"[diagnose] direction {spec} needs d >= {j + 1}")
        v = reference.right_vectors[:, j]
    elif spec == "ones":
        v = np.ones(dim)
    else:
        try:
            v = np.array([float(x) for x in spec.replace(",", " ").split()])
        except ValueError:
            raise ConfigError(f"[diagnose] direction must be u1, u2, ones or {dim} numbers; got {spec!r}") from None
        if v.shape != (dim,):
            raise ConfigError(f"[diagnose] direction needs {dim} entries, got {v.size}")
    norm = np.linalg.norm(v)
    if norm == 0:
        return v
    return v / norm


def diagnose(cfg):
    """Run the stationary-mean and mixing probes for ``cfg.diagnose``; return CSV text."""
    dc = cfg.diagnose
    if dc is None:
        raise ConfigError("diagnose needs a [diagnose] section")
    res = resolve(cfg)
    stream = res.stream
    alpha = dc.alpha if dc.alpha is not None else dc.alpha_factor / stream.radius_sq
    try:
        check_step(alpha, stream.radius_sq)
    except StepOutOfRange as err:
        raise ConfigError(f"[diagnose] {err}") from None
    v = _direction(dc.direction, res.reference, stream.dim)
    probe = ChainProbe(v, alpha, dc.horizon, replicas=dc.replicas, seed=dc.seed, burn_in_fraction=dc.burn_in)
    stat = stationary_mean_check(probe, stream)
    mix = mixing_decay_probe(probe, stream)

    buf = io.StringIO()
    for k, val in config_items(cfg):
        if not k.startswith(("stream.", "diagnose.")):
            continue
        buf.write(f"# meta: config.{k}={val}\n")
    buf.write(f"# meta: radius_sq={stream.radius_sq!r}\n")
    buf.write(f"# meta: alpha={alpha!r}\n")
    buf.write("# section: stationary\n")
    buf.write("quantity,value\n")
    buf.write(f"rel_err,{stat.rel_err!r}\n")
    for i, (m, t) in enumerate(zip(stat.empirical_mean, stat.target)):
        buf.write(f"mean_{i},{float(m)!r}\n")
        buf.write(f"target_{i},{float(t)!r}\n")
    buf.write("# section: mixing\n")
    buf.write("quantity,value\n")
    buf.write(f"slope,{mix.slope!r}\n")
    buf.write(f"slope_stderr,{mix.slope_stderr!r}\n")
    buf.write(f"fit_points,{mix.fit_points}\n")
    buf.write("# section: mixing_curve\n")
    buf.write("k,distance\n")
    for k, dist in zip(mix.k, mix.distance):
        buf.write(f"{int(k)},{float(dist)!r}\n")
    return buf.getvalue(), stat, mix
