"""Command-line entry point: ``genoja {run,sweep,diagnose,preset}``.

Exit codes: 0 success, 2 usage or config error, 3 numerical failure (every
trial diverged, or every sweep point failed). CSV output is written even
when the run fails numerically.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import itertools
import math
import re
import sys
from pathlib import Path

from genoja.errors import ConfigError, GenOjaError
from genoja.harness.config import load_config, set_dotted, to_text
from genoja.harness.experiment import diagnose, run_experiment, run_many, summarize
from genoja.harness.presets import PRESETS, preset
from genoja.trace import fit_tail_slope

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _summary_line(label, trace):
    final, slope = summarize(trace)
    n_div = sum(t is not None for t in trace.diverged_at)
    parts = [
        f"final_mean={final:.4e}",
        f"tail_slope={slope:.3f}",
        f"samples={trace.samples_consumed}",
        f"trials={trace.n_trials}",
        f"diverged={n_div}",
        f"wall={trace.meta.get('wall_clock', '?')}s",
    ]
    if trace.avg_errors is not None:
        avg_final, avg_slope = _avg_summary(trace)
        parts[2:2] = [f"avg_final_mean={avg_final:.4e}", f"avg_tail_slope={avg_slope:.3f}"]
    return (f"{label}: " if label else "") + " ".join(parts)


def _write(path, text):
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _apply_overrides(cfg, args):
    return cfg.with_overrides(base_seed=args.seed, trials=args.trials, horizon=args.horizon)


def _say(args, msg, stream=None):
    if not args.quiet:
        print(msg, file=stream or sys.stdout)


def cmd_run(args):
    cfg = _apply_overrides(load_config(args.config), args)
    out = args.out or cfg.output
    trace = run_experiment(cfg)
    text = trace.to_csv()
    if out:
        _write(out, text)
        _say(args, _summary_line("", trace))
    else:
        sys.stdout.write(text)
        _say(args, _summary_line("", trace), sys.stderr)
    if trace.all_diverged:
        print(f"error: all {trace.n_trials} trials diverged", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _slug(label):
    return re.sub(r"[^A-Za-z0-9.-]+", "_", label.replace("*", "star")).strip("_")


def _run_bundle(entries, out_dir, args, key_columns=()):
    """Run labelled configs, write per-entry CSVs and a summary table; return the exit code."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_many(cfg for _, cfg, _ in entries)
    rows = []
    failures = 0
    for (label, cfg, keys), result in zip(entries, results):
        stem = _slug(label)
        (out_dir / f"{stem}.ini").write_text(to_text(cfg))
        row = {"point": label, **dict(zip(key_columns, keys))}
        if isinstance(result, Exception):
            failures += 1
            row.update(final_mean="", tail_slope="", samples_consumed="", status=f"error: {result}")
            _say(args, f"{label}: error: {result}", sys.stderr)
        else:
            (out_dir / f"{stem}.csv").write_text(result.to_csv())
            final, slope = summarize(result)
            status = "diverged" if result.all_diverged else "ok"
            failures += result.all_diverged
            row.update(
                final_mean=repr(final),
                tail_slope=repr(slope),
                samples_consumed=result.samples_consumed,
                status=status,
            )
            if result.avg_errors is not None:
                avg_final, avg_slope = _avg_summary(result)
                row.update(avg_final_mean=repr(avg_final), avg_tail_slope=repr(avg_slope))
            _say(args, _summary_line(label, result))
        rows.append(row)
    columns = ["point", *key_columns, "final_mean", "tail_slope", "samples_consumed", "status"]
    if any("avg_final_mean" in r for r in rows):
        columns += ["avg_final_mean", "avg_tail_slope"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, restval="", lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    (out_dir / "summary.csv").write_text(buf.getvalue())
    return EXIT_NUMERIC if failures == len(entries) else EXIT_OK


def _avg_summary(trace):
    avg = trace.avg_mean()
    try:
        slope = fit_tail_slope(trace, column=avg)
    except GenOjaError:
        slope = math.nan
    return float(avg[-1]), slope


def cmd_preset(args):
    if args.name not in PRESETS:
        raise ConfigError(f"unknown preset {args.name!r}; expected one of {', '.join(PRESETS)}")
    entries = [(label, _apply_overrides(cfg, args), ()) for label, cfg in preset(args.name)]
    return _run_bundle(entries, args.out or Path("results") / args.name, args)


def _parse_grid(specs):
    keys, values = [], []
    for spec in specs:
        key, sep, raw = spec.partition("=")
        if not sep or not raw.strip():
            raise ConfigError(f"grid entry must look like section.key=v1,v2,...; got {spec!r}")
        keys.append(key.strip())
        values.append([v.strip() for v in raw.split(",") if v.strip()])
    return keys, values


def cmd_sweep(args):
    base = _apply_overrides(load_config(args.config), args)
    keys, values = _parse_grid(args.grid)
    entries = []
    for i, combo in enumerate(itertools.product(*values)):
        cfg = base
        for key, raw in zip(keys, combo):
            cfg = set_dotted(cfg, key, raw)
        entries.append((f"point_{i}", cfg, combo))
    return _run_bundle(entries, args.out or "sweep", args, key_columns=keys)


def cmd_diagnose(args):
    cfg = load_config(args.config)
    if args.seed is not None and cfg.diagnose is not None:
        cfg = dataclasses.replace(cfg, diagnose=dataclasses.replace(cfg.diagnose, seed=args.seed))
    text, stat, mix = diagnose(cfg)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    summary = f"stationary_rel_err={stat.rel_err:.3e} mixing_slope={mix.slope:.4g} fit_points={mix.fit_points}"
    _say(args, summary, sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="genoja", description="Streaming generalized eigenvector experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--out", help="output path (file for run/diagnose, directory for sweep/preset)")
        p.add_argument("--trials", type=int, help="override the number of trials")
        p.add_argument("--horizon", type=int, help="override the sample budget T")
        p.add_argument("--quiet", action="store_true", help="suppress summary lines")

    common(sub.add_parser("run", help="run one configured experiment"))
    p = sub.add_parser("sweep", help="run a config over a parameter grid")
    common(p)
    p.add_argument("--grid", action="append", required=True, metavar="SECTION.KEY=V1,V2", help="grid axis (repeatable)")
    common(sub.add_parser("diagnose", help="stationary-mean and mixing probes"))
    p = sub.add_parser("preset", help="run a named experiment bundle")
    p.add_argument("name", help=f"one of {', '.join(PRESETS)}")
    common(p, config=False)
    return parser


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "diagnose": cmd_diagnose, "preset": cmd_preset}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except GenOjaError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
