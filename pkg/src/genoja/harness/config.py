"""Experiment configuration: INI-style text, parsed and resolved into solver objects.

A config has four sections::

    [stream]
    kind = gaussian-gev        # gaussian-gev | pca | cca-gaussian | deterministic
    dim = 20
    seed = 0                   # population seed; trial draws use run.base_seed + i

    [solver]
    name = gen-oja             # gen-oja | oja | two-step | gen-oja-averaged
    tau = 1
    warm_start = false

    [schedule]
    alpha_rule = constant
    alpha_factor = 1.0         # alpha = alpha_factor / R^2   (or give alpha directly)
    beta_rule = inverse-t
    beta_gamma = 3.0           # b = beta_gamma / gap        (or give beta directly)
    offset = 100

    [run]
    horizon = 100000
    trials = 10
    base_seed = 0
    checkpoints = 200

A ``[diagnose]`` section configures the ``diagnose`` subcommand instead of
``[solver]``/``[schedule]``.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from genoja.core import ProblemSpec, random_problem, read_matrix, solve_reference
from genoja.errors import ConfigError
from genoja.solvers import ALPHA_RULES, BETA_RULES, DEFAULT_GAMMA, SOLVERS, SolverConfig, StepSchedule
from genoja.streams import (
    KINDS,
    canonical_joint,
    deterministic_stream,
    make_cca_stream,
    make_gaussian_gev_stream,
    make_pca_stream,
)


@dataclass(frozen=True)
class StreamConfig:
    kind: str = "gaussian-gev"
    dim: int = None
    seed: int = 0
    clip: str = "true"
    matrix_a: str = None
    matrix_b: str = None
    min_gap: float = 0.1
    dx: int = None
    dy: int = None
    correlations: tuple = ()
    joint_seed: int = None
    whiten: bool = True


@dataclass(frozen=True)
class ScheduleConfig:
    alpha_rule: str = "constant"
    alpha: float = None
    alpha_factor: float = None
    beta_rule: str = "inverse-t"
    beta: float = None
    beta_gamma: float = None
    offset: float = 0.0


@dataclass(frozen=True)
class DiagnoseConfig:
    direction: str = "u2"
    alpha: float = None
    alpha_factor: float = 0.5
    horizon: int = 100_000
    replicas: int = 16
    seed: int = 0
    burn_in: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    stream: StreamConfig = field(default_factory=StreamConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    horizon: int = 100_000
    trials: int = 10
    base_seed: int = 0
    checkpoints: int = 200
    output: str = None
    diagnose: DiagnoseConfig = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"[run] trials must be >= 1, got {self.trials}")
        if self.horizon < 1:
            raise ConfigError(f"[run] horizon must be >= 1, got {self.horizon}")
        if self.checkpoints < 1:
            raise ConfigError(f"[run] checkpoints must be >= 1, got {self.checkpoints}")

    @property
    def seeds(self):
        return [self.base_seed + i for i in range(self.trials)]

    def with_overrides(self, **kw):
        """Replace run-level fields, ignoring ``None`` values."""
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw)


# -- text form ---------------------------------------------------------------


def _as_bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _as_floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _as_clip(s):
    low = s.strip().lower()
    if low in ("true", "false", "none"):
        return low
    value = float(low)
    if not value > 0:
        raise ValueError("clip radius must be positive")
    return repr(value)


def _choice(options):
    def parse(s):
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {s!r}")
        return s

    return parse


# section -> key -> (field name, parser)
_KEYS = {
    "stream": {
        "kind": ("kind", _choice(KINDS)),
        "dim": ("dim", int),
        "seed": ("seed", int),
        "clip": ("clip", _as_clip),
        "matrix_a": ("matrix_a", str),
        "matrix_b": ("matrix_b", str),
        "min_gap": ("min_gap", float),
        "dx": ("dx", int),
        "dy": ("dy", int),
        "correlations": ("correlations", _as_floats),
        "joint_seed": ("joint_seed", int),
        "whiten": ("whiten", _as_bool),
    },
    "solver": {
        "name": ("name", _choice(SOLVERS)),
        "tau": ("tau", int),
        "warm_start": ("warm_start", _as_bool),
    },
    "schedule": {
        "alpha_rule": ("alpha_rule", _choice(ALPHA_RULES)),
        "alpha": ("alpha", float),
        "alpha_factor": ("alpha_factor", float),
        "beta_rule": ("beta_rule", _choice(BETA_RULES)),
        "beta": ("beta", float),
        "beta_gamma": ("beta_gamma", float),
        "offset": ("offset", float),
    },
    "run": {
        "horizon": ("horizon", int),
        "trials": ("trials", int),
        "base_seed": ("base_seed", int),
        "checkpoints": ("checkpoints", int),
        "output": ("output", str),
    },
    "diagnose": {
        "direction": ("direction", str),
        "alpha": ("alpha", float),
        "alpha_factor": ("alpha_factor", float),
        "horizon": ("horizon", int),
        "replicas": ("replicas", int),
        "seed": ("seed", int),
        "burn_in": ("burn_in", float),
    },
}


def _key_lines(text):
    """Map ``(section, key)`` to its 1-based line number for error messages."""
    lines = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([^#;=\s][^=]*?)\s*=", line)
        if m and section is not None:
            lines[(section, m.group(1).strip().lower())] = n
    return lines


def parse_config(text, source="<config>", base_dir=None):
    """Parse config text into an :class:`ExperimentConfig`.

    Errors name the source, line and key. Relative matrix paths resolve
    against ``base_dir``.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from None
    where = _key_lines(text)

    def fail(section, key, msg):
        line = where.get((section, key))
        loc = f"{source}:{line}" if line else source
        raise ConfigError(f"{loc}: [{section}] {key}: {msg}")

    values = {}
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"{source}: unknown section [{section}]; expected one of {', '.join(_KEYS)}")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _KEYS[section]:
                fail(section, key, f"unknown key; expected one of {', '.join(_KEYS[section])}")
            name, conv = _KEYS[section][key]
            try:
                values[section][name] = conv(raw)
            except ValueError as err:
                fail(section, key, str(err))

    stream = values.get("stream", {})
    for key in ("matrix_a", "matrix_b"):
        if key in stream and base_dir is not None and not Path(stream[key]).is_absolute():
            stream[key] = str(Path(base_dir) / stream[key])

    sched = values.get("schedule", {})
    for a, b in (("alpha", "alpha_factor"), ("beta", "beta_gamma")):
        if a in sched and b in sched:
            fail("schedule", b, f"give either {a} or {b}, not both")

    try:
        solver = SolverConfig(**values.get("solver", {}))
    except ValueError as err:
        raise ConfigError(f"{source}: [solver] {err}") from None
    run = values.get("run", {})
    return ExperimentConfig(
        stream=StreamConfig(**stream),
        solver=solver,
        schedule=ScheduleConfig(**sched),
        diagnose=DiagnoseConfig(**values["diagnose"]) if "diagnose" in values else None,
        **run,
    )


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    return parse_config(text, source=str(path), base_dir=path.parent)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return " ".join(repr(float(x)) for x in value)
    return str(value)


def config_items(cfg):
    """Flat ``(section.key, text)`` pairs for every set field, in a fixed order."""
    items = []
    sections = [("stream", cfg.stream), ("solver", cfg.solver), ("schedule", cfg.schedule)]
    if cfg.diagnose is not None:
        sections.append(("diagnose", cfg.diagnose))
    for section, obj in sections:
        for key, (name, _) in _KEYS[section].items():
            value = getattr(obj, name)
            if value is None or value == ():
                continue
            items.append((f"{section}.{key}", _fmt(value)))
    for key in ("horizon", "trials", "base_seed", "checkpoints", "output"):
        value = getattr(cfg, key)
        if value is not None:
            items.append((f"run.{key}", _fmt(value)))
    return items


def to_text(cfg):
    """Serialize back to the INI form accepted by :func:`parse_config`."""
    out = []
    current = None
    for dotted, value in config_items(cfg):
        section, key = dotted.split(".", 1)
        if section != current:
            if current is not None:
                out.append("")
            out.append(f"[{section}]")
            current = section
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"


def set_dotted(cfg, dotted, raw):
    """Return a copy of ``cfg`` with ``section.key`` set from its text value."""
    section, _, key = dotted.partition(".")
    if section not in _KEYS or key not in _KEYS[section]:
        raise ConfigError(f"unknown grid key {dotted!r}")
    name, conv = _KEYS[section][key]
    try:
        value = conv(raw)
    except ValueError as err:
        raise ConfigError(f"grid key {dotted}: {err}") from None
    if section == "run":
        return dataclasses.replace(cfg, **{name: value})
    sub = getattr(cfg, section)
    if sub is None and section == "diagnose":
        sub = DiagnoseConfig()
    try:
        return dataclasses.replace(cfg, **{section: dataclasses.replace(sub, **{name: value})})
    except ValueError as err:
        raise ConfigError(f"grid key {dotted}: {err}") from None


# -- resolution --------------------------------------------------------------


def _clip_value(text):
    if text == "true":
        return True
    if text in ("false", "none"):
        return False
    return float(text)


def build_stream(sc):
    """Construct ``(StreamSpec, ProblemSpec)`` from a :class:`StreamConfig`."""
    clip = _clip_value(sc.clip)
    if sc.kind == "gaussian-gev":
        if sc.dim is None:
            raise ConfigError("[stream] dim is required for gaussian-gev")
        return make_gaussian_gev_stream(sc.dim, sc.seed, clip=clip)
    if sc.kind == "pca":
        if sc.matrix_a is not None:
            A = read_matrix(sc.matrix_a)
        elif sc.dim is not None:
            A = np.diag(1.0 / np.arange(1, sc.dim + 1))
        else:
            raise ConfigError("[stream] pca needs matrix_a or dim")
        return make_pca_stream(A, sc.seed, clip=clip)
    if sc.kind == "cca-gaussian":
        if sc.dx is None or sc.dy is None or not sc.correlations:
            raise ConfigError("[stream] cca-gaussian needs dx, dy and correlations")
        joint_seed = sc.seed if sc.joint_seed is None else sc.joint_seed
        joint = canonical_joint(sc.dx, sc.dy, sc.correlations, seed=joint_seed, whiten=sc.whiten)
        return make_cca_stream(sc.dx, sc.dy, joint, sc.seed, clip=clip)
    # deterministic
    if sc.matrix_a is not None:
        if sc.matrix_b is None:
            raise ConfigError("[stream] deterministic needs matrix_b alongside matrix_a")
        problem = ProblemSpec(read_matrix(sc.matrix_a), read_matrix(sc.matrix_b))
    elif sc.dim is not None:
        problem = random_problem(sc.dim, np.random.default_rng(sc.seed), min_gap=sc.min_gap)
    else:
        raise ConfigError("[stream] deterministic needs matrix_a/matrix_b or dim")
    return deterministic_stream(problem, sc.seed), problem


def resolve_schedule(sc, stream, reference):
    """Turn factor-style step sizes into a concrete :class:`StepSchedule`.

    ``alpha_factor`` multiplies ``1 / R^2`` and ``beta_gamma`` multiplies
    ``1 / gap``; when neither form is given the defaults are ``1 / R^2`` and
    ``6 / gap``.
    """
    if sc.alpha is not None:
        alpha = sc.alpha
    else:
        alpha = (1.0 if sc.alpha_factor is None else sc.alpha_factor) / stream.radius_sq
    if sc.beta is not None:
        beta = sc.beta
    else:
        gamma = DEFAULT_GAMMA if sc.beta_gamma is None else sc.beta_gamma
        if not reference.gap_usable:
            raise ConfigError(f"[schedule] eigengap {reference.gap:.3e} too small for beta_gamma; give beta directly")
        beta = gamma / reference.gap
    return StepSchedule(alpha_rule=sc.alpha_rule, alpha=alpha, beta_rule=sc.beta_rule, beta=beta, offset=sc.offset)


@dataclass(frozen=True, eq=False)
class Resolved:
    stream: object
    problem: ProblemSpec
    reference: object
    schedule: StepSchedule


def resolve(cfg):
    stream, problem = build_stream(cfg.stream)
    reference = solve_reference(problem)
    return Resolved(stream, problem, reference, resolve_schedule(cfg.schedule, stream, reference))
