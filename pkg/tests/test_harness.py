import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genoja.core import write_matrix
from genoja.errors import ConfigError, NotFittable
from genoja.harness import presets
from genoja.harness.cli import main
from genoja.harness.config import (
    ExperimentConfig,
    parse_config,
    resolve,
    set_dotted,
    to_text,
)
from genoja.harness.experiment import run_experiment, run_many
from genoja.trace import Trace, fit_tail_slope, log_checkpoints

SMALL = """\
[stream]
kind = gaussian-gev
dim = 5
seed = 1

[schedule]
alpha_factor = 0.5
beta_gamma = 3.0
offset = 10

[run]
horizon = 3000
trials = 3
base_seed = 4
checkpoints = 40
"""


def _body(text):
    return "".join(line + "\n" for line in text.splitlines() if not line.startswith("#"))


def _write_cfg(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# -- checkpoints and slopes --------------------------------------------------


@given(st.integers(1, 10**7), st.integers(1, 400))
@settings(max_examples=200, deadline=None)
def test_checkpoint_grid(horizon, count):
    grid = log_checkpoints(horizon, count)
    assert grid[-1] == horizon
    assert grid[0] == (1 if count > 1 else horizon)
    assert np.all(np.diff(grid) > 0)
    assert grid.size <= count


def test_default_checkpoint_grid_size():
    grid = log_checkpoints(100_000)
    assert 150 <= grid.size <= 200
    assert grid[0] == 1 and grid[-1] == 100_000


def _trace(t, y):
    t = np.asarray(t)
    return Trace(t=t, errors=np.asarray(y, dtype=float).reshape(-1, 1))


def test_slope_of_exact_power_law():
    t = log_checkpoints(10**5, 50)
    assert fit_tail_slope(_trace(t, 1.0 / t)) == pytest.approx(-1.0, abs=1e-9)


def test_slope_of_constant():
    t = log_checkpoints(10**5, 50)
    assert fit_tail_slope(_trace(t, np.full(t.size, 0.3))) == pytest.approx(0.0, abs=1e-9)


def test_slope_uses_tail_only():
    t = log_checkpoints(10**5, 100)
    y = np.where(t < 300, 1.0, 300.0 / t) * 0.5
    assert fit_tail_slope(_trace(t, y), tail_fraction=0.4) == pytest.approx(-1.0, abs=1e-9)


def test_slope_not_fittable():
    t = np.arange(1, 16)
    with pytest.raises(NotFittable):
        fit_tail_slope(_trace(t, 1.0 / t))  # 8 points in the window
    t = np.arange(1, 41)
    y = 1.0 / t
    y[-1] = 0.0
    with pytest.raises(NotFittable):
        fit_tail_slope(_trace(t, y))
    y[-1] = np.nan
    with pytest.raises(NotFittable):
        fit_tail_slope(_trace(t, y))


# -- CSV ---------------------------------------------------------------------


def test_csv_layout_and_roundtrip():
    trace = Trace(
        t=np.array([1, 10, 100]),
        errors=np.array([[0.5, 0.25], [0.1, np.nan], [0.01, np.nan]]),
        avg_errors=np.array([[0.4, 0.2], [0.05, np.nan], [0.002, np.nan]]),
        meta={"lambda1": "2.0", "wall_clock": "0.1"},
    )
    text = trace.to_csv()
    lines = text.splitlines()
    assert lines[:2] == ["# meta: lambda1=2.0", "# meta: wall_clock=0.1"]
    assert lines[2] == "t,trial_0,trial_1,mean,avg_mean"
    assert lines[3] == "1,0.5,0.25,0.375,0.30000000000000004"
    assert lines[4] == "10,0.1,div,0.1,0.05"
    back = Trace.from_csv(text)
    assert back.meta == trace.meta
    np.testing.assert_array_equal(back.t, trace.t)
    np.testing.assert_array_equal(back.errors, trace.errors)


# -- config ------------------------------------------------------------------


def test_parse_config_fields():
    cfg = parse_config(SMALL)
    assert cfg.stream.kind == "gaussian-gev" and cfg.stream.dim == 5
    assert cfg.schedule.alpha_factor == 0.5 and cfg.schedule.offset == 10.0
    assert cfg.horizon == 3000 and cfg.trials == 3
    assert cfg.seeds == [4, 5, 6]
    assert cfg.solver.name == "gen-oja"


def test_config_text_roundtrip():
    cfg = parse_config(SMALL)
    assert parse_config(to_text(cfg)) == cfg
    for _, p in presets.fig1_right() + presets.cca():
        assert parse_config(to_text(p)) == p


@pytest.mark.parametrize(
    "patch, needle",
    [
        (("dim = 5", "dim = five"), ":3: [stream] dim"),
        (("offset = 10", "ofset = 10"), ":9: [schedule] ofset: unknown key"),
        (("alpha_factor = 0.5", "alpha_factor = 0.5\nalpha = 0.1"), "either alpha or alpha_factor"),
        (("kind = gaussian-gev", "kind = wishart"), "[stream] kind"),
        (("[run]", "[runs]"), "unknown section [runs]"),
        (("trials = 3", "trials = 0"), "trials must be >= 1"),
        (("[run]", "[solver]\ntau = 0\n[run]"), "tau"),
    ],
)
def test_config_errors_name_line_and_key(patch, needle):
    text = SMALL.replace(*patch)
    with pytest.raises(ConfigError) as err:
        parse_config(text, source="exp.ini")
    assert needle in str(err.value)


def test_resolved_step_sizes():
    cfg = parse_config(SMALL)
    res = resolve(cfg)
    assert res.schedule.alpha == pytest.approx(0.5 / res.stream.radius_sq)
    assert res.schedule.beta == pytest.approx(3.0 / res.reference.gap)


def test_set_dotted():
    cfg = parse_config(SMALL)
    assert set_dotted(cfg, "solver.tau", "10").solver.tau == 10
    assert set_dotted(cfg, "run.base_seed", "7").seeds[0] == 7
    with pytest.raises(ConfigError):
        set_dotted(cfg, "solver.nope", "1")


def test_deterministic_config_from_files(tmp_path):
    write_matrix(tmp_path / "a.txt", np.diag([2.0, 1.0]))
    write_matrix(tmp_path / "b.txt", np.eye(2))
    text = "[stream]\nkind = deterministic\nmatrix_a = a.txt\nmatrix_b = b.txt\n[run]\nhorizon = 500\ntrials = 1\n"
    cfg = parse_config(text, base_dir=tmp_path)
    trace = run_experiment(cfg)
    assert trace.mean()[-1] < 1e-10


# -- runs --------------------------------------------------------------------


def test_run_trials_use_consecutive_seeds():
    cfg = parse_config(SMALL)
    trace = run_experiment(cfg)
    for i, seed in enumerate(cfg.seeds):
        one = run_experiment(cfg.with_overrides(base_seed=seed, trials=1))
        np.testing.assert_array_equal(one.errors[:, 0], trace.errors[:, i])


def test_process_pool_matches_serial(monkeypatch):
    cfgs = [parse_config(SMALL).with_overrides(base_seed=s, horizon=500) for s in (0, 1)]
    serial = run_many(cfgs, workers=1)
    monkeypatch.setenv("GENOJA_THREADS", "2")
    pooled = run_many(cfgs)
    for a, b in zip(serial, pooled):
        assert _body(a.to_csv()) == _body(b.to_csv())


def test_bad_thread_env(monkeypatch):
    monkeypatch.setenv("GENOJA_THREADS", "zero")
    with pytest.raises(ConfigError):
        run_many([ExperimentConfig()] * 2)


# -- CLI ---------------------------------------------------------------------


def test_cli_run_is_deterministic(tmp_path, capsys):
    path = _write_cfg(tmp_path, SMALL)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--config", path, "--out", str(a)]) == 0
    assert main(["run", "--config", path, "--out", str(b)]) == 0
    assert _body(a.read_text()) == _body(b.read_text())
    out = capsys.readouterr().out
    assert "final_mean=" in out and "tail_slope=" in out
    assert "# meta: config.schedule.alpha_factor=0.5" in a.read_text()


def test_cli_overrides(tmp_path):
    path = _write_cfg(tmp_path, SMALL)
    out = tmp_path / "o.csv"
    assert main(["run", "--config", path, "--out", str(out), "--trials", "2", "--horizon", "100", "--seed", "9", "--quiet"]) == 0
    trace = Trace.from_csv(out.read_text())
    assert trace.n_trials == 2 and trace.t[-1] == 100
    assert trace.meta["config.run.base_seed"] == "9"


def test_cli_all_diverged_keeps_partial_csv(tmp_path):
    text = SMALL.replace("alpha_factor = 0.5", "alpha = 1000.0")
    path = _write_cfg(tmp_path, text)
    out = tmp_path / "div.csv"
    assert main(["run", "--config", path, "--out", str(out), "--quiet"]) == 3
    body = out.read_text()
    assert ",div," in body
    assert Trace.from_csv(body).t[0] == 1


def test_cli_config_error_exit_code(tmp_path, capsys):
    path = _write_cfg(tmp_path, SMALL.replace("horizon = 3000", "horizon = lots"))
    assert main(["run", "--config", path]) == 2
    assert "exp.ini:12: [run] horizon" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["preset", "fig9"]) == 2


def _summary(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_sweep_over_tau_conserves_budget(tmp_path):
    text = SMALL.replace("[run]", "[solver]\nname = two-step\n\n[run]").replace("horizon = 3000", "horizon = 2000")
    path = _write_cfg(tmp_path, text)
    assert main(["sweep", "--config", path, "--grid", "solver.tau=10,100,1000", "--out", str(tmp_path / "s"), "--quiet"]) == 0
    rows = _summary(tmp_path / "s" / "summary.csv")
    assert [r["solver.tau"] for r in rows] == ["10", "100", "1000"]
    assert all(r["samples_consumed"] == "2000" for r in rows)


def test_sweep_over_seeds(tmp_path):
    path = _write_cfg(tmp_path, SMALL.replace("trials = 3", "trials = 1").replace("horizon = 3000", "horizon = 300"))
    grid = "run.base_seed=" + ",".join(str(s) for s in range(10))
    assert main(["sweep", "--config", path, "--grid", grid, "--out", str(tmp_path / "s"), "--quiet"]) == 0
    rows = _summary(tmp_path / "s" / "summary.csv")
    assert len(rows) == 10
    bodies = {_body((tmp_path / "s" / f"point_{i}.csv").read_text()) for i in range(10)}
    assert len(bodies) == 10


def test_sweep_records_failures_and_continues(tmp_path):
    text = SMALL.replace("[run]", "[solver]\nname = two-step\n\n[run]")
    path = _write_cfg(tmp_path, text)
    assert main(["sweep", "--config", path, "--grid", "solver.tau=7,10", "--out", str(tmp_path / "s"), "--quiet"]) == 0
    rows = _summary(tmp_path / "s" / "summary.csv")
    assert rows[0]["status"].startswith("error:") and "multiple of tau=7" in rows[0]["status"]
    assert rows[1]["status"] == "ok"


DIAG_DET = """\
[stream]
kind = deterministic
dim = 6
seed = 3

[diagnose]
alpha_factor = 0.5
horizon = 20000
replicas = 2
"""


def _section(text, name):
    lines = text.splitlines()
    start = lines.index(f"# section: {name}") + 2
    out = {}
    for line in lines[start:]:
        if line.startswith("#"):
            break
        k, v = line.split(",")
        out[k] = float(v)
    return out


def test_diagnose_deterministic(tmp_path):
    path = _write_cfg(tmp_path, DIAG_DET)
    out = tmp_path / "d.csv"
    assert main(["diagnose", "--config", path, "--out", str(out), "--quiet"]) == 0
    stat = _section(out.read_text(), "stationary")
    assert stat["rel_err"] <= 1e-8
    mix = _section(out.read_text(), "mixing")
    assert mix["slope"] < 0


def test_diagnose_stochastic_two_dim(tmp_path):
    text = "[stream]\nkind = gaussian-gev\ndim = 2\nseed = 0\n\n[diagnose]\nalpha_factor = 0.5\nhorizon = 100000\nreplicas = 16\n"
    out = tmp_path / "d.csv"
    assert main(["diagnose", "--config", _write_cfg(tmp_path, text), "--out", str(out), "--quiet"]) == 0
    assert _section(out.read_text(), "stationary")["rel_err"] <= 0.05


def test_diagnose_rejects_step_outside_range(tmp_path, capsys):
    path = _write_cfg(tmp_path, DIAG_DET.replace("alpha_factor = 0.5", "alpha_factor = 2.5"))
    assert main(["diagnose", "--config", path]) == 2
    assert "(0, 2/R^2]" in capsys.readouterr().err


# -- presets -----------------------------------------------------------------


def test_preset_contents():
    left = dict(presets.fig1_left())
    assert [c.solver.tau for c in left.values()] == [1, 10, 1000, 10000]
    assert all(c.stream.dim == 20 and c.horizon == 100_000 and c.trials == 10 for c in left.values())
    mid = [c.schedule.alpha_factor for _, c in presets.fig1_middle()]
    assert mid == [1.0, 1 / 8, 1 / 16]
    right = [(c.schedule.beta_rule, c.schedule.beta_gamma) for _, c in presets.fig1_right()]
    g = presets.FIG1_GAMMA
    assert right == [("inverse-t", g), ("inverse-t", g / 16), ("inverse-sqrt-t", g), ("inverse-sqrt-t", g / 16)]
    assert all(c.solver.name == "gen-oja-averaged" for _, c in presets.fig1_right())


def test_preset_cca_problem():
    (_, cfg), = presets.cca()
    ref = resolve(cfg).reference
    assert ref.lambda1 == pytest.approx(0.9, abs=1e-10)
    assert ref.gap >= 0.3


def test_preset_cli_small(tmp_path):
    out = tmp_path / "p"
    assert main(["preset", "fig1-middle", "--horizon", "2000", "--trials", "2", "--out", str(out), "--quiet"]) == 0
    rows = _summary(out / "summary.csv")
    assert [r["point"] for r in rows] == ["alpha*", "alpha*/8", "alpha*/16"]
    assert all(math.isfinite(float(r["final_mean"])) for r in rows)
    # each entry's config is written next to its trace and reproduces it
    ini = out / "alphastar_8.ini"
    assert main(["run", "--config", str(ini), "--out", str(tmp_path / "again.csv"), "--quiet"]) == 0
    assert _body((tmp_path / "again.csv").read_text()) == _body((out / "alphastar_8.csv").read_text())
