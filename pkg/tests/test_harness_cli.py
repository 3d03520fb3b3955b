import json

import numpy as np
import pytest

from codesign import cli
from codesign.codec import weighted_objective
from codesign.harness import (
    CellResult, MetricsReport, compression_gain, cost_curve, evaluate_full_horizon, fit_codec, load_report,
    recompute_cell, report_min_z, run_experiment, scheme_lambda, sweep,
)
from codesign.lqr import build_prediction
from codesign.scenarios import builtin
from codesign.timeseries import sample_matrix
from codesign.errors import ConfigError


def test_compression_gain_values():
    assert compression_gain(4, 15, 4) == 15
    assert compression_gain(8, 24, 2) == 96
    assert compression_gain(5, 15, 75) == 1
    with pytest.raises(ConfigError):
        compression_gain(4, 15, 0)


def test_scheme_lambda():
    assert scheme_lambda("task-aware") == 0.0
    assert scheme_lambda("weighted") == 1.0 and scheme_lambda("weighted", 0.3) == 0.3
    assert scheme_lambda("task-agnostic") is None
    with pytest.raises(ConfigError):
        scheme_lambda("weighted", 0.0)
    with pytest.raises(ConfigError):
        scheme_lambda("oracle")


@pytest.fixture(scope="module")
def small_mpc():
    return builtin("lqr-mpc").with_(n_train=4, n_test=3, T=20)


@pytest.fixture(scope="module")
def small_full():
    return builtin("lqr-full").with_(n_train=4, n_test=3, T=30)


def test_single_cell_sweep_equals_run(small_mpc):
    rep = sweep(small_mpc, [3], schemes=["task-aware"], seeds=[1])
    cell = run_experiment(small_mpc, "task-aware", 3, seed=1)
    assert json.dumps(rep.cells[0].__dict__, sort_keys=True) == json.dumps(cell.__dict__, sort_keys=True)


def test_full_horizon_curves_non_increasing_and_ordered(small_full):
    train = small_full.data("train")
    Psi = build_prediction(small_full.lti_spec()).Psi
    S = sample_matrix(train, small_full.H)
    prev = {}
    for Z in range(1, 31):
        costs = {}
        for scheme in ("task-aware", "task-agnostic"):
            codec = fit_codec(small_full, scheme, Z, train=train)
            costs[scheme] = np.mean(evaluate_full_horizon(small_full, codec, train)["costs"])
            assert costs[scheme] <= prev.get(scheme, np.inf) + 1e-9
            costs[scheme + "/w"] = weighted_objective(codec.reconstruct(S), S, Psi)
        assert costs["task-aware/w"] <= costs["task-agnostic/w"] * (1 + 1e-10) + 1e-10
        prev = costs


def test_baseline_is_a_lower_bound(small_full, small_mpc):
    cell = run_experiment(small_full, "task-agnostic", 2)
    assert all(c >= b - 1e-9 for c, b in zip(cell.costs, cell.baseline_costs))
    cells = [run_experiment(small_mpc.with_(n_test=10), s, 2) for s in ("task-aware", "task-agnostic")]
    assert all(c.mean_cost >= c.baseline for c in cells)


def test_metrics_recomputable_from_rollouts(tmp_path, small_mpc):
    cell = run_experiment(small_mpc, "weighted", 4, 0.5, rollout_dir=tmp_path)
    again = recompute_cell(tmp_path, small_mpc.mpc_problem(), small_mpc.cost_scale)
    for key in ("costs", "baseline_costs", "control_mse", "forecast_error"):
        assert np.allclose(again[key], getattr(cell, key), rtol=1e-10, atol=1e-12)
    assert again["forecast_mse"] == pytest.approx(cell.forecast_mse, rel=1e-12)


def _cell(scheme, Z, mean, base=1.0, seed=0, lam=None):
    c = CellResult("toy", scheme, Z, lam, seed, 10.0 / Z, costs=[mean], baseline_costs=[base])
    return c.finalize()


def test_report_min_z_cases():
    rep = MetricsReport([_cell("task-aware", z, 1.0) for z in (2, 3, 4)]
                        + [_cell("task-agnostic", z, 2.0) for z in (2, 3, 4)]
                        + [_cell("weighted", z, m, lam=1.0) for z, m in ((2, 1.2), (3, 1.05), (4, 1.0))])
    got = report_min_z(rep)
    assert got["task-aware"] == 2
    assert got["task-agnostic"] == "not reached"
    assert got["weighted(lambda=1)"] == 3
    assert report_min_z(rep, by_seed=True)[("task-aware", 0)] == 2


def test_min_z_ordering_on_lqr_mpc(small_mpc):
    spec = small_mpc.with_(T=30, n_test=4)
    zs = [1, 5, 10, 20, 30, 40, 50, 75]
    rep = sweep(spec, zs, schemes=["task-aware", "task-agnostic"], seeds=[0])
    got = report_min_z(rep)
    assert isinstance(got["task-aware"], int)
    assert got["task-agnostic"] == "not reached" or got["task-aware"] <= got["task-agnostic"]
    curve = cost_curve(rep, "task-aware")
    assert curve.shape == (len(zs), 5)
    assert curve[-1, 1] == pytest.approx(curve[-1, 4], rel=1e-6)


def test_partial_failures_and_json(tmp_path, small_mpc):
    rep = sweep(small_mpc, [2, 500], schemes=["task-agnostic"], seeds=[0], out_dir=tmp_path)
    assert [c.status for c in rep.cells] == ["ok", "failed"]
    assert "ConfigError" in rep.cells[1].error
    back = load_report(tmp_path)
    assert back.to_json() == rep.to_json()
    assert (tmp_path / "cells.csv").read_text().count("\n") == 3
    with pytest.raises(ConfigError):
        MetricsReport.from_dict({"schema_version": 99, "cells": []})


def test_report_json_is_reproducible(small_mpc):
    a = sweep(small_mpc, [1, 5], schemes=["weighted", "task-agnostic"], seeds=[0, 1])
    b = sweep(small_mpc, [1, 5], schemes=["weighted", "task-agnostic"], seeds=[0, 1], workers=2)
    assert a.to_json() == b.to_json()


def test_plots_written(tmp_path, small_mpc):
    from codesign.plots import write_report_plots

    rep = sweep(small_mpc, [1, 3], seeds=[0], analytic=True)
    files = write_report_plots(rep, tmp_path)
    assert any(f.name.endswith("cost_vs_z.svg") for f in files)
    assert all(f.read_text().startswith("<svg") for f in files)


# ---------------------------------------------------------------- CLI

def _small_config(tmp_path, name="lqr-mpc", **kw):
    spec = builtin(name).with_(n_train=2, n_test=2, T=8, **kw)
    path = tmp_path / f"{name}.json"
    spec.save(path)
    return str(path)


def test_parse_int_list():
    assert cli.parse_int_list("1,2,5-8") == [1, 2, 5, 6, 7, 8]


def test_cli_gen_fit_eval(tmp_path, capsys):
    cfg = _small_config(tmp_path)
    out = str(tmp_path / "run")
    assert cli.main(["gen", "--config", cfg, "--out-dir", out]) == 0
    assert (tmp_path / "run" / "train" / "series_000.csv").exists()
    assert cli.main(["fit-analytic", "--config", cfg, "--out-dir", out, "--z", "3"]) == 0
    codec = tmp_path / "run" / "codec_task-aware_Z3.txt"
    assert codec.exists()
    assert cli.main(["eval", "--config", cfg, "--out-dir", out, "--model", str(codec)]) == 0
    assert "ratio" in capsys.readouterr().out


def test_cli_train_and_eval_model(tmp_path):
    cfg = _small_config(tmp_path, "taxi", epochs=2)
    out = str(tmp_path / "run")
    assert cli.main(["train", "--config", cfg, "--out-dir", out, "--z", "2", "--epochs", "2"]) == 0
    model = tmp_path / "run" / "model_task-aware_Z2.npz"
    assert cli.main(["eval", "--config", cfg, "--out-dir", out, "--model", str(model)]) == 0
    assert (tmp_path / "run" / "trainlog_task-aware_Z2.csv").exists()


def test_cli_sweep_and_report(tmp_path, capsys):
    cfg = _small_config(tmp_path)
    out = str(tmp_path / "sw")
    assert cli.main(["sweep", "--config", cfg, "--out-dir", out, "--z", "1-3", "--seeds", "0,1"]) == 0
    assert "min Z within 5%" in capsys.readouterr().out
    assert cli.main(["report", "--out-dir", out, "--no-plots"]) == 0
    assert (tmp_path / "sw" / "report.json").exists()
    assert cli.main(["sweep", "--config", cfg, "--out-dir", out, "--z", "2,99", "--no-plots"]) == 4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert cli.main(["gen", "--config", str(bad), "--out-dir", str(tmp_path)]) == 2
    assert cli.main(["fit-analytic", "--scenario", "taxi", "--out-dir", str(tmp_path)]) == 2
    assert cli.main(["report", "--out-dir", str(tmp_path / "missing")]) == 2
    cfg = _small_config(tmp_path, "taxi", epochs=2)
    code = cli.main(["train", "--config", cfg, "--out-dir", str(tmp_path / "t"), "--lr", "inf", "--epochs", "2"])
    assert code == 3
    assert (tmp_path / "t" / "last_good.npz").exists()
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--scheme"])
