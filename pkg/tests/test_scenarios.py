import numpy as np
import pytest

from codesign.errors import ConfigError
from codesign.scenarios import NAMES, ScenarioSpec, builtin, c_matrix, load_scenario
from codesign.timeseries import save_csv


def test_smart_factory_constants():
    s = builtin("smart-factory")
    pr = s.mpc_problem()
    assert (s.T, s.W, s.H, s.n) == (72, 15, 15, 4)
    assert np.all(pr.u_min == -0.95) and np.all(pr.u_max == 0.95)
    assert (pr.gamma_e, pr.gamma_s, pr.gamma_u) == (1.0, 1.0, 1.0)
    assert s.scale_mode == "symmetric-unit"
    assert (s.n_train, s.n_test, s.epochs) == (30, 30, 1000)


def test_taxi_constants():
    s = builtin("taxi")
    pr = s.mpc_problem()
    assert (s.T, s.W, s.H, s.n) == (32, 15, 15, 4)
    assert not pr.bounded
    assert (pr.gamma_e, pr.gamma_s, pr.gamma_u) == (1.0, 100.0, 1.0)
    assert s.scale_mode == "unit-interval"
    assert (s.n_train, s.n_test, s.epochs) == (17, 17, 1000)


def test_battery_constants():
    s = builtin("battery")
    pr = s.mpc_problem()
    assert (s.T, s.W, s.H, s.n) == (122, 24, 24, 8)
    assert not pr.bounded and (pr.gamma_e, pr.gamma_s, pr.gamma_u) == (1.0, 1.0, 1.0)
    assert s.scale_mode == "unit-interval"
    assert (s.n_train, s.n_test, s.epochs) == (15, 15, 2000)


def test_streaming_constants():
    s = builtin("streaming")
    pr = s.mpc_problem()
    assert (s.T, s.W, s.H, s.n) == (60, 15, 15, 4)
    assert pr.kind == "nonlinear-streaming"
    assert pr.gamma_x == 0.25 and pr.gamma_u == 1.0
    assert np.all(pr.L_x == 0.5) and np.all(pr.L_u == 0.2)
    assert s.data("train").data.min() > pr.throughput_floor


def test_lqr_constants():
    full, mpc = builtin("lqr-full"), builtin("lqr-mpc")
    assert (full.H, full.n, full.cost_scale, full.evaluation) == (20, 5, 1e-3, "full-horizon")
    assert (mpc.T, mpc.W, mpc.H, mpc.n) == (100, 15, 15, 5)
    for s in (full, mpc):
        assert np.array_equal(c_matrix(s), np.diag([1.0, 2, 3, 4, 5]))
        lti = s.lti_spec()
        assert np.array_equal(lti.A, np.eye(5)) and np.array_equal(lti.B, np.eye(5))
        assert np.array_equal(lti.C, -np.diag([1.0, 2, 3, 4, 5]))
        assert np.array_equal(lti.Q, np.eye(5)) and np.array_equal(lti.R, np.eye(5))


@pytest.mark.parametrize("name", NAMES)
def test_builtin_roundtrip_and_data(tmp_path, name):
    s = builtin(name)
    s.save(tmp_path / "s.json")
    back = load_scenario(tmp_path / "s.json")
    assert back.to_dict() == s.to_dict()
    small = s.with_(n_train=2, n_test=2)
    tr, te = small.data("train"), small.data("test")
    assert tr.data.shape == (2, s.p, s.W - 1 + s.T + s.H - 1)
    assert not np.array_equal(tr.data, te.data)
    assert np.array_equal(tr.data, small.data("train").data)
    assert np.all(np.isfinite(tr.data))


def test_lti_spec_only_for_quadratic_scenarios():
    for name in ("smart-factory", "taxi", "streaming"):
        with pytest.raises(ConfigError):
            builtin(name).lti_spec()
    assert builtin("battery").lti_spec().H == 24


def test_unknown_names_and_keys(tmp_path):
    with pytest.raises(ConfigError):
        builtin("warehouse")
    d = builtin("taxi").to_dict()
    with pytest.raises(ConfigError):
        ScenarioSpec.from_dict({**d, "colour": "red"})
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        builtin("taxi").with_(T=0)
    with pytest.raises(ConfigError):
        ScenarioSpec.from_dict({**d, "H": 10})


def test_csv_data_source(tmp_path):
    s = builtin("taxi").with_(n_train=2, n_test=3)
    save_csv(s.data("train"), tmp_path / "train")
    save_csv(s.data("test"), tmp_path / "test")
    real = s.with_(data_path=str(tmp_path))
    assert np.array_equal(real.data("train").data, s.data("train").data)
    assert real.data("test").N == 3
    with pytest.raises(ConfigError):
        s.data("validation")
