from pathlib import Path

import numpy as np
import pytest

import ceem

CONFIGS = Path(__file__).resolve().parents[2] / "configs"


def test_lorenz_benchmark_shapes():
    d = ceem.lorenz_benchmark(T=64, num_trajectories=2, seed=3)
    assert len(d["y"]) == 2
    assert d["y"][0].shape == (2, 64)
    assert d["x"][0].shape == (3, 64)
    np.testing.assert_allclose(d["theta_true"], [10.0, 28.0, 8.0 / 3.0])


def test_smoother_matches_rts():
    rng = np.random.default_rng(0)
    A = np.array([[0.9, 0.1], [-0.2, 0.8]])
    C = np.array([[1.0, 0.5]])
    y = rng.normal(size=(1, 40))
    args = (A, C, 0.3, 0.2, y, np.zeros(2), np.ones(2))
    np.testing.assert_allclose(ceem.smooth_linear(*args), ceem.rts_linear(*args), atol=1e-6)


def test_fit_lti_config():
    r = ceem.fit(CONFIGS / "lti.yaml")
    assert r["algorithm"] == "ceem"
    assert np.all(np.diff([r["initial_J"]] + r["J"]) >= -1e-6)
    assert r["eps"][-1] < r["initial_eps"]
    again = ceem.fit(CONFIGS / "lti.yaml")
    np.testing.assert_array_equal(r["theta"], again["theta"])


def test_simulate_and_evaluate_at_truth():
    d = ceem.simulate(CONFIGS / "lti.yaml")
    assert len(d["y"]) == 2 and d["y"][0].shape == (1, 100)
    m = ceem.evaluate(CONFIGS / "lti.yaml", d["theta_true"])
    assert m["eps"] == 0.0
    assert len(m["train_rmse"]) == 2


def test_seed_override_changes_data():
    a = ceem.simulate(CONFIGS / "lti.yaml")
    b = ceem.simulate(CONFIGS / "lti.yaml", seed=99)
    assert not np.array_equal(a["y"][0], b["y"][0])


def test_config_error_is_value_error():
    with pytest.raises(ValueError, match="unknown key"):
        ceem.fit("model:\n  id: lorenz\n  bogus: 1\n")
