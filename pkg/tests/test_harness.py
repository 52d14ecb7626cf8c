import json

import jsonschema
import numpy as np
import pytest

from atomcpd import ConfigError
from atomcpd.harness import (
    ExperimentConfig,
    aggregate,
    binomial_slack,
    peak_contrast,
    run_exp1,
    run_exp2,
    run_experiment,
    run_rate_verification,
    run_tradeoff,
)
from atomcpd.regularizers import NuclearRegularizer
from atomcpd.schema import load_schema
from atomcpd.signals import generate_planted_lowrank


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k not in ("timing_ms", "wall_ms")}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def test_helpers():
    assert peak_contrast([1.0, 2.0, 10.0]) == 5.0
    assert binomial_slack(0.5, 100) == pytest.approx(0.15)
    assert binomial_slack(1.2, 100) == 0.0


def test_exp1_single_trial_scale_two():
    res = run_exp1(trials=1, seed=0, scales=(2.0,))
    rec = res.trials[0]
    for name in ("proposed", "baseline"):
        S = res.traces[f"{name}_scale2_trial0"]
        assert 45 <= 5 + int(np.argmax(S)) <= 55
    assert rec["proposed"]["contrast"] > rec["baseline"]["contrast"]


def test_exp1_noiseless_traces():
    theta, c = 5, 50
    res = run_exp1(trials=1, seed=3, scales=(2.0,), sigma=0.0)
    sig = generate_planted_lowrank(200, 100, c, scale=2.0, seed=[3, 0, 0])
    x1, x2 = (s.value for s in sig.segments)
    t = np.arange(theta, 100 - theta + 1)
    delta = np.linalg.norm(x2 - x1)
    base = res.traces["baseline_scale2_trial0"]
    np.testing.assert_allclose(base, delta * np.maximum(1 - np.abs(t - c) / theta, 0), rtol=1e-12, atol=1e-12)
    # the nuclear prox is not linear along the mixing path: peak and support are exact, shape is monotone
    prop = res.traces["proposed_scale2_trial0"]
    reg = NuclearRegularizer((200, 200))
    assert prop[c - theta] == pytest.approx(np.linalg.norm(reg.prox_array(x2, 0.4) - reg.prox_array(x1, 0.4)), rel=1e-10)
    far = np.abs(t - c) >= theta
    assert np.all(prop[far] <= 1e-12)
    i = c - theta
    assert np.all(np.diff(prop[: i + 1]) >= -1e-12) and np.all(np.diff(prop[i:]) <= 1e-12)


def test_exp1_rejects_zero_trials():
    with pytest.raises(ConfigError):
        run_exp1(trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig("exp1", trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig("exp9")


def test_exp2_single_seed():
    res = run_exp2(seed=1)
    runs = res.trials[0]["runs"]
    assert [(r["theta"], r["lambda"], r["gamma"]) for r in runs] == [(10, 1.0, 15.0), (10, 2.0, 9.0), (30, 1.0, 8.0), (30, 2.0, 6.0)]
    assert runs[2]["matched"] >= runs[0]["matched"]
    assert len(res.traces) == 4


def test_exp2_infinite_gamma_finds_nothing():
    res = run_exp2(seed=0, runs=((10, 1.0, float("inf")),))
    assert res.trials[0]["runs"][0]["estimates"] == []


@pytest.mark.slow
def test_exp2_estimates_near_truth_over_fifty_seeds(exp2_50):
    for k in range(4):
        assert exp2_50.aggregates[f"run{k + 1}_all_near_rate"] >= 0.9


def test_tradeoff_localizes_on_both_grids():
    res = run_tradeoff(k=4, d=32, base_Tmin=40, seed=0)
    coarse, fine = res.trials[0]["runs"]
    assert coarse["localized"] and fine["localized"]
    assert coarse["theta"] == 10 and fine["theta"] == 40
    assert coarse["window_continuous"] == pytest.approx(fine["window_continuous"])
    assert fine["regularizer"] == "nuclear_ball_scaled"
    assert set(fine["timing_ms"]) >= {"denoise"}


def test_tradeoff_requires_oversampling():
    with pytest.raises(ConfigError):
        run_tradeoff(k=1, d=8, base_Tmin=20)


def test_rate_verification_small_and_rejections():
    res = run_rate_verification("sparse", n=200, p_or_d=40, trials=1, seed=0, num_samples=300)
    assert "success_pass" not in res.aggregates
    assert res.config["recovery_condition"]["satisfied"]
    assert res.config["gamma"] >= res.config["gamma_floor"] - 1e-12
    with pytest.raises(ConfigError):
        run_rate_verification("sparse", r=1.0, trials=1)
    with pytest.raises(ConfigError):
        run_rate_verification("sparse", margin=0.9, trials=1)
    with pytest.raises(ConfigError):
        run_rate_verification("dense", trials=1)


def test_rate_verification_lowrank_runs():
    res = run_rate_verification("lowrank", n=200, p_or_d=8, trials=3, seed=1, num_samples=300)
    assert res.aggregates["success_rate"] == 1.0


def test_results_reproducible_and_aggregates_recomputable(tmp_path):
    a = run_experiment("exp1_lowrank", trials=2, seed=5, scales=(1.0,))
    b = run_experiment("exp1", trials=2, seed=5, scales=(1.0,))
    assert _strip_timing(a.to_dict()) == _strip_timing(b.to_dict())
    for res in (a, run_exp2(seed=2), run_rate_verification("sparse", n=200, p_or_d=30, trials=4, num_samples=200)):
        assert res.recompute_aggregates() == res.aggregates
    run_experiment("exp2", seed=2, out=str(tmp_path))
    stored = json.loads((tmp_path / "exp2.json").read_text())
    assert aggregate("exp2", stored["trials"], stored["config"]) == stored["aggregates"]
    jsonschema.validate(stored, load_schema("experiment"))
    rows = (tmp_path / "exp2_traces.csv").read_text().splitlines()
    assert rows[0] == "trace,t,S" and rows[1].startswith("run1_trial0,10,")
