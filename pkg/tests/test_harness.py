import filecmp
import json
import os

import numpy as np
import pytest

from semibandit.harness import (ALGORITHMS, AlgorithmSpec, ConfigError, EmptySummaryError,
                                EnvSpec, ExperimentConfig, ReplicateError, default_sweep,
                                emit_outputs, lower_bound_demo, read_trace_csv,
                                replicate_seed, run_single, run_sweep, splitmix64)


def small_cfg(alg="bose", kind="confounded_sphere", K=3, T=150, sweep=(0.01, 0.1), reps=2, **kw):
    return ExperimentConfig(env=EnvSpec(kind, 3, K), algorithm=AlgorithmSpec(alg), horizon=T,
                            replicates=reps, sweep=list(sweep), master_seed=42, **kw)


def test_splitmix_reference_values():
    # reference outputs of splitmix64 seeded with 0 (state advanced once per call)
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4
    assert replicate_seed(1, 2, 3) != replicate_seed(1, 3, 2)
    assert 0 <= replicate_seed(2**64 - 1, 0, 0) < 2**64


def test_default_sweep_grids():
    assert len(default_sweep("bose")) == 20
    assert max(default_sweep("epsgreedy")) == 1.0


@pytest.mark.parametrize("alg", ALGORITHMS)
def test_run_single_deterministic(alg):
    cfg = small_cfg(alg)
    a, b = run_single(cfg, 0.1, 1), run_single(cfg, 0.1, 1)
    np.testing.assert_array_equal(a.per_round_cum_regret, b.per_round_cum_regret)
    assert a.seed == b.seed and np.all(np.diff(a.per_round_cum_regret) >= -1e-15)


@pytest.mark.parametrize("alg", ALGORITHMS)
@pytest.mark.parametrize("kind", ["linear_sphere", "confounded_orthant", "ols_bias"])
def test_batch_and_stepwise_agree(alg, kind):
    cfg = small_cfg(alg, kind, K=4, T=120)
    a, b = run_single(cfg, 0.05, 0), run_single(cfg, 0.05, 0, stepwise=True)
    np.testing.assert_array_equal(a.actions, b.actions)
    np.testing.assert_allclose(a.per_round_cum_regret, b.per_round_cum_regret, atol=1e-12)
    assert a.potential_ok == b.potential_ok


@pytest.mark.parametrize("alg", ALGORITHMS)
def test_single_action_zero_regret(alg):
    tr = run_single(small_cfg(alg, K=1), 0.5, 0)
    assert np.all(tr.per_round_cum_regret == 0)


def test_bose_runs_pass_potential_audit():
    s = run_sweep(small_cfg("bose", T=300, sweep=(0.001, 0.1, 1.0), reps=3))
    assert s.potential_runs == 9 and s.potential_failures == 0


def test_sweep_length_one_and_argmin():
    s = run_sweep(small_cfg("oful", sweep=(0.3,)))
    assert s.best.param_value == 0.3
    # epsilon = 1 explores uniformly forever, epsilon = 0 is greedy on an easy linear task
    s = run_sweep(small_cfg("epsgreedy", "linear_sphere", T=400, sweep=(1.0, 0.0), reps=3))
    assert s.best.param_value == 0.0
    assert all(f1 > f0 for f1, f0 in zip(s.params[0].finals, s.params[1].finals))


def test_parallel_matches_serial(tmp_path):
    cfg = small_cfg("thompson", reps=3)
    serial = run_sweep(cfg, jobs=1)
    parallel = run_sweep(cfg, jobs=2)
    emit_outputs(serial, str(tmp_path / "s"))
    emit_outputs(parallel, str(tmp_path / "p"))
    for name in os.listdir(tmp_path / "s"):
        assert filecmp.cmp(tmp_path / "s" / name, tmp_path / "p" / name, shallow=False)


def test_outputs_round_trip_and_repeat(tmp_path):
    cfg = small_cfg("bose", raw=True)
    s = run_sweep(cfg)
    paths = emit_outputs(s, str(tmp_path / "a"))
    emit_outputs(run_sweep(cfg), str(tmp_path / "b"))
    for key, path in paths.items():
        assert filecmp.cmp(path, str(tmp_path / "b" / os.path.basename(path)), shallow=False)
    back = read_trace_csv(paths["trace"])
    np.testing.assert_array_equal(back["mean"], s.best.mean_curve)
    np.testing.assert_array_equal(back["std"], s.best.std_curve)
    with open(paths["trace"]) as fh:
        assert fh.readline().strip() == "t,mean_cum_regret,std_cum_regret,n_replicates"
    summary = json.loads(open(paths["summary"]).read())
    assert summary["best_param_value"] == s.best.param_value
    assert summary["params"][0]["seeds"] == [replicate_seed(42, 0, r) for r in range(2)]


def test_empty_summary_refused(tmp_path):
    cfg = small_cfg("thompson", kind="determinism_adversary", K=2)
    s = run_sweep(cfg)
    assert s.best is None and all(p.errors for p in s.params)
    with pytest.raises(EmptySummaryError):
        emit_outputs(s, str(tmp_path))


def test_contract_violation_is_typed():
    with pytest.raises(ReplicateError) as info:
        run_single(small_cfg("bose", kind="determinism_adversary", K=2), 1.0, 0)
    assert info.value.exit_code == 3


def test_lower_bound_demo():
    rep = lower_bound_demo(200, "oful", 1.0)
    assert rep["identical_actions"] and rep["max_final_regret"] >= 100
    # every round costs 1 in exactly one of the two instances
    assert sum(rep["final_regret"]) == 200


@pytest.mark.parametrize("data", [
    {"env": {"kind": "nope"}, "algorithm": {"name": "bose"}},
    {"env": {"kind": "linear_sphere"}, "algorithm": {"name": "ucb"}},
    {"env": {"kind": "linear_sphere"}, "algorithm": {"name": "bose"}, "horizon": 0},
    {"env": {"kind": "linear_sphere"}, "algorithm": {"name": "bose"}, "replicates": 0},
    {"env": {"kind": "linear_sphere"}, "algorithm": {"name": "bose"}, "sweep": []},
    {"env": {"kind": "linear_sphere"}, "algorithm": {"name": "bose"}, "master_seed": -1},
    {"env": {"kind": "linear_sphere"}, "algorithm": {"name": "bose"}, "bogus": 1},
])
def test_config_errors(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_config_round_trip(tmp_path):
    cfg = small_cfg("oful")
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(str(path)).to_dict() == cfg.to_dict()
