import numpy as np
import pytest

from semibandit.environments import (ContractViolation, EnvKind, Environment,
                                     instantaneous_regret, sample_context,
                                     sample_positive_orthant_sphere, sample_unit_sphere)
from semibandit.baselines import BaselineConfig, BaselinePolicy
from semibandit.estimation import ConfidenceConfig, Mode
from semibandit.policy import BosePolicy


@pytest.mark.parametrize("d", [1, 2, 7])
def test_sphere_norms(d, rng):
    x = sample_unit_sphere(d, rng, 1000)
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)
    y = sample_positive_orthant_sphere(d, rng, 1000)
    np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-12)
    assert y.min() >= 0
    assert sample_unit_sphere(d, rng).shape == (d,)


def test_sphere_one_dimensional_balance():
    x = sample_unit_sphere(1, np.random.default_rng(1), 10_000)[:, 0]
    assert set(np.unique(x)) == {-1.0, 1.0}
    assert abs(np.mean(x > 0) - 0.5) <= 0.02


@pytest.mark.parametrize("kind", ["confounded_sphere", "confounded_orthant"])
def test_confounded_optimal_reward_is_zero(kind):
    env = Environment(kind, 4, 3, noise_sigma=0.0, seed=2)
    for t in range(1, 50):
        out = sample_context(env, t)
        best = int(np.argmax(out.per_action_mean))
        assert out.reward(best) == pytest.approx(0.0, abs=1e-15)
        assert instantaneous_regret(out, best) == 0.0


def test_adversary_rewards_and_regret():
    for instance in (0, 1):
        env = Environment("determinism_adversary", 2, 2, seed=0, instance=instance)
        for t in range(1, 20):
            out = env.sample_context(t)
            assert out.reward(0) == 0.0 and out.reward(1) == 0.0
            assert instantaneous_regret(out, 1 - instance) == 1.0
            assert instantaneous_regret(out, instance) == 0.0


def test_adversary_contract():
    env = Environment("determinism_adversary", 2, 2, instance=0)
    env.check_learner(BaselinePolicy(BaselineConfig("oful"), 2))
    with pytest.raises(ContractViolation):
        env.check_learner(BosePolicy(ConfidenceConfig(10, 2, 0.1, Mode.TWO_ACTION)))
    with pytest.raises(ContractViolation):
        env.generate(10)
    with pytest.raises(ValueError):
        Environment("determinism_adversary", 2, 2, instance=2)


def test_ols_bias_rounds():
    env = Environment("ols_bias", 9, 9, noise_sigma=0.5)
    assert (env.d, env.K, env.noise_sigma) == (2, 2, 0.0)
    even = env.sample_context(2)
    np.testing.assert_allclose(even.per_action_mean, [1.0, 1 / 3])
    assert even.confounder == -1.0
    assert instantaneous_regret(even, 1) == pytest.approx(2 / 3)
    odd = env.sample_context(3)
    np.testing.assert_array_equal(odd.context.features, [[1.0, 0.0], [1.0, 0.0]])
    assert odd.confounder == 1.0 and odd.reward(0) == 1.0


@pytest.mark.parametrize("kind", ["linear_sphere", "confounded_sphere", "confounded_orthant", "ols_bias"])
def test_batch_matches_sequential(kind):
    a = Environment(kind, 3, 4, 0.2, seed=77)
    b = Environment(kind, 3, 4, 0.2, seed=77)
    batch = a.generate(25)
    np.testing.assert_array_equal(a.theta_star, b.theta_star)
    for t in range(1, 26):
        out = b.sample_context(t)
        np.testing.assert_array_equal(out.context.features, batch.features[t - 1])
        np.testing.assert_array_equal(out.per_action_mean, batch.means[t - 1])
        assert out.confounder == batch.confounder[t - 1]
        assert out.noise == batch.noise[t - 1]


def test_bounds_and_action_independence(rng):
    env = Environment("confounded_sphere", 5, 6, 0.3, seed=3)
    batch = env.generate(2000)
    assert np.abs(batch.confounder).max() <= 1 and np.abs(batch.noise).max() <= 0.3
    assert np.linalg.norm(batch.features, axis=2).max() <= 1 + 1e-12
    out = env.sample_context(1)
    for a in range(6):
        for b in range(6):
            diff = out.reward(a) - out.reward(b)
            assert diff == pytest.approx(env.theta_star @ (out.context.features[a] -
                                                           out.context.features[b]), abs=1e-14)


def test_regret_rejects_bad_action():
    out = Environment("linear_sphere", 2, 2, seed=0).sample_context(1)
    with pytest.raises(IndexError):
        instantaneous_regret(out, 2)


@pytest.mark.parametrize("kw", [dict(d=0), dict(K=0), dict(noise_sigma=1.5),
                                dict(theta=np.array([1.0, 1.0]))])
def test_env_rejects(kw):
    args = dict(kind="linear_sphere", d=2, K=2)
    args.update(kw)
    with pytest.raises(ValueError):
        Environment(**args)
