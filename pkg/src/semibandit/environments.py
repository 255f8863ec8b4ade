"""Reward generators: r_t(a) = <theta, z_{t,a}> + f_t + xi_t.

Each environment owns three independent streams (theta, features, noise),
so drawing T rounds in one batch gives exactly the same numbers as drawing
them one round at a time.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .policy import Context


class EnvKind(str, enum.Enum):
    LINEAR_SPHERE = "linear_sphere"
    CONFOUNDED_SPHERE = "confounded_sphere"
    CONFOUNDED_ORTHANT = "confounded_orthant"
    DETERMINISM_ADVERSARY = "determinism_adversary"
    OLS_BIAS = "ols_bias"


ADAPTIVE = {EnvKind.DETERMINISM_ADVERSARY}


class ContractViolation(RuntimeError):
    """A learner/environment pairing the environment cannot serve."""


def sample_unit_sphere(d: int, rng: np.random.Generator, size=None) -> np.ndarray:
    shape = (d,) if size is None else tuple(np.atleast_1d(size)) + (d,)
    x = rng.standard_normal(shape)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    # a zero draw has probability zero; map it to e_1 rather than divide by 0
    bad = norms[..., 0] == 0
    if np.any(bad):
        x[bad] = 0.0
        x[bad, 0] = 1.0
        norms[bad] = 1.0
    return x / norms


def sample_positive_orthant_sphere(d: int, rng: np.random.Generator, size=None) -> np.ndarray:
    return np.abs(sample_unit_sphere(d, rng, size))


@dataclass
class RoundOutcome:
    context: Context
    reward_fn: Callable[[int], float]
    optimal_value: float
    per_action_mean: np.ndarray
    confounder: Optional[float] = None
    noise: float = 0.0

    def reward(self, action: int) -> float:
        return self.reward_fn(action)


@dataclass
class RoundBatch:
    """T pre-drawn rounds; ``offsets = confounder + noise``."""

    features: np.ndarray
    means: np.ndarray
    confounder: np.ndarray
    noise: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        return self.confounder + self.noise


def instantaneous_regret(outcome: RoundOutcome, action: int) -> float:
    if not 0 <= action < outcome.per_action_mean.shape[0]:
        raise IndexError(f"action {action} out of range")
    return float(outcome.optimal_value - outcome.per_action_mean[action])


_OLS_EVEN = np.array([[1.0, 1.0], [1.0, 1.0 / 3.0]])
_OLS_ODD = np.array([[1.0, 0.0], [1.0, 0.0]])
# the bias stream's z_1 = (1, 1) sits outside the unit ball
OLS_MAX_NORM = float(np.sqrt(2.0))


class Environment:
    def __init__(self, kind, d: int, K: int, noise_sigma: float = 0.1,
                 seed=None, theta: Optional[np.ndarray] = None, instance: int = 0):
        self.kind = EnvKind(kind)
        if self.kind in (EnvKind.DETERMINISM_ADVERSARY, EnvKind.OLS_BIAS):
            d, K, noise_sigma = 2, 2, 0.0
        if d < 1 or K < 1:
            raise ValueError("d and K must be positive")
        if not 0.0 <= noise_sigma <= 1.0:
            raise ValueError("noise_sigma must lie in [0, 1]")
        self.d, self.K, self.noise_sigma = int(d), int(K), float(noise_sigma)
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        theta_ss, feat_ss, noise_ss = ss.spawn(3)
        self.feature_rng = np.random.default_rng(feat_ss)
        self.noise_rng = np.random.default_rng(noise_ss)
        if self.kind is EnvKind.DETERMINISM_ADVERSARY:
            if instance not in (0, 1):
                raise ValueError("adversary instance must be 0 (theta=e1) or 1 (theta=e2)")
            theta = np.eye(2)[instance]
        elif self.kind is EnvKind.OLS_BIAS:
            theta = np.array([0.0, 1.0])
        elif theta is None:
            theta = sample_unit_sphere(self.d, np.random.default_rng(theta_ss))
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.d,) or np.linalg.norm(theta) > 1 + 1e-9:
            raise ValueError("theta must be a d-vector with norm <= 1")
        self.theta_star = theta

    @property
    def adaptive(self) -> bool:
        return self.kind in ADAPTIVE

    def check_learner(self, learner) -> None:
        if self.kind is EnvKind.DETERMINISM_ADVERSARY and not getattr(learner, "deterministic", False):
            raise ContractViolation("the determinism adversary needs a deterministic learner; "
                                    f"{type(learner).__name__} randomises")

    # Drawing -----------------------------------------------------------------

    def _features(self, t: int, n: int) -> np.ndarray:
        """Features for ``n`` consecutive rounds starting at round ``t`` (1-based)."""
        kind = self.kind
        if kind is EnvKind.LINEAR_SPHERE or kind is EnvKind.CONFOUNDED_SPHERE:
            return sample_unit_sphere(self.d, self.feature_rng, (n, self.K))
        if kind is EnvKind.CONFOUNDED_ORTHANT:
            return sample_positive_orthant_sphere(self.d, self.feature_rng, (n, self.K))
        if kind is EnvKind.DETERMINISM_ADVERSARY:
            return np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
        rounds = t + np.arange(n)
        return np.where((rounds % 2 == 0)[:, None, None], _OLS_EVEN, _OLS_ODD)

    def _noise(self, n: int) -> np.ndarray:
        if self.noise_sigma == 0.0:
            return np.zeros(n)
        return self.noise_rng.uniform(-self.noise_sigma, self.noise_sigma, n)

    def _confounder(self, t: int, means: np.ndarray) -> np.ndarray:
        kind = self.kind
        n = means.shape[0]
        if kind is EnvKind.LINEAR_SPHERE:
            f = np.zeros(n)
        elif kind is EnvKind.OLS_BIAS:
            rounds = t + np.arange(n)
            f = np.where(rounds % 2 == 0, -1.0, 1.0)
        else:
            f = -means.max(axis=1)
        assert np.all(np.abs(f) <= 1 + 1e-9), "confounder left [-1, 1]"
        return np.clip(f, -1.0, 1.0)

    def generate(self, T: int, start: int = 1) -> RoundBatch:
        """Pre-draw rounds start..start+T-1 (not available for adaptive adversaries)."""
        if self.adaptive:
            raise ContractViolation(f"{self.kind.value} reacts to the action; use sample_context")
        feats = np.ascontiguousarray(self._features(start, T))
        means = np.ascontiguousarray(feats @ self.theta_star)
        return RoundBatch(feats, means, self._confounder(start, means), self._noise(T))

    def sample_context(self, t: int) -> RoundOutcome:
        """Draw round ``t`` (1-based). The adversary's confounder depends on the action played."""
        feats = self._features(t, 1)[0]
        means = feats @ self.theta_star
        ctx = Context(feats, t, OLS_MAX_NORM if self.kind is EnvKind.OLS_BIAS else 1.0)
        opt = float(means.max())
        xi = float(self._noise(1)[0])
        if self.kind is EnvKind.DETERMINISM_ADVERSARY:
            best = int(np.argmax(means))

            def reward_fn(a, means=means, best=best):
                f = -1.0 if a == best else 0.0
                return float(means[a] + f)

            return RoundOutcome(ctx, reward_fn, opt, means, None, 0.0)
        f = float(self._confounder(t, means[None, :])[0])

        def reward_fn(a, means=means, f=f, xi=xi):
            return float(means[a] + f + xi)

        return RoundOutcome(ctx, reward_fn, opt, means, f, xi)


def sample_context(env: Environment, t: int) -> RoundOutcome:
    return env.sample_context(t)
