"""Linear-bandit baselines sharing an uncentred ridge estimate.

OFUL is deterministic given its history; Thompson sampling and
epsilon-greedy draw from the rng they are handed.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .estimation import NORM_TOL, RegularizedGram


class BaselineKind(str, enum.Enum):
    OFUL = "oful"
    THOMPSON = "thompson"
    EPSGREEDY = "epsgreedy"


KERNEL_KIND = {
    BaselineKind.OFUL: kernels.KIND_OFUL,
    BaselineKind.THOMPSON: kernels.KIND_THOMPSON,
    BaselineKind.EPSGREEDY: kernels.KIND_EPSGREEDY,
}


@dataclass(frozen=True)
class BaselineConfig:
    kind: BaselineKind
    explore_param: float = 1.0
    lambda_prime: float = 1.0
    delta: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", BaselineKind(self.kind))
        if self.explore_param < 0:
            raise ValueError("explore_param must be nonnegative")
        if self.kind is BaselineKind.EPSGREEDY and self.explore_param > 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if not self.lambda_prime > 0:
            raise ValueError("lambda_prime must be positive")


class RidgeState:
    """V = lambda' I + sum z z^T over raw chosen features; theta = V^{-1} b."""

    def __init__(self, dim: int, lambda_prime: float = 1.0):
        self.V = RegularizedGram(dim, lambda_prime)
        self.b = np.zeros(dim)
        self.theta = np.zeros(dim)

    @property
    def dim(self):
        return self.V.dim

    @property
    def lambda_prime(self):
        return self.V.lam

    @property
    def n(self):
        return self.V.update_count


def baseline_learn(state: RidgeState, z_chosen, reward: float,
                   max_norm: float = 1.0) -> RidgeState:
    z = np.ascontiguousarray(z_chosen, dtype=np.float64).reshape(-1)
    if z.shape[0] != state.dim or not np.all(np.isfinite(z)) or not math.isfinite(reward):
        raise ValueError("bad feature vector or reward")
    if np.linalg.norm(z) > max_norm * NORM_TOL:
        raise ValueError(f"feature norm exceeds {max_norm}")
    state.V.add(z)
    state.b += z * reward
    state.theta = state.V.gram_inv @ state.b
    return state


def _features(ctx):
    return getattr(ctx, "features", ctx)


def oful_choose(state: RidgeState, ctx, beta: float) -> int:
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return int(kernels.ridge_choose(kernels.KIND_OFUL, _features(ctx), state.theta,
                                    state.V.gram_inv, 0.0, float(beta), np.zeros(1)))


def thompson_choose(state: RidgeState, ctx, v2: float, rng: np.random.Generator) -> int:
    if v2 < 0:
        raise ValueError("v2 must be nonnegative")
    draws = rng.standard_normal(state.dim)
    return int(kernels.ridge_choose(kernels.KIND_THOMPSON, _features(ctx), state.theta,
                                    state.V.gram_inv, float(v2), 0.0, draws))


def epsgreedy_choose(state: RidgeState, ctx, eps: float, rng: np.random.Generator) -> int:
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    draws = rng.random(2)
    return int(kernels.ridge_choose(kernels.KIND_EPSGREEDY, _features(ctx), state.theta,
                                    state.V.gram_inv, float(eps), 0.0, draws))


def oful_beta(cfg: BaselineConfig, dim: int, n: int) -> float:
    """explore_param * (sqrt(l') + sqrt(2 log(1/delta) + d log(1 + n / (d l'))))."""
    return float(kernels.oful_beta(cfg.explore_param, cfg.lambda_prime, cfg.delta, dim, n))


def draws_per_round(kind: BaselineKind, dim: int) -> int:
    return {BaselineKind.OFUL: 0, BaselineKind.THOMPSON: dim, BaselineKind.EPSGREEDY: 2}[kind]


class BaselinePolicy:
    """Step-by-step wrapper matching the BosePolicy choose/learn surface."""

    def __init__(self, cfg: BaselineConfig, dim: int):
        self.cfg = cfg
        self.state = RidgeState(dim, cfg.lambda_prime)
        self.deterministic = cfg.kind is BaselineKind.OFUL or cfg.explore_param == 0

    def choose(self, ctx, rng: np.random.Generator):
        kind = self.cfg.kind
        if kind is BaselineKind.OFUL:
            return oful_choose(self.state, ctx, oful_beta(self.cfg, self.state.dim, self.state.n)), None
        if kind is BaselineKind.THOMPSON:
            return thompson_choose(self.state, ctx, self.cfg.explore_param, rng), None
        return epsgreedy_choose(self.state, ctx, self.cfg.explore_param, rng), None

    def learn(self, ctx, action, distribution, reward):
        baseline_learn(self.state, _features(ctx)[action], reward,
                       getattr(ctx, "max_norm", 1.0))
        return self
