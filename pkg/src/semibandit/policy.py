"""BOSE: action elimination followed by a covariance-matching exploration distribution."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import kernels
from .estimation import (NORM_TOL, ConfidenceConfig, Mode, OrthogonalizedEstimator,
                         RegularizedGram, default_lambda, gamma)

log = logging.getLogger(__name__)


class SolverNotConverged(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Context:
    features: np.ndarray
    round: int = 0
    max_norm: float = 1.0

    def __post_init__(self):
        f = np.ascontiguousarray(self.features, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1:
            raise ValueError("features must be a non-empty K x d array")
        if not np.all(np.isfinite(f)):
            raise ValueError("features are not finite")
        norms = np.linalg.norm(f, axis=1)
        if norms.max() > self.max_norm * NORM_TOL:
            raise ValueError(f"feature norm {norms.max()!r} exceeds {self.max_norm}")
        object.__setattr__(self, "features", f)

    @property
    def n_actions(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class SolverConfig:
    eps_feas: float = 1e-8
    max_iters: int = 10_000
    step_scale: float = 1.0
    method: str = "max_spread"

    def __post_init__(self):
        if not (self.eps_feas > 0 and self.max_iters > 0 and self.step_scale > 0):
            raise ValueError("solver parameters must be positive")
        if self.method not in ("max_spread", "eg"):
            raise ValueError(f"unknown solver method {self.method!r}")


@dataclass
class ExplorationDistribution:
    support: np.ndarray
    probs: np.ndarray
    mu: np.ndarray
    cov_trace_term: float
    gap: float
    converged: bool = True
    iterations: int = 0

    def full_probs(self, n_actions: int) -> np.ndarray:
        out = np.zeros(n_actions)
        out[self.support] = self.probs
        return out


def filter_actions(ctx: Context, theta_hat, gram: RegularizedGram, gamma_value: float) -> np.ndarray:
    """Indices of actions not certified suboptimal; never empty."""
    if gamma_value < 0:
        raise ValueError("gamma_value must be nonnegative")
    theta_hat = np.ascontiguousarray(theta_hat, dtype=np.float64)
    keep = kernels.filter_mask(ctx.features, theta_hat, gram.gram_inv, float(gamma_value))
    return np.flatnonzero(keep)


def constraint_slacks(features, probs, gram_inv) -> np.ndarray:
    """tr(M Cov_pi) - ||z_i - mu_pi||_M^2 for every row, computed directly."""
    z = np.asarray(features, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    mu = p @ z
    second = (z * p[:, None]).T @ z
    cov = second - np.outer(mu, mu)
    trace = float(np.trace(gram_inv @ cov))
    diffs = z - mu
    lhs = np.einsum("ij,jk,ik->i", diffs, gram_inv, diffs)
    return trace - lhs


def solve_exploration_distribution(survivor_features, gram: RegularizedGram,
                                   solver_cfg: SolverConfig = SolverConfig()) -> ExplorationDistribution:
    """Distribution over the rows of ``survivor_features`` meeting the covariance constraint.

    Never reports feasibility it did not reach: ``converged`` is False when
    the best gap found is above ``eps_feas``.
    """
    z = np.ascontiguousarray(survivor_features, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise ValueError("need at least one survivor")
    n = z.shape[0]
    support = np.arange(n)
    if n == 1:
        w, gap, iters = np.ones(1), 0.0, 0
    else:
        g = kernels.metric_gram(z, gram.gram_inv)
        if solver_cfg.method == "eg":
            w, gap, iters = kernels.solve_eg(g, solver_cfg.eps_feas, solver_cfg.max_iters,
                                             solver_cfg.step_scale)
        else:
            w, gap, iters = kernels.solve_max_spread(g, solver_cfg.eps_feas, solver_cfg.max_iters)
    mu = w @ z
    diffs = z - mu
    cov_term = float(np.sum(w * np.einsum("ij,jk,ik->i", diffs, gram.gram_inv, diffs)))
    converged = bool(gap <= solver_cfg.eps_feas)
    return ExplorationDistribution(support, np.asarray(w), mu, cov_term, float(gap),
                                   converged, int(iters))


class BosePolicy:
    """Bandit orthogonalised semiparametric estimation."""

    deterministic = False

    def __init__(self, cfg: ConfidenceConfig, gamma_multiplier: float = 1.0,
                 solver_cfg: SolverConfig = SolverConfig(),
                 estimator: Optional[OrthogonalizedEstimator] = None):
        if gamma_multiplier < 0:
            raise ValueError("gamma_multiplier must be nonnegative")
        self.cfg = cfg
        self.lam = default_lambda(cfg)
        self.gamma_multiplier = float(gamma_multiplier)
        self.gamma_value = gamma(cfg, self.lam) * self.gamma_multiplier
        self.solver_cfg = solver_cfg
        self.estimator = estimator or OrthogonalizedEstimator.fresh(cfg.dim, self.lam)

    def choose(self, ctx: Context, rng: np.random.Generator):
        survivors = filter_actions(ctx, self.estimator.theta_hat, self.estimator.gram,
                                   self.gamma_value)
        dist = solve_exploration_distribution(ctx.features[survivors], self.estimator.gram,
                                              self.solver_cfg)
        dist.support = survivors
        if not dist.converged:
            log.warning("exploration solver did not converge at round %d (gap %.3e)",
                        ctx.round, dist.gap)
        u = rng.random()
        action = int(survivors[kernels.sample_index(dist.probs, u)])
        return action, dist

    def learn(self, ctx: Context, action: int, distribution: ExplorationDistribution,
              reward: float) -> "BosePolicy":
        self.estimator.update(ctx.features[action], distribution.mu, reward,
                              max_norm=getattr(ctx, "max_norm", 1.0))
        return self

    def snapshot(self) -> dict:
        return {
            "mode": self.cfg.mode.value,
            "horizon": self.cfg.horizon,
            "delta": self.cfg.delta,
            "lambda": self.lam,
            "gamma": self.gamma_value,
            "gamma_multiplier": self.gamma_multiplier,
            "solver": asdict(self.solver_cfg),
            "estimator": self.estimator.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.snapshot())

    @classmethod
    def from_snapshot(cls, data: dict) -> "BosePolicy":
        est = OrthogonalizedEstimator.from_dict(data["estimator"])
        lam = data["lambda"]
        cfg = ConfidenceConfig(horizon=data["horizon"], dim=est.dim, delta=data["delta"],
                               mode=Mode(data["mode"]), lambda_override=lam)
        pol = cls(cfg, data["gamma_multiplier"], SolverConfig(**data["solver"]), est)
        # gamma depends on the mode's own lambda, not the override used to restore it
        pol.gamma_value = data["gamma"]
        return pol


def choose(policy: BosePolicy, ctx: Context, rng: np.random.Generator):
    return policy.choose(ctx, rng)


def learn(policy: BosePolicy, ctx: Context, action: int, distribution: ExplorationDistribution,
          reward: float) -> BosePolicy:
    return policy.learn(ctx, action, distribution, reward)

