"""Orthogonalised ridge estimator with an incrementally inverted Gram matrix."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels

NORM_TOL = 1.0 + 1e-9


class Mode(str, enum.Enum):
    GENERAL = "general"
    TWO_ACTION = "two_action"


@dataclass(frozen=True)
class ConfidenceConfig:
    horizon: int
    dim: int
    delta: float = 0.1
    mode: Mode = Mode.GENERAL
    lambda_override: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.lambda_override is not None and not self.lambda_override > 0:
            raise ValueError("lambda_override must be positive")


def default_lambda(cfg: ConfidenceConfig) -> float:
    if cfg.lambda_override is not None:
        return float(cfg.lambda_override)
    if cfg.mode is Mode.TWO_ACTION:
        return 1.0
    T, d = cfg.horizon, cfg.dim
    return 4 * d * math.log(9 * T) + 8 * math.log(4 * T / cfg.delta)


def gamma(cfg: ConfidenceConfig, lam: float) -> float:
    """Confidence radius gamma(T) for the given ridge weight."""
    T, d, delta = cfg.horizon, cfg.dim, cfg.delta
    if cfg.mode is Mode.TWO_ACTION:
        rest = 9 * d * math.log(1 + T / (d * lam)) + 18 * math.log(T / delta)
    else:
        rest = 27 * d * math.log(1 + 2 * T / d) + 54 * math.log(4 * T / delta)
    return math.sqrt(lam) + math.sqrt(rest)


def _as_vector(x, dim, name):
    v = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    if v.shape[0] != dim:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} is not finite")
    return v


class RegularizedGram:
    """lambda*I + sum of outer products, with a cached inverse."""

    def __init__(self, dim: int, lam: float):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if not lam > 0:
            raise ValueError("lambda must be positive")
        self.dim = int(dim)
        self.lam = float(lam)
        self.gram = self.lam * np.eye(self.dim)
        self.gram_inv = np.eye(self.dim) / self.lam
        self.update_count = 0

    def add(self, z: np.ndarray) -> None:
        self.update_count += 1
        kernels.rank_one_update(self.gram, self.gram_inv, np.ascontiguousarray(z, dtype=np.float64),
                                self.update_count)

    def inverse_error(self) -> float:
        return float(np.abs(self.gram @ self.gram_inv - np.eye(self.dim)).max())

    def copy(self) -> "RegularizedGram":
        out = RegularizedGram.__new__(RegularizedGram)
        out.dim, out.lam, out.update_count = self.dim, self.lam, self.update_count
        out.gram = self.gram.copy()
        out.gram_inv = self.gram_inv.copy()
        return out


def mahalanobis(v, gram: RegularizedGram) -> float:
    """sqrt(v^T Gamma^{-1} v)."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    return math.sqrt(max(float(v @ gram.gram_inv @ v), 0.0))


@dataclass
class OrthogonalizedEstimator:
    """Ridge regression on features centred by the known policy mean.

    theta_hat = Gamma^{-1} sum_t (z_t - mu_t) r_t
    """

    gram: RegularizedGram
    moment: np.ndarray = field(default=None)
    theta_hat: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.moment is None:
            self.moment = np.zeros(self.gram.dim)
        if self.theta_hat is None:
            self.theta_hat = self.gram.gram_inv @ self.moment

    @classmethod
    def fresh(cls, dim: int, lam: float) -> "OrthogonalizedEstimator":
        return cls(RegularizedGram(dim, lam))

    @property
    def dim(self) -> int:
        return self.gram.dim

    def update(self, z_chosen, mu, reward: float,
               max_norm: float = 1.0) -> "OrthogonalizedEstimator":
        z = _as_vector(z_chosen, self.dim, "z_chosen")
        m = _as_vector(mu, self.dim, "mu")
        if not math.isfinite(reward):
            raise ValueError("reward is not finite")
        for name, v in (("z_chosen", z), ("mu", m)):
            if np.linalg.norm(v) > max_norm * NORM_TOL:
                raise ValueError(f"{name} has norm {np.linalg.norm(v)!r} > {max_norm}")
        centred = z - m
        self.gram.add(centred)
        self.moment += centred * reward
        self.theta_hat = self.gram.gram_inv @ self.moment
        return self

    # Serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dim": self.gram.dim,
            "lambda": self.gram.lam,
            "gram": self.gram.gram.reshape(-1).tolist(),
            "moment": self.moment.tolist(),
            "update_count": self.gram.update_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "OrthogonalizedEstimator":
        dim = int(data["dim"])
        g = RegularizedGram(dim, float(data["lambda"]))
        g.gram = np.array(data["gram"], dtype=np.float64).reshape(dim, dim)
        g.gram_inv = np.linalg.inv(g.gram)
        kernels.symmetrize(g.gram_inv)
        g.update_count = int(data["update_count"])
        return cls(g, np.array(data["moment"], dtype=np.float64))

    @classmethod
    def from_json(cls, text: str) -> "OrthogonalizedEstimator":
        return cls.from_dict(json.loads(text))
