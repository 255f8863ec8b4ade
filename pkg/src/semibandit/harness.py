"""Batch experiment runner: environment x algorithm x sweep x replicates.

Config files are JSON::

    {
      "env": {"kind": "confounded_sphere", "d": 10, "K": 2, "noise_sigma": 0.1, "instance": 0},
      "algorithm": {"name": "bose", "mode": "auto", "delta": 0.1, "lambda_override": null,
                    "lambda_prime": 1.0,
                    "solver": {"eps_feas": 1e-8, "max_iters": 10000, "step_scale": 1.0,
                               "method": "max_spread"}},
      "horizon": 10000,
      "replicates": 10,
      "sweep": null,
      "master_seed": 0,
      "output_dir": "out",
      "jobs": 1,
      "raw": false
    }

``sweep`` lists exploration parameters: the gamma(T) multiplier for bose, the
width multiplier for oful, the prior variance for thompson and epsilon for
epsgreedy. ``null`` selects the algorithm's default grid.

Seeds: replicate (p, r) of master seed m uses
``splitmix64(splitmix64(splitmix64(m) ^ p) ^ r)``; a numpy SeedSequence built
from that value is split into an environment stream and a policy stream.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import kernels
from .baselines import BaselineConfig, BaselineKind, BaselinePolicy
from .diagnostics import check_potential_and_det
from .environments import ContractViolation, EnvKind, Environment
from .estimation import ConfidenceConfig, Mode, default_lambda, gamma
from .policy import BosePolicy, SolverConfig

log = logging.getLogger(__name__)

ALGORITHMS = ("bose", "oful", "thompson", "epsgreedy")
MASK64 = (1 << 64) - 1


class HarnessError(Exception):
    category = "error"
    exit_code = 1


class ConfigError(HarnessError):
    category = "config"
    exit_code = 2


class ReplicateError(HarnessError):
    category = "contract"
    exit_code = 3


class OutputError(HarnessError):
    category = "output"
    exit_code = 4


class EmptySummaryError(OutputError):
    pass


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replicate_seed(master_seed: int, param_index: int, replicate_index: int) -> int:
    s = splitmix64(master_seed & MASK64)
    s = splitmix64(s ^ param_index)
    return splitmix64(s ^ replicate_index)


def default_sweep(algorithm: str) -> List[float]:
    if algorithm == "epsgreedy":
        return np.logspace(-4, 0, 20).tolist()
    return np.logspace(-4, 2, 20).tolist()


@dataclass
class EnvSpec:
    kind: str = "confounded_sphere"
    d: int = 10
    K: int = 2
    noise_sigma: float = 0.1
    instance: int = 0

    def __post_init__(self):
        self.kind = EnvKind(self.kind).value


@dataclass
class AlgorithmSpec:
    name: str = "bose"
    mode: str = "auto"
    delta: float = 0.1
    lambda_override: Optional[float] = None
    lambda_prime: float = 1.0
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.name!r}; expected one of {ALGORITHMS}")
        if self.mode not in ("auto", "general", "two_action"):
            raise ConfigError(f"unknown mode {self.mode!r}")


@dataclass
class ExperimentConfig:
    env: EnvSpec = field(default_factory=EnvSpec)
    algorithm: AlgorithmSpec = field(default_factory=AlgorithmSpec)
    horizon: int = 1000
    replicates: int = 10
    sweep: Optional[List[float]] = None
    master_seed: int = 0
    output_dir: str = "out"
    jobs: int = 1
    raw: bool = False

    def __post_init__(self):
        if isinstance(self.env, dict):
            self.env = EnvSpec(**self.env)
        if isinstance(self.algorithm, dict):
            self.algorithm = AlgorithmSpec(**self.algorithm)
        if self.sweep is None:
            self.sweep = default_sweep(self.algorithm.name)
        self.sweep = [float(v) for v in self.sweep]
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.sweep:
            raise ConfigError("sweep must be non-empty")
        if any(not math.isfinite(v) or v < 0 for v in self.sweep):
            raise ConfigError("sweep values must be finite and nonnegative")
        if not 0 <= self.master_seed <= MASK64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**copy.deepcopy(data))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RegretTrace:
    per_round_cum_regret: np.ndarray
    seed: int
    param_value: float
    wallclock: float
    param_index: int = 0
    replicate_index: int = 0
    actions: Optional[np.ndarray] = None
    potential_ok: Optional[bool] = None
    solver_unconverged: int = 0


# Building blocks -----------------------------------------------------------


def _bose_mode(cfg: ExperimentConfig) -> Mode:
    mode = cfg.algorithm.mode
    if mode == "auto":
        return Mode.TWO_ACTION if cfg.env.K == 2 else Mode.GENERAL
    return Mode(mode)


def make_environment(cfg: ExperimentConfig, seed) -> Environment:
    e = cfg.env
    return Environment(e.kind, e.d, e.K, e.noise_sigma, seed=seed, instance=e.instance)


def make_policy(cfg: ExperimentConfig, param_value: float, dim: int):
    a = cfg.algorithm
    if a.name == "bose":
        conf = ConfidenceConfig(cfg.horizon, dim, a.delta, _bose_mode(cfg), a.lambda_override)
        return BosePolicy(conf, param_value, SolverConfig(**a.solver))
    return BaselinePolicy(BaselineConfig(a.name, param_value, a.lambda_prime, a.delta), dim)


def run_single(cfg: ExperimentConfig, param_value: float, replicate_index: int,
               param_index: int = 0, stepwise: bool = False) -> RegretTrace:
    """One replicate: context -> choose -> reward -> learn for T rounds.

    Non-adaptive environments are pre-drawn and run through the compiled
    kernels; ``stepwise`` forces the object-level loop instead, which
    consumes the same random numbers and so yields the same trace.
    """
    start = time.perf_counter()
    seed = replicate_seed(cfg.master_seed, param_index, replicate_index)
    env_ss, policy_ss = np.random.SeedSequence(seed).spawn(2)
    env = make_environment(cfg, env_ss)
    policy_rng = np.random.default_rng(policy_ss)
    T = cfg.horizon
    potential_ok = None
    unconverged = 0
    if env.adaptive or stepwise:
        policy = make_policy(cfg, param_value, env.d)
        try:
            env.check_learner(policy)
        except ContractViolation as exc:
            raise ReplicateError(str(exc)) from exc
        regret = np.empty(T)
        actions = np.empty(T, dtype=np.int64)
        centred = np.empty((T, env.d)) if isinstance(policy, BosePolicy) else None
        for t in range(1, T + 1):
            outcome = env.sample_context(t)
            a, dist = policy.choose(outcome.context, policy_rng)
            policy.learn(outcome.context, a, dist, outcome.reward(a))
            regret[t - 1] = outcome.optimal_value - outcome.per_action_mean[a]
            actions[t - 1] = a
            if centred is not None:
                centred[t - 1] = outcome.context.features[a] - dist.mu
                unconverged += not dist.converged
        if centred is not None:
            potential_ok = check_potential_and_det(centred, policy.lam).ok
    else:
        batch = env.generate(T)
        a = cfg.algorithm
        if a.name == "bose":
            conf = ConfidenceConfig(T, env.d, a.delta, _bose_mode(cfg), a.lambda_override)
            lam = default_lambda(conf)
            solver = SolverConfig(**a.solver)
            if solver.method != "max_spread":
                raise ConfigError("batch runs support the max_spread solver only")
            out = kernels.bose_run(batch.features, batch.means, batch.offsets,
                                   policy_rng.random(T), lam, gamma(conf, lam) * param_value,
                                   solver.eps_feas, solver.max_iters, np.zeros(env.d))
            actions, regret, centred = out[0], out[1], out[2]
            unconverged = int(out[5])
            potential_ok = check_potential_and_det(centred, lam).ok
            if not potential_ok:
                log.error("potential audit failed: alg=bose param=%r replicate=%d",
                          param_value, replicate_index)
        else:
            kind = BaselineKind(a.name)
            if kind is BaselineKind.THOMPSON:
                draws = policy_rng.standard_normal((T, env.d))
            elif kind is BaselineKind.EPSGREEDY:
                draws = policy_rng.random((T, 2))
            else:
                draws = np.zeros((T, 0))
            BaselineConfig(kind, param_value, a.lambda_prime, a.delta)  # validates
            actions, regret, _ = kernels.ridge_run(
                kernels.KIND_OFUL if kind is BaselineKind.OFUL else
                kernels.KIND_THOMPSON if kind is BaselineKind.THOMPSON else kernels.KIND_EPSGREEDY,
                batch.features, batch.means, batch.offsets, draws, a.lambda_prime,
                param_value, a.delta)
    cum = np.cumsum(regret)
    return RegretTrace(cum, seed, float(param_value), time.perf_counter() - start,
                       param_index, replicate_index, actions, potential_ok, unconverged)


# Sweeps ---------------------------------------------------------------------


@dataclass
class ParamAggregate:
    param_index: int
    param_value: float
    seeds: List[int]
    n_complete: int
    errors: List[str]
    mean_curve: Optional[np.ndarray]
    std_curve: Optional[np.ndarray]
    finals: List[float]

    @property
    def complete(self) -> bool:
        return not self.errors

    @property
    def mean_final(self) -> float:
        return float(np.mean(self.finals)) if self.finals else math.inf


@dataclass
class SweepSummary:
    config: ExperimentConfig
    params: List[ParamAggregate]
    best_index: Optional[int]
    traces: Dict[tuple, RegretTrace]
    potential_runs: int = 0
    potential_failures: int = 0

    @property
    def best(self) -> Optional[ParamAggregate]:
        return None if self.best_index is None else self.params[self.best_index]


def _cell(args):
    cfg, pi, ri = args
    try:
        return pi, ri, run_single(cfg, cfg.sweep[pi], ri, pi), None
    except HarnessError as exc:
        return pi, ri, None, f"{exc.category}: {exc}"
    except (ValueError, ContractViolation, FloatingPointError, np.linalg.LinAlgError) as exc:
        return pi, ri, None, f"{type(exc).__name__}: {exc}"


def _std(curves: np.ndarray) -> np.ndarray:
    if curves.shape[0] < 2:
        return np.zeros(curves.shape[1])
    return curves.std(axis=0, ddof=1)


def run_sweep(cfg: ExperimentConfig, jobs: Optional[int] = None) -> SweepSummary:
    jobs = cfg.jobs if jobs is None else jobs
    tasks = [(cfg, pi, ri) for pi in range(len(cfg.sweep)) for ri in range(cfg.replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_cell(t) for t in tasks]
    by_key = {(pi, ri): (trace, err) for pi, ri, trace, err in results}

    params = []
    traces = {}
    pot_runs = pot_fail = 0
    for pi, value in enumerate(cfg.sweep):
        seeds, errors, curves = [], [], []
        for ri in range(cfg.replicates):
            seeds.append(replicate_seed(cfg.master_seed, pi, ri))
            trace, err = by_key[(pi, ri)]
            if err is not None:
                errors.append(f"replicate {ri}: {err}")
                continue
            traces[(pi, ri)] = trace
            curves.append(trace.per_round_cum_regret)
            if trace.potential_ok is not None:
                pot_runs += 1
                pot_fail += not trace.potential_ok
        if curves:
            stack = np.vstack(curves)
            mean, std, finals = stack.mean(axis=0), _std(stack), stack[:, -1].tolist()
        else:
            mean = std = None
            finals = []
        params.append(ParamAggregate(pi, value, seeds, len(curves), errors, mean, std, finals))

    candidates = [p for p in params if p.complete] or [p for p in params if p.finals]
    best_index = None
    if candidates:
        best_index = min(candidates, key=lambda p: (p.mean_final, p.param_index)).param_index
    return SweepSummary(cfg, params, best_index, traces, pot_runs, pot_fail)


# Output -----------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trace_filename(cfg: ExperimentConfig) -> str:
    return f"trace_{cfg.algorithm.name}_{cfg.env.kind}.csv"


def summary_dict(summary: SweepSummary) -> dict:
    cfg = summary.config
    best = summary.best
    return {
        "config": cfg.to_dict(),
        "backend": _backend(),
        "best_param_index": summary.best_index,
        "best_param_value": None if best is None else best.param_value,
        "best_mean_final_regret": None if best is None else best.mean_final,
        "potential_audit": {"runs": summary.potential_runs,
                            "failures": summary.potential_failures},
        "params": [
            {
                "param_index": p.param_index,
                "param_value": p.param_value,
                "seeds": p.seeds,
                "n_complete": p.n_complete,
                "complete": p.complete,
                "errors": p.errors,
                "final_regret": p.finals,
                "mean_final_regret": p.mean_final if p.finals else None,
                "std_final_regret": (float(np.std(p.finals, ddof=1)) if len(p.finals) > 1
                                     else 0.0 if p.finals else None),
            }
            for p in summary.params
        ],
    }


def _backend() -> str:
    from ._jit import BACKEND
    return BACKEND


def emit_outputs(summary: SweepSummary, out_dir: Optional[str] = None) -> Dict[str, str]:
    """Write the best-parameter trace CSV, summary.json and (optionally) raw traces."""
    best = summary.best
    if best is None or best.mean_curve is None or best.n_complete == 0:
        raise EmptySummaryError("no completed replicates to write")
    cfg = summary.config
    out_dir = out_dir or cfg.output_dir
    paths = {}
    try:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, trace_filename(cfg))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "mean_cum_regret", "std_cum_regret", "n_replicates"])
            for t in range(best.mean_curve.shape[0]):
                w.writerow([t + 1, _fmt(best.mean_curve[t]), _fmt(best.std_curve[t]),
                            best.n_complete])
        paths["trace"] = path
        path = os.path.join(out_dir, "summary.json")
        with open(path, "w") as fh:
            json.dump(summary_dict(summary), fh, indent=2)
            fh.write("\n")
        paths["summary"] = path
        if cfg.raw:
            path = os.path.join(out_dir, f"raw_{cfg.algorithm.name}_{cfg.env.kind}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["param_index", "param_value", "replicate", "seed", "t", "cum_regret"])
                for (pi, ri), tr in sorted(summary.traces.items()):
                    for t, v in enumerate(tr.per_round_cum_regret):
                        w.writerow([pi, _fmt(tr.param_value), ri, tr.seed, t + 1, _fmt(v)])
            paths["raw"] = path
    except OSError as exc:
        raise OutputError(f"cannot write {getattr(exc, 'filename', None) or out_dir}: {exc}") from exc
    return paths


def read_trace_csv(path: str) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "t": np.array([int(r["t"]) for r in rows]),
        "mean": np.array([float(r["mean_cum_regret"]) for r in rows]),
        "std": np.array([float(r["std_cum_regret"]) for r in rows]),
        "n": np.array([int(r["n_replicates"]) for r in rows]),
    }


# Lower-bound demo ----------------------------------------------------------------


def lower_bound_demo(T: int = 1000, algorithm: str = "oful", param_value: float = 1.0,
                     master_seed: int = 0) -> dict:
    """Run a deterministic learner on both adversary instances (theta = e1, e2)."""
    finals = []
    action_seqs = []
    for instance in (0, 1):
        cfg = ExperimentConfig(env=EnvSpec("determinism_adversary", 2, 2, 0.0, instance),
                               algorithm=AlgorithmSpec(algorithm), horizon=T, replicates=1,
                               sweep=[param_value], master_seed=master_seed)
        tr = run_single(cfg, param_value, 0)
        finals.append(float(tr.per_round_cum_regret[-1]))
        action_seqs.append(tr.actions)
    return {
        "T": T,
        "algorithm": algorithm,
        "param_value": param_value,
        "final_regret": finals,
        "max_final_regret": max(finals),
        "identical_actions": bool(np.array_equal(action_seqs[0], action_seqs[1])),
        "meets_half_T": max(finals) >= T / 2,
    }
