"""Monte-Carlo and deterministic audits of the concentration and potential bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import kernels
from .environments import EnvKind, Environment
from .estimation import ConfidenceConfig, Mode, default_lambda, gamma


def wilson_interval(violations: int, trials: int, alpha: float = 0.05):
    from statsmodels.stats.proportion import proportion_confint

    low, high = proportion_confint(violations, trials, alpha=alpha, method="wilson")
    return float(low), float(high)


@dataclass
class CoverageReport:
    name: str
    trials: int
    violations: int
    delta: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.violations <= self.trials:
            raise ValueError("violations must lie in [0, trials]")

    @property
    def empirical_rate(self) -> float:
        return self.violations / self.trials if self.trials else 0.0

    @property
    def wilson_ci(self):
        return wilson_interval(self.violations, self.trials)

    def within(self, slack: float = 1.5) -> bool:
        """Empirical rate <= delta and the Wilson upper bound <= slack * delta."""
        return self.empirical_rate <= self.delta and self.wilson_ci[1] <= slack * self.delta

    def to_dict(self) -> dict:
        low, high = self.wilson_ci
        return {"name": self.name, "trials": self.trials, "violations": self.violations,
                "delta": self.delta, "empirical_rate": self.empirical_rate,
                "wilson_ci": [low, high], **self.extra}


def _child(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


# Estimator confidence ----------------------------------------------------


def check_estimator_confidence(d: int, K: int, T: int, delta: float, env_kind, trials: int,
                               rng: np.random.Generator, mode=Mode.GENERAL,
                               threshold_scale: float = 1.0,
                               noise_sigma: float = 0.1) -> CoverageReport:
    """Run BOSE ``trials`` times; a trial violates if ||theta_hat_t - theta||_Gamma_t
    exceeds ``threshold_scale * gamma(T)`` at any round (the initial estimate included)."""
    if trials < 1:
        raise ValueError("trials must be positive")
    cfg = ConfidenceConfig(max(T, 1), d, delta, Mode(mode))
    lam = default_lambda(cfg)
    radius = gamma(cfg, lam)
    violations = 0
    worst = 0.0
    for _ in range(trials):
        env = Environment(env_kind, d, K, noise_sigma, seed=_child(rng))
        batch = env.generate(T)
        out = kernels.bose_run(batch.features, batch.means, batch.offsets, rng.random(T),
                               lam, radius, 1e-8, 10_000, env.theta_star)
        conf_max = out[4]
        worst = max(worst, conf_max / radius)
        if conf_max > threshold_scale * radius:
            violations += 1
    return CoverageReport("estimator_confidence", trials, violations, delta,
                          {"gamma": radius, "lambda": lam, "threshold_scale": threshold_scale,
                           "worst_ratio": worst, "T": T, "d": d, "K": K,
                           "env": EnvKind(env_kind).value})


# Self-normalised martingale bounds ----------------------------------------


def _quad_and_logdet(S, A):
    """S^T A^{-1} S and log det A, batched over the leading axis."""
    sol = np.linalg.solve(A, S[..., None])[..., 0]
    quad = np.einsum("ti,ti->t", S, sol)
    _, logdet = np.linalg.slogdet(A)
    return quad, logdet


def _rademacher_process(d, T, M, trials, rng, shift=0.0, asym_p=None):
    """Simulate S = sum Z_t zeta_t with an adaptive |zeta_t| = M.

    Z_t = x_t u_t with u_t uniform on the sphere and revealed first;
    zeta_t = M * sign(<S_{t-1}, u_t>) is then fixed before the sign x_t is
    drawn, so given (past, u_t) Z_t is centred and independent of zeta_t. With ``asym_p`` the sign
    variable becomes a centred two-point law: 1 w.p. p, -p/(1-p) otherwise.
    Returns S, empirical sum Z Z^T and the conditional second-moment sum.
    """
    S = np.zeros((trials, d))
    emp = np.zeros((trials, d, d))
    pop = np.zeros((trials, d, d))
    if asym_p is None:
        second = 1.0
    else:
        low = -asym_p / (1 - asym_p)
        second = asym_p + (1 - asym_p) * low * low
    for _ in range(T):
        u = rng.standard_normal((trials, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        sign = np.where(np.einsum("ti,ti->t", S, u) >= 0, 1.0, -1.0)
        zeta = M * sign
        coin = rng.random(trials)
        if asym_p is None:
            x = np.where(coin < 0.5, 1.0, -1.0)
        else:
            x = np.where(coin < asym_p, 1.0, low)
        Z = x[:, None] * u
        if shift:
            Z[:, 0] += shift
        S += Z * zeta[:, None]
        emp += Z[:, :, None] * Z[:, None, :]
        uu = u[:, :, None] * u[:, None, :]
        pop += second * uu
    return S, emp, pop


def _self_normalized_reports(name, S, norm_matrix, Q, deltas, threshold_scale, extra):
    quad, logdet = _quad_and_logdet(S, norm_matrix)
    _, logdet_q = np.linalg.slogdet(Q)
    reports = []
    for delta in deltas:
        thresh = 2.0 * (math.log(1.0 / delta) + 0.5 * (logdet - logdet_q))
        hits = int(np.sum(quad >= threshold_scale * thresh))
        reports.append(CoverageReport(name, S.shape[0], hits, delta,
                                      {"threshold_scale": threshold_scale,
                                       "max_ratio": float(np.max(quad / thresh)), **extra}))
    return reports


def check_self_normalized_symmetric(d: int, T: int, M_bound: float = 3.0, lambda_q: float = 1.0,
                                    trials: int = 1000, rng: Optional[np.random.Generator] = None,
                                    deltas: Sequence[float] = (0.5, 0.1, 0.01),
                                    threshold_scale: float = 1.0,
                                    shift: float = 0.0, zeta_zero: bool = False) -> List[CoverageReport]:
    """P[||S||^2_{(Q + M^2 Sigma)^{-1}} >= 2 log(sqrt(det(Q + M^2 Sigma)/det Q)/delta)] <= delta
    for conditionally symmetric Z_t, with Q = M^2 lambda_q I.

    ``shift`` moves Z_t off-centre; such runs are informative only, since the
    symmetric bound is not claimed for them.
    """
    rng = rng if rng is not None else np.random.default_rng()
    M = 0.0 if zeta_zero else M_bound
    S, emp, _ = _rademacher_process(d, T, M, trials, rng, shift=shift)
    Q = M_bound**2 * lambda_q * np.eye(d)
    name = "self_normalized_symmetric" if not shift else "self_normalized_symmetric_shifted"
    return _self_normalized_reports(name, S, Q + M_bound**2 * emp, Q, deltas, threshold_scale,
                                    {"d": d, "T": T, "M": M_bound, "shift": shift})


def check_self_normalized_general(d: int = 2, T: int = 200, M_bound: float = 3.0,
                                  lambda_q: float = 1.0, trials: int = 1000,
                                  rng: Optional[np.random.Generator] = None,
                                  deltas: Sequence[float] = (0.5, 0.1, 0.01),
                                  threshold_scale: float = 1.0, asym_p: float = 0.2,
                                  zeta_zero: bool = False,
                                  symmetric_normalizer: bool = False) -> List[CoverageReport]:
    """Same tail bound for asymmetric centred Z_t, normalised by Q + M^2 (Sigma_hat + Sigma).

    ``symmetric_normalizer`` drops the population term (informative only).
    """
    rng = rng if rng is not None else np.random.default_rng()
    M = 0.0 if zeta_zero else M_bound
    S, emp, pop = _rademacher_process(d, T, M, trials, rng, asym_p=asym_p)
    Q = M_bound**2 * lambda_q * np.eye(d)
    norm = Q + M_bound**2 * (emp if symmetric_normalizer else emp + pop)
    name = "self_normalized_general" + ("_empirical_only" if symmetric_normalizer else "")
    return _self_normalized_reports(name, S, norm, Q, deltas, threshold_scale,
                                    {"d": d, "T": T, "M": M_bound, "asym_p": asym_p})


def freedman_additive(d: int, n: int, delta: float) -> float:
    return 9 * d * math.log(9 * n) + 8 * math.log(2 / delta)


def check_matrix_freedman(d: int = 3, n: int = 1000, delta: float = 0.1, trials: int = 500,
                          rng: Optional[np.random.Generator] = None, n_directions: int = 100,
                          additive: bool = True, zero: bool = False) -> CoverageReport:
    """v^T Sigma v <= 2 v^T Sigma_hat v + 9 d log(9n) + 8 log(2/delta) over random unit v.

    X_i has independent +-1/sqrt(d) coordinates, so Sigma = (n/d) I.
    """
    rng = rng if rng is not None else np.random.default_rng()
    add = freedman_additive(d, n, delta) if additive else 0.0
    pop = np.zeros((d, d)) if zero else (n / d) * np.eye(d)
    violations = 0
    worst = -np.inf
    for _ in range(trials):
        if zero:
            X = np.zeros((n, d))
        else:
            X = np.where(rng.random((n, d)) < 0.5, 1.0, -1.0) / math.sqrt(d)
        emp = X.T @ X
        v = rng.standard_normal((n_directions, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        lhs = np.einsum("ki,ij,kj->k", v, pop, v)
        rhs = 2 * np.einsum("ki,ij,kj->k", v, emp, v) + add
        worst = max(worst, float(np.max(lhs - rhs)))
        if np.any(lhs > rhs):
            violations += 1
    return CoverageReport("matrix_freedman", trials, violations, delta,
                          {"d": d, "n": n, "additive": add, "worst_excess": worst})


# Deterministic potential / determinant audit ------------------------------


@dataclass
class PotentialAudit:
    ok: bool
    potential: float
    potential_bound: float
    logdet: float
    logdet_bound: float
    dump: dict = field(default_factory=dict)


def potential_bound(d: int, T: int, lam: float) -> float:
    """sqrt(d T (1 + 1/lambda) log(1 + T/(d lambda)))."""
    return math.sqrt(d * T * (1 + 1 / lam) * math.log1p(T / (d * lam)))


def check_potential_and_det(centred: np.ndarray, lam: float, rel_tol: float = 1e-9,
                            norm_bound: float = 2.0) -> PotentialAudit:
    """Recompute sum_t sqrt(Z_t^T Gamma_t^{-1} Z_t) from the raw Z_t stream and audit it.

    Gamma_t = lam I + sum_{s<=t} Z_s Z_s^T is rebuilt by prefix sums and batched
    solves, independent of the incremental inverse used during the run.
    Also checks det(Gamma_{T+1}) <= (lam + T L^2 / d)^d with L = ``norm_bound``.
    """
    Z = np.asarray(centred, dtype=np.float64)
    T, d = Z.shape
    if T == 0:
        return PotentialAudit(True, 0.0, 0.0, d * math.log(lam), d * math.log(lam))
    outer = Z[:, :, None] * Z[:, None, :]
    prefix = np.cumsum(outer, axis=0)
    grams = prefix + lam * np.eye(d)
    sol = np.linalg.solve(grams, Z[:, :, None])[:, :, 0]
    terms = np.sqrt(np.maximum(np.einsum("ti,ti->t", Z, sol), 0.0))
    lhs = float(terms.sum())
    bound = potential_bound(d, T, lam)
    final = prefix[-1] + lam * np.eye(d)
    sign, logdet = np.linalg.slogdet(final)
    logdet_bound = d * math.log(lam + T * norm_bound**2 / d)
    ok_pot = lhs <= bound * (1 + rel_tol)
    ok_det = sign > 0 and logdet <= logdet_bound + rel_tol * abs(logdet_bound)
    dump = {}
    if not (ok_pot and ok_det):
        worst = np.argsort(terms)[-5:][::-1]
        dump = {"largest_terms": [(int(i), float(terms[i])) for i in worst],
                "max_norm": float(np.linalg.norm(Z, axis=1).max())}
    return PotentialAudit(bool(ok_pot and ok_det), lhs, bound, float(logdet), logdet_bound, dump)


# Biased-OLS counterexample ---------------------------------------------------


def ols_closed_form(alpha: float):
    """Limit of least squares on the bias stream when z_1 is picked on a fraction
    ``alpha`` of the informative rounds."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    w1 = (2 * alpha + 1) ** 2 / (-4 * alpha**2 + 12 * alpha + 1)
    w2 = (4 * alpha**2 + 5) / (4 * alpha**2 - 12 * alpha - 1)
    return w1, w2


def ols_bias_demo(T: int = 10_000, rng: Optional[np.random.Generator] = None,
                  oful_scale: float = 0.0, burn_in: Optional[int] = None,
                  lambda_prime: float = 1.0) -> dict:
    """Uncentred ridge vs. the orthogonalised estimator on the bias stream.

    1. Ridge fit with the informative-round choice alternating z_1, z_2
       (alpha = 1/2 exactly when T is a multiple of 4).
    2. An OFUL learner (``oful_scale`` multiplies its width) and its regret
       after ``burn_in`` rounds against 2/3 per informative round.
    3. BOSE on the same stream: sign of its second coordinate.
    """
    if T < 2 or T % 2:
        raise ValueError("T must be an even number >= 2")
    rng = rng if rng is not None else np.random.default_rng(0)
    env = Environment(EnvKind.OLS_BIAS, 2, 2)
    batch = env.generate(T)
    rewards = batch.means + batch.offsets[:, None]

    V = lambda_prime * np.eye(2)
    b = np.zeros(2)
    picks_z1 = 0
    informative = 0
    for t in range(T):
        rnd = t + 1
        if rnd % 2 == 0:
            a = informative % 2
            informative += 1
            picks_z1 += a == 0
        else:
            a = 0
        z = batch.features[t, a]
        V += np.outer(z, z)
        b += z * rewards[t, a]
    w_ridge = np.linalg.solve(V, b)
    alpha = picks_z1 / informative
    w_closed = ols_closed_form(alpha)

    burn = T // 10 if burn_in is None else burn_in
    _, oful_regret, _ = kernels.ridge_run(kernels.KIND_OFUL, batch.features, batch.means,
                                          batch.offsets, np.zeros((T, 0)), lambda_prime,
                                          oful_scale, 0.1)
    late = oful_regret[burn:]
    informative_late = sum(1 for t in range(burn, T) if (t + 1) % 2 == 0)

    cfg = ConfidenceConfig(T, 2, 0.1, Mode.TWO_ACTION)
    lam = default_lambda(cfg)
    out = kernels.bose_run(batch.features, batch.means, batch.offsets, rng.random(T), lam,
                           gamma(cfg, lam), 1e-8, 10_000, env.theta_star)
    bose_theta = np.linalg.solve(out[7], out[8])
    return {
        "T": T,
        "alpha": alpha,
        "ridge_w": w_ridge.tolist(),
        "closed_form_w": list(w_closed),
        "ridge_w2_error": float(abs(w_ridge[1] - w_closed[1])),
        "oful_scale": oful_scale,
        "oful_regret": float(oful_regret.sum()),
        "oful_regret_after_burn_in": float(late.sum()),
        "linear_regret_floor": 0.9 * (2 / 3) * informative_late,
        "burn_in": burn,
        "bose_theta": bose_theta.tolist(),
        "bose_regret": float(out[1].sum()),
    }


def run_all(rng: np.random.Generator, quick: bool = False) -> dict:
    """Every check at its default size; returns name -> report dict."""
    scale = 5 if quick else 1
    out = {}
    out["estimator_confidence"] = check_estimator_confidence(
        5, 5, 2000 // scale, 0.1, EnvKind.CONFOUNDED_SPHERE, 200 // scale, rng).to_dict()
    out["estimator_confidence_negative_control"] = check_estimator_confidence(
        5, 5, 2000 // scale, 0.1, EnvKind.CONFOUNDED_SPHERE, 20, rng,
        threshold_scale=0.01).to_dict()
    for r in check_self_normalized_symmetric(2, 200, trials=1000 // scale, rng=rng):
        out[f"{r.name}_delta_{r.delta}"] = r.to_dict()
    for r in check_self_normalized_symmetric(2, 200, trials=200, rng=rng, threshold_scale=0.01,
                                             deltas=(0.1,)):
        out["self_normalized_symmetric_negative_control"] = r.to_dict()
    for r in check_self_normalized_symmetric(2, 200, trials=1000 // scale, rng=rng, shift=0.3,
                                             deltas=(0.1,)):
        out["self_normalized_symmetric_shifted_informative"] = r.to_dict()
    for r in check_self_normalized_general(2, 200, trials=1000 // scale, rng=rng):
        out[f"{r.name}_delta_{r.delta}"] = r.to_dict()
    for r in check_self_normalized_general(2, 200, trials=200, rng=rng, threshold_scale=0.01,
                                           deltas=(0.1,)):
        out["self_normalized_general_negative_control"] = r.to_dict()
    out["matrix_freedman"] = check_matrix_freedman(3, 1000, 0.1, 500 // scale, rng).to_dict()
    out["matrix_freedman_negative_control"] = check_matrix_freedman(
        3, 5, 0.1, 100, rng, additive=False).to_dict()
    out["ols_bias_demo"] = ols_bias_demo(10_000, rng)
    return out
