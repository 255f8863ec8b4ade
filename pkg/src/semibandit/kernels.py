"""Hot numeric kernels.

Everything here is written in the numpy subset numba understands, so the same
source runs jitted or, with ``SEMIBANDIT_DISABLE_JIT=1``, as plain numpy.
Arrays are float64, C-contiguous. Functions that take ``gram``/``gram_inv``
mutate them in place.
"""
import numpy as np

from ._jit import njit

RECOMPUTE_EVERY = 512

KIND_OFUL = 0
KIND_THOMPSON = 1
KIND_EPSGREEDY = 2


@njit
def symmetrize(m):
    n = m.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            v = 0.5 * (m[i, j] + m[j, i])
            m[i, j] = v
            m[j, i] = v


@njit
def rank_one_update(gram, gram_inv, z, count):
    """Add z z^T to ``gram`` and keep ``gram_inv`` in step.

    ``count`` is the update count *after* this update; the inverse is rebuilt
    from scratch whenever it is a multiple of RECOMPUTE_EVERY.
    """
    gram += np.outer(z, z)
    if count % RECOMPUTE_EVERY == 0:
        symmetrize(gram)
        gram_inv[:, :] = np.linalg.inv(gram)
    else:
        u = gram_inv @ z
        denom = 1.0 + z @ u
        gram_inv -= np.outer(u, u) / denom
        symmetrize(gram)
    symmetrize(gram_inv)


@njit
def quad_form(v, m):
    return v @ (m @ v)


@njit
def filter_mask(features, theta_hat, gram_inv, gamma):
    """Keep a iff <theta_hat, z_b - z_a> <= gamma * ||z_a - z_b||_{gram_inv} for all b."""
    k = features.shape[0]
    keep = np.ones(k, dtype=np.bool_)
    for a in range(k):
        for b in range(k):
            if a == b:
                continue
            diff = features[b] - features[a]
            lhs = theta_hat @ diff
            if lhs <= 0.0:
                continue
            width = np.sqrt(max(quad_form(diff, gram_inv), 0.0))
            if lhs > gamma * width:
                keep[a] = False
                break
    return keep


@njit
def metric_gram(features, gram_inv):
    """Pairwise inner products of centred features under gram_inv."""
    centre = np.zeros(features.shape[1])
    for i in range(features.shape[0]):
        centre += features[i]
    centre /= features.shape[0]
    c = features - centre
    return c @ gram_inv @ c.T


@njit
def feasibility_gap(w, g):
    """max_i ||z_i - mu_w||^2 - tr(M Cov_w), from the metric Gram matrix ``g``.

    This is always >= 0: its w-weighted average over i is exactly zero.
    """
    gw = g @ w
    wgw = w @ gw
    best = -np.inf
    for i in range(g.shape[0]):
        v = g[i, i] - 2.0 * gw[i] + wgw
        if v > best:
            best = v
    spread = 0.0
    for i in range(g.shape[0]):
        spread += w[i] * g[i, i]
    return best - (spread - wgw)


@njit
def solve_max_spread(g, eps, max_iters):
    """Maximise tr(M Cov_w) over the simplex by Frank-Wolfe with away steps.

    The optimality gap of this concave quadratic equals ``feasibility_gap``,
    so stopping at gap <= eps yields a feasible exploration distribution.
    Returns (w, gap, iterations).
    """
    n = g.shape[0]
    w = np.full(n, 1.0 / n)
    b = np.empty(n)
    for i in range(n):
        b[i] = g[i, i]
    best_w = w.copy()
    best_gap = np.inf
    for it in range(max_iters + 1):
        gw = g @ w
        grad = b - 2.0 * gw
        avg = grad @ w
        i_up = 0
        for i in range(1, n):
            if grad[i] > grad[i_up]:
                i_up = i
        gap = grad[i_up] - avg
        if gap < best_gap:
            best_gap = gap
            best_w[:] = w
        if gap <= eps or it == max_iters:
            break
        i_down = -1
        for i in range(n):
            if w[i] > 0.0 and (i_down < 0 or grad[i] < grad[i_down]):
                i_down = i
        away_gap = avg - grad[i_down]
        direction = -w
        if gap >= away_gap:
            direction[i_up] += 1.0
            max_step = 1.0
        else:
            direction = w.copy()
            direction[i_down] -= 1.0
            if w[i_down] < 1.0:
                max_step = w[i_down] / (1.0 - w[i_down])
            else:
                max_step = np.inf
        slope = grad @ direction
        curv = direction @ (g @ direction)
        if curv > 0.0:
            step = min(max_step, slope / (2.0 * curv))
        else:
            step = max_step
        if not np.isfinite(step):
            break
        w = w + step * direction
        total = 0.0
        for i in range(n):
            if w[i] < 0.0:
                w[i] = 0.0
            total += w[i]
        w /= total
    return best_w, best_gap, it


@njit
def solve_eg(g, eps, max_iters, step_scale):
    """Exponentiated-gradient descent on the feasibility gap itself.

    Subgradient from the lowest-index maximising constraint, step
    step_scale / sqrt(k). Returns (best w, best gap, iterations).
    """
    n = g.shape[0]
    w = np.full(n, 1.0 / n)
    best_w = w.copy()
    best_gap = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        gw = g @ w
        wgw = w @ gw
        i_max = 0
        v_max = -np.inf
        spread = 0.0
        for i in range(n):
            v = g[i, i] - 2.0 * gw[i] + wgw
            if v > v_max:
                v_max = v
                i_max = i
            spread += w[i] * g[i, i]
        gap = v_max - (spread - wgw)
        if gap < best_gap:
            best_gap = gap
            best_w[:] = w
        if gap <= eps:
            break
        sub = np.empty(n)
        for k in range(n):
            sub[k] = -2.0 * g[i_max, k] + 4.0 * gw[k] - g[k, k]
        sub -= sub.max()
        w = w * np.exp(-(step_scale / np.sqrt(it)) * sub)
        w /= w.sum()
    return best_w, best_gap, it


@njit
def sample_index(probs, u):
    """Inverse-CDF draw from ``probs`` using one uniform ``u`` in [0, 1)."""
    acc = 0.0
    last = 0
    for i in range(probs.shape[0]):
        if probs[i] > 0.0:
            last = i
            acc += probs[i]
            if u < acc:
                return i
    return last


@njit
def bose_round(features, theta_hat, gram_inv, gamma, eps, max_iters, u):
    """One BOSE action choice. Returns (action, mu, probs over all K, gap)."""
    k, d = features.shape
    keep = filter_mask(features, theta_hat, gram_inv, gamma)
    idx = np.flatnonzero(keep)
    probs = np.zeros(k)
    gap = 0.0
    if idx.shape[0] == 1:
        probs[idx[0]] = 1.0
    else:
        sub = np.empty((idx.shape[0], d))
        for j in range(idx.shape[0]):
            sub[j] = features[idx[j]]
        g = metric_gram(sub, gram_inv)
        w, gap, _ = solve_max_spread(g, eps, max_iters)
        for j in range(idx.shape[0]):
            probs[idx[j]] = w[j]
    a = sample_index(probs, u)
    mu = probs @ features
    return a, mu, probs, gap


@njit
def bose_run(features, means, offsets, uniforms, lam, gamma, eps, max_iters, theta):
    """Full BOSE loop over pre-drawn rounds.

    ``means[t, a] = <theta, z_{t,a}>``; realised reward is
    ``means[t, a] + offsets[t]``. Returns actions, per-round regret, centred
    features Z_t, the potential sum, the largest ||theta_hat - theta||_Gamma
    seen, the number of unconverged solves, the worst solver gap, the final
    gram and moment vector.
    """
    T, K, d = features.shape
    gram = lam * np.eye(d)
    gram_inv = np.eye(d) / lam
    moment = np.zeros(d)
    theta_hat = np.zeros(d)
    actions = np.zeros(T, dtype=np.int64)
    regret = np.zeros(T)
    centred = np.zeros((T, d))
    potential = 0.0
    err = theta_hat - theta
    conf_max = np.sqrt(max(quad_form(err, gram), 0.0))
    unconverged = 0
    worst_gap = 0.0
    for t in range(T):
        a, mu, probs, gap = bose_round(
            features[t], theta_hat, gram_inv, gamma, eps, max_iters, uniforms[t]
        )
        if gap > eps:
            unconverged += 1
        if gap > worst_gap:
            worst_gap = gap
        actions[t] = a
        best = means[t, 0]
        for b in range(1, K):
            if means[t, b] > best:
                best = means[t, b]
        regret[t] = best - means[t, a]
        z = features[t, a] - mu
        centred[t] = z
        reward = means[t, a] + offsets[t]
        rank_one_update(gram, gram_inv, z, t + 1)
        # Gamma_t already contains Z_t
        potential += np.sqrt(max(quad_form(z, gram_inv), 0.0))
        moment += z * reward
        theta_hat = gram_inv @ moment
        err = theta_hat - theta
        c = np.sqrt(max(quad_form(err, gram), 0.0))
        if c > conf_max:
            conf_max = c
    return (actions, regret, centred, potential, conf_max, unconverged,
            worst_gap, gram, moment)


@njit
def oful_beta(scale, lam, delta, d, n):
    return scale * (np.sqrt(lam) + np.sqrt(2.0 * np.log(1.0 / delta)
                                           + d * np.log(1.0 + n / (d * lam))))


@njit
def ridge_choose(kind, features, theta, v_inv, param, beta, draws):
    k, d = features.shape
    if kind == KIND_OFUL:
        best = 0
        best_score = -np.inf
        for a in range(k):
            z = features[a]
            s = theta @ z + beta * np.sqrt(max(quad_form(z, v_inv), 0.0))
            if s > best_score:
                best_score = s
                best = a
        return best
    if kind == KIND_THOMPSON:
        if param > 0.0:
            chol = np.linalg.cholesky(param * v_inv)
            sample = theta + chol @ draws[:d]
        else:
            sample = theta
        return np.argmax(features @ sample)
    # epsilon-greedy
    if draws[0] < param:
        return min(int(draws[1] * k), k - 1)
    return np.argmax(features @ theta)


@njit
def ridge_run(kind, features, means, offsets, draws, lam, param, delta):
    """Uncentred ridge baselines (OFUL / Thompson / epsilon-greedy) over pre-drawn rounds."""
    T, K, d = features.shape
    v = lam * np.eye(d)
    v_inv = np.eye(d) / lam
    b = np.zeros(d)
    theta = np.zeros(d)
    actions = np.zeros(T, dtype=np.int64)
    regret = np.zeros(T)
    for t in range(T):
        beta = 0.0
        if kind == KIND_OFUL:
            beta = oful_beta(param, lam, delta, d, t)
        a = ridge_choose(kind, features[t], theta, v_inv, param, beta, draws[t])
        actions[t] = a
        best = means[t, 0]
        for j in range(1, K):
            if means[t, j] > best:
                best = means[t, j]
        regret[t] = best - means[t, a]
        z = features[t, a]
        rank_one_update(v, v_inv, z.copy(), t + 1)
        b += z * (means[t, a] + offsets[t])
        theta = v_inv @ b
    return actions, regret, theta
