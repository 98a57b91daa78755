"""Brute-force reference computations for tiny instances.

These deliberately avoid the closed forms used by the library: transition
probabilities come from the sequential Polya urn, marginal likelihoods from
the chain of one-step Student-t predictives, IBP probabilities from the
customer process, and likelihoods from explicit path enumeration.
"""
import itertools

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import multivariate_t, poisson

from .errors import ContractViolation

MAX_K = 3
MAX_STEPS = 10


class OracleSizeError(ValueError):
    """Instance too large for exhaustive enumeration."""


def _check_size(K, n_steps):
    if K > MAX_K or n_steps > MAX_STEPS:
        raise OracleSizeError(f"oracle refuses K={K}, steps={n_steps} "
                              f"(limits K<={MAX_K}, steps<={MAX_STEPS})")


def enumerate_paths(K, T):
    return itertools.product(range(K), repeat=T)


def brute_sequence_loglik(log_pi, log_em):
    """log sum over every local path of prod(transitions) * prod(emissions)."""
    T, K = log_em.shape
    _check_size(K, T)
    terms = []
    for path in enumerate_paths(K, T):
        lp = log_pi[0, path[0]] + log_em[0, path[0]]
        for t in range(1, T):
            lp += log_pi[path[t - 1] + 1, path[t]] + log_em[t, path[t]]
        terms.append(lp)
    return float(logsumexp(terms))


def polya_trans_log_prob(z_local, K_i, gamma, kappa):
    """log p(z) with Dirichlet rows integrated out, by sequential urn updates."""
    prior = np.full((K_i + 1, K_i), float(gamma))
    prior[1:][np.diag_indices(K_i)] += kappa
    counts = np.zeros_like(prior)
    out = 0.0
    prev = 0
    for s in z_local:
        row = prior[prev] + counts[prev]
        out += np.log(row[s] / row.sum())
        counts[prev, s] += 1
        prev = s + 1
    return float(out)


def predictive_log_marginal(Y, X, prior):
    """log m(Y) as a product of one-step matrix-t predictive densities."""
    d = prior.d
    Syy, Syx, Sxx = prior.seed_yy.copy(), prior.seed_yx.copy(), prior.L.copy()
    n = 0
    out = 0.0
    for y, x in zip(Y, X):
        Sxx_inv = np.linalg.inv(Sxx)
        mean_A = Syx @ Sxx_inv
        scale = Syy - Syx @ Sxx_inv @ Syx.T + prior.S0
        dof = prior.n0 + n
        nu = dof - d + 1
        shape = scale * (1.0 + x @ Sxx_inv @ x) / nu
        out += multivariate_t.logpdf(y, loc=mean_A @ x, shape=0.5 * (shape + shape.T), df=nu)
        Syy += np.outer(y, y)
        Syx += np.outer(y, x)
        Sxx += np.outer(x, x)
        n += 1
    return float(out)


def customer_ibp_log_prob(F, alpha, c):
    """Left-ordered-form probability of F via the sequential customer process.

    Customer i (0-based) takes an earlier dish with probability
    m / (c + i) and tries Poisson(alpha c / (c + i)) new dishes; summing the
    process over the matrices in F's equivalence class multiplies by
    prod_i K_new_i! / prod_h K_h!.
    """
    F = np.asarray(F, dtype=bool)
    F = F[:, F.any(axis=0)]
    N, K = F.shape
    # order columns by first owner so each customer's new dishes are contiguous
    first = np.array([np.flatnonzero(F[:, k])[0] for k in range(K)], dtype=int)
    F = F[:, np.argsort(first, kind="stable")]
    first = np.sort(first)
    out = 0.0
    for i in range(N):
        earlier = first < i
        m = F[:i, earlier].sum(axis=0)
        p = m / (c + i)
        row = F[i, earlier]
        out += float(np.sum(np.where(row, np.log(p), np.log1p(-p))))
        k_new = int(np.sum(first == i))
        out += poisson.logpmf(k_new, alpha * c / (c + i)) + gammaln(k_new + 1)
    if K:
        _, hist = np.unique(F.T, axis=0, return_counts=True)
        out -= float(np.sum(gammaln(hist + 1)))
    return float(out)


def brute_joint_log_prob(data, F, z, hypers):
    """Collapsed joint from the independent reference pieces above."""
    F = np.asarray(F, dtype=bool)
    K = F.shape[1]
    n_steps = sum(s.n_steps for s in data)
    _check_size(K, n_steps)
    out = customer_ibp_log_prob(F, hypers.alpha, hypers.c)
    for i, zi in enumerate(z):
        active = np.flatnonzero(F[i])
        lookup = {int(k): q for q, k in enumerate(active)}
        try:
            local = [lookup[int(k)] for k in zi]
        except KeyError:
            raise ContractViolation("state sequence uses a feature the sequence does not own")
        out += polya_trans_log_prob(local, len(active), hypers.gamma, hypers.kappa)
    for k in range(K):
        Y = np.concatenate([s.Y[zi == k] for s, zi in zip(data, z)])
        X = np.concatenate([s.X[zi == k] for s, zi in zip(data, z)])
        if len(Y):
            out += predictive_log_marginal(Y, X, hypers.mniw)
    return float(out)


def brute_log_evidence(data, F, hypers):
    """log p(y, F) by enumerating every state assignment consistent with F."""
    F = np.asarray(F, dtype=bool)
    _check_size(F.shape[1], sum(s.n_steps for s in data))
    per_seq = [[np.flatnonzero(F[i])[list(p)] for p in enumerate_paths(int(F[i].sum()), s.n_steps)]
               for i, s in enumerate(data)]
    terms = [brute_joint_log_prob(data, F, list(zs), hypers) for zs in itertools.product(*per_seq)]
    return float(logsumexp(terms))


def random_spd(d, rng, scale=1.0):
    G = rng.standard_normal((d, d))
    return scale * (G @ G.T / d + 0.5 * np.eye(d))


def random_tiny_instance(rng, max_K=MAX_K, max_steps=MAX_STEPS, max_d=2):
    """Random ``(data, F, z, hypers)`` small enough for the brute-force oracles (r = 1)."""
    from .conjugacy import MNIWPrior
    from .model import ModelHypers, SequenceData

    N = int(rng.integers(1, 3))
    d = int(rng.integers(1, max_d + 1))
    K = int(rng.integers(1, max_K + 1))
    while True:
        F = rng.random((N, K)) < 0.6
        if F.any(axis=1).all() and F.any(axis=0).all():
            break
    steps = rng.multinomial(max_steps - N, np.ones(N) / N) + 1
    steps = np.minimum(steps, int(rng.integers(N, max_steps + 1)))
    data, z = [], []
    for i in range(N):
        data.append(SequenceData(rng.standard_normal((int(steps[i]) + 1, d)), r=1))
        z.append(rng.choice(np.flatnonzero(F[i]), size=int(steps[i])).astype(np.int64))
    prior = MNIWPrior(n0=d + 1.0 + 3 * rng.random(), S0=random_spd(d, rng),
                      M=0.5 * rng.standard_normal((d, d)), L=random_spd(d, rng))
    hypers = ModelHypers(alpha=float(rng.gamma(2.0)) + 0.1, c=float(rng.gamma(2.0)) + 0.1,
                         gamma=float(rng.gamma(2.0)) + 0.1, kappa=float(rng.gamma(2.0) * 3),
                         mniw=prior)
    return data, F, z, hypers
