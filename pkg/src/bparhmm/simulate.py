"""Forward simulation of the BP-AR-HMM."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .conjugacy import BehaviorParams, sample_posterior_batch
from .dynamics import ThetaSet, build_transition_rows
from .mcmc.common import log_gamma_rvs
from .model import SequenceData

log = logging.getLogger(__name__)


@dataclass
class GroundTruth:
    trueF: np.ndarray
    trueZ: list
    trueThetas: ThetaSet


def _zero_truncated_poisson(lam, rng):
    lo = np.exp(-lam)
    u = lo + rng.random() * (1.0 - lo)
    return max(1, int(poisson.ppf(u, lam)))


def _bernoulli_nonempty(p, rng):
    """Independent Bernoulli(p) vector conditioned on at least one success."""
    out = np.zeros(len(p), dtype=bool)
    # P(first success at k) = prod_{l<k} (1 - p_l) p_k, renormalized
    surv = np.concatenate(([1.0], np.cumprod(1.0 - p)[:-1]))
    w = surv * p
    k = int(rng.choice(len(p), p=w / w.sum()))
    out[k] = True
    out[k + 1:] = rng.random(len(p) - k - 1) < p[k + 1:]
    return out


def _ibp_row(m, i, alpha, c, rng, nonempty):
    """Row ``i`` (0-based) of the two-parameter IBP given column counts ``m``.

    Returns ``(existing, n_new, p_nonempty)``.
    """
    p = m / (c + i)
    lam = alpha * c / (c + i)
    p_empty = float(np.prod(1.0 - p)) * np.exp(-lam)
    if not nonempty:
        return rng.random(len(m)) < p, int(rng.poisson(lam)), 1.0 - p_empty
    p_new = 1.0 - np.exp(-lam)
    p_ne = 1.0 - p_empty
    if len(m) == 0 or rng.random() < p_new / p_ne:
        return rng.random(len(m)) < p, _zero_truncated_poisson(lam, rng), p_ne
    return _bernoulli_nonempty(p, rng), 0, p_ne


def sample_ibp(N, alpha, c, rng, nonempty_rows=True):
    """Draw an N-row feature matrix from the two-parameter IBP.

    With ``nonempty_rows`` the draw is exact from the IBP conditioned on every
    row owning at least one feature: rows come from their conditionals given
    nonemptiness and the whole matrix is accepted with probability
    ``prod_{i>1} P(row i nonempty | earlier rows)``.
    """
    attempts = 0
    while True:
        attempts += 1
        cols = []
        accept_logp = 0.0
        for i in range(N):
            m = np.array([sum(col) for col in cols], dtype=float)
            existing, n_new, p_ne = _ibp_row(m, i, alpha, c, rng, nonempty_rows)
            for col, bit in zip(cols, existing):
                col.append(bool(bit))
            for _ in range(n_new):
                cols.append([False] * i + [True])
            if i > 0:
                accept_logp += np.log(p_ne)
        if not nonempty_rows or np.log(rng.random()) < accept_logp:
            break
    if attempts > 1:
        log.info("feature matrix redrawn %d times to keep rows nonempty", attempts - 1)
    F = np.array(cols, dtype=bool).T if cols else np.zeros((N, 0), dtype=bool)
    return F.reshape(N, len(cols))


def sample_prior_thetas(prior, K, rng):
    zeros = np.zeros(K)
    return ThetaSet(*sample_posterior_batch(prior, zeros, np.zeros((K, prior.d, prior.d)),
                                            np.zeros((K, prior.d, prior.p)),
                                            np.zeros((K, prior.p, prior.p)), rng))


def sample_transition_rows(f_i, gamma, kappa, rng):
    """Local log transition rows from Gamma(gamma + kappa * delta) weights."""
    K_i = int(np.sum(f_i))
    shape = np.full((K_i + 1, K_i), float(gamma))
    shape[1:][np.diag_indices(K_i)] += kappa
    return build_transition_rows(log_gamma_rvs(shape, rng))


def simulate_sequence(f_i, thetas, T, log_pi, rng, r=1, y0=None):
    """Draw ``(y, z)`` for one sequence; ``z`` holds global labels for steps ``r..T-1``."""
    active = np.flatnonzero(f_i)
    d = thetas.A.shape[1]
    y = np.zeros((T, d))
    y[:r] = rng.standard_normal((r, d)) if y0 is None else y0
    Lc = np.linalg.cholesky(thetas.Sigma)
    pi = np.exp(log_pi)
    z = np.empty(T - r, dtype=np.int64)
    prev = 0
    for t in range(r, T):
        s = int(rng.choice(len(active), p=pi[prev]))
        k = active[s]
        z[t - r] = k
        x = np.concatenate([y[t - lag] for lag in range(1, r + 1)])
        y[t] = thetas.A[k] @ x + Lc[k] @ rng.standard_normal(d)
        prev = s + 1
    return y, z


def generate_synthetic(hypers, N, T, d, r, rng):
    """Forward-simulate a dataset and its ground truth from the full model."""
    F = sample_ibp(N, hypers.alpha, hypers.c, rng)
    thetas = sample_prior_thetas(hypers.mniw, F.shape[1], rng)
    return generate_from_truth(F, thetas, T, hypers.gamma, hypers.kappa, rng, r)


def generate_from_truth(F, thetas, T, gamma, kappa, rng, r=1):
    data, zs = [], []
    for i in range(F.shape[0]):
        log_pi = sample_transition_rows(F[i], gamma, kappa, rng)
        y, z = simulate_sequence(F[i], thetas, T, log_pi, rng, r)
        data.append(SequenceData(y, r=r, id=f"seq{i}"))
        zs.append(z)
    return data, GroundTruth(np.asarray(F, dtype=bool), zs, thetas)


def separated_behaviors(K, d, rng=None, radius=0.9, noise=0.1):
    """K stable VAR(1) behaviors with well-separated dynamics.

    Behavior ``k`` rotates by ``2 pi k / K`` in the first coordinate plane
    and contracts by ``radius``; noise scales alternate so behaviors with
    similar dynamics still differ in their residual covariance.
    """
    A = np.zeros((K, d, d))
    Sigma = np.zeros((K, d, d))
    for k in range(K):
        ang = 2 * np.pi * k / K
        A[k] = radius * np.eye(d)
        A[k, :2, :2] = radius * np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        Sigma[k] = (noise * (1.0 + k % 2)) ** 2 * np.eye(d)
    return ThetaSet(A, Sigma)


def random_ownership(N, K, rng, min_features=2):
    """Random feature matrix in which every row owns ``>= min_features`` and every column is used."""
    while True:
        F = np.zeros((N, K), dtype=bool)
        for i in range(N):
            n = int(rng.integers(min_features, K + 1))
            F[i, rng.choice(K, size=n, replace=False)] = True
        if F.any(axis=0).all():
            return F


__all__ = ["GroundTruth", "BehaviorParams", "sample_ibp", "generate_synthetic",
           "generate_from_truth", "separated_behaviors", "random_ownership",
           "simulate_sequence", "sample_transition_rows", "sample_prior_thetas"]
