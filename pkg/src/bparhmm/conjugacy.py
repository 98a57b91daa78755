"""Matrix-normal inverse-Wishart machinery for VAR behaviors.

A behavior ``k`` has parameters ``A`` (d x rd lag block) and ``Sigma``
(d x d).  The prior is

    Sigma ~ IW(n0, S0),    A | Sigma ~ MN(M, Sigma, L)

with ``L`` the column *precision*.  Sufficient statistics are stored in the
prior-seeded form, so a behavior with no data has ``Syy = M L M'``,
``Syx = M L`` and ``Sxx = L``.
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .errors import ContractViolation, NumericDegeneracyError

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
LOG_PI = np.log(np.pi)

# Counters surfaced in run reports.
numeric_events = {"jitter": 0, "mode_substitution": 0}


def log_mv_gamma(d, a):
    """log of the d-dimensional multivariate gamma function."""
    d = int(d)
    if d < 1:
        raise ValueError("d must be a positive integer")
    a = np.asarray(a, dtype=float)
    if np.any(a <= (d - 1) / 2.0):
        raise ValueError(f"log_mv_gamma: argument must exceed {(d - 1) / 2}, got {a}")
    j = np.arange(1, d + 1)
    return d * (d - 1) / 4.0 * np.log(np.pi) + gammaln(a[..., None] + (1 - j) / 2.0).sum(-1)


def _cholesky(mat, behavior=None):
    """Cholesky factor; retries once with a small diagonal jitter."""
    try:
        out = np.linalg.cholesky(mat)
        if np.isfinite(out).all():
            return out
    except np.linalg.LinAlgError:
        pass
    if mat.ndim == 3:
        return np.stack([_cholesky(m, behavior=(k if behavior is None else behavior[k]))
                         for k, m in enumerate(mat)])
    d = mat.shape[-1]
    tr = np.trace(mat)
    if np.isfinite(tr) and tr > 0:
        numeric_events["jitter"] += 1
        log.warning("adding jitter to factorize matrix for behavior %s", behavior)
        try:
            return np.linalg.cholesky(mat + 1e-10 * tr / d * np.eye(d))
        except np.linalg.LinAlgError:
            pass
    raise NumericDegeneracyError(
        f"matrix for behavior {behavior} is not positive definite", behavior=behavior)


def _logdet_chol(chol):
    return 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(-1)


@dataclass(frozen=True, eq=False)
class MNIWPrior:
    n0: float
    S0: np.ndarray
    M: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        S0 = np.atleast_2d(np.asarray(self.S0, dtype=float))
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        object.__setattr__(self, "S0", S0)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "L", L)
        d, p = M.shape
        if S0.shape != (d, d) or L.shape != (p, p):
            raise ContractViolation(f"MNIW shapes disagree: S0 {S0.shape}, M {M.shape}, L {L.shape}")
        if not self.n0 > d - 1:
            raise ContractViolation(f"n0={self.n0} must exceed d-1={d - 1}")
        for name, mat in (("S0", S0), ("L", L)):
            if not np.allclose(mat, mat.T):
                raise ContractViolation(f"{name} must be symmetric")
            try:
                np.linalg.cholesky(mat)
            except np.linalg.LinAlgError:
                raise ContractViolation(f"{name} must be positive definite") from None

    @property
    def d(self):
        return self.M.shape[0]

    @property
    def p(self):
        return self.M.shape[1]

    @cached_property
    def logdet_S0(self):
        return float(np.linalg.slogdet(self.S0)[1])

    @cached_property
    def logdet_L(self):
        return float(np.linalg.slogdet(self.L)[1])

    @cached_property
    def log_norm(self):
        """Prior-only constant of the log marginal likelihood."""
        return float(-log_mv_gamma(self.d, 0.5 * self.n0) + 0.5 * self.n0 * self.logdet_S0
                     + 0.5 * self.d * self.logdet_L)

    @cached_property
    def seed_yy(self):
        return self.M @ self.L @ self.M.T

    @cached_property
    def seed_yx(self):
        return self.M @ self.L

    @classmethod
    def default(cls, d, r, n0=None, s0_scale=1.0, l_scale=1.0):
        p = d * r
        return cls(n0=float(d + 2 if n0 is None else n0), S0=s0_scale * np.eye(d),
                   M=np.zeros((d, p)), L=l_scale * np.eye(p))


@dataclass(frozen=True, eq=False)
class BehaviorSuffStats:
    """Prior-seeded sufficient statistics of one behavior."""
    Syy: np.ndarray
    Syx: np.ndarray
    Sxx: np.ndarray
    count: int

    @classmethod
    def empty(cls, prior):
        return cls(prior.seed_yy.copy(), prior.seed_yx.copy(), prior.L.copy(), 0)

    @classmethod
    def from_data(cls, prior, Y, X):
        Y = np.asarray(Y, dtype=float).reshape(-1, prior.d)
        X = np.asarray(X, dtype=float).reshape(-1, prior.p)
        return cls(prior.seed_yy + Y.T @ Y, prior.seed_yx + Y.T @ X,
                   prior.L + X.T @ X, len(Y))

    def update(self, y, ylag, direction="add"):
        y = np.asarray(y, dtype=float).ravel()
        x = np.asarray(ylag, dtype=float).ravel()
        if direction == "add":
            sign = 1.0
        elif direction == "remove":
            if self.count == 0:
                raise ContractViolation("cannot remove an observation from empty statistics")
            sign = -1.0
        else:
            raise ValueError(f"direction must be 'add' or 'remove', got {direction!r}")
        return BehaviorSuffStats(self.Syy + sign * np.outer(y, y),
                                 self.Syx + sign * np.outer(y, x),
                                 self.Sxx + sign * np.outer(x, x),
                                 self.count + int(sign))

    @cached_property
    def chol_xx(self):
        return _cholesky(self.Sxx)

    @cached_property
    def schur(self):
        """``S_{y|x} = Syy - Syx Sxx^{-1} Syx'``."""
        w = linalg.solve_triangular(self.chol_xx, self.Syx.T, lower=True)
        s = self.Syy - w.T @ w
        return 0.5 * (s + s.T)


@dataclass(frozen=True, eq=False)
class BehaviorParams:
    A: np.ndarray
    Sigma: np.ndarray


@dataclass(frozen=True, eq=False)
class MNIWPosterior:
    meanA: np.ndarray
    colPrecision: np.ndarray
    dof: float
    scale: np.ndarray


def log_marginal_likelihood(stats, prior):
    """log m(Y_k), the VAR likelihood integrated over (A, Sigma)."""
    if stats.count == 0:
        return 0.0
    return float(log_marginal_likelihood_batch(
        np.array([stats.count]), stats.Syy[None], stats.Syx[None], stats.Sxx[None], prior)[0])


def log_marginal_likelihood_batch(n, Syy, Syx, Sxx, prior):
    """Vectorized :func:`log_marginal_likelihood` over a stack of seeded stats."""
    n = np.asarray(n, dtype=float)
    out = np.zeros(len(n))
    idx = np.flatnonzero(n > 0)
    if len(idx) == 0:
        return out
    d = prior.d
    Lx = _cholesky(Sxx[idx], behavior=idx)
    W = np.linalg.solve(Lx, np.swapaxes(Syx[idx], -1, -2))  # (m, p, d)
    post = Syy[idx] - np.swapaxes(W, -1, -2) @ W + prior.S0
    post = 0.5 * (post + np.swapaxes(post, -1, -2))
    Lp = _cholesky(post, behavior=idx)
    nk = n[idx]
    a = 0.5 * (nk + prior.n0)
    mvg = gammaln(a) if d == 1 else log_mv_gamma(d, a)
    out[idx] = (-0.5 * nk * d * LOG_PI + mvg + prior.log_norm
                - a * _logdet_chol(Lp) - 0.5 * d * _logdet_chol(Lx))
    return out


def posterior_params(prior, stats):
    meanA = linalg.cho_solve((stats.chol_xx, True), stats.Syx.T).T
    return MNIWPosterior(meanA=meanA, colPrecision=stats.Sxx,
                         dof=stats.count + prior.n0, scale=stats.schur + prior.S0)


def sample_posterior_theta(prior, stats, rng):
    """One draw of ``(A, Sigma)`` from the posterior given seeded ``stats``."""
    A, Sigma = sample_posterior_batch(prior, np.array([stats.count]), stats.Syy[None],
                                      stats.Syx[None], stats.Sxx[None], rng, seeded=True)
    return BehaviorParams(A=A[0], Sigma=Sigma[0])


def posterior_mean_theta(prior, stats):
    post = posterior_params(prior, stats)
    d = prior.d
    if post.dof > d + 1:
        Sigma = post.scale / (post.dof - d - 1)
    else:
        numeric_events["mode_substitution"] += 1
        log.warning("posterior mean of Sigma undefined (dof=%s); using the mode", post.dof)
        Sigma = post.scale / (post.dof + d + 1)
    return BehaviorParams(A=post.meanA, Sigma=Sigma)


# ---------------------------------------------------------------------------
# Batched helpers over many behaviors
# ---------------------------------------------------------------------------

def outer_products(Y, X):
    """Row-wise ``[y y', y x', x x']`` flattened to shape ``(T, d*d + d*p + p*p)``."""
    (T, d), p = Y.shape, X.shape[1]
    return np.concatenate([np.einsum("ti,tj->tij", Y, Y).reshape(T, d * d),
                           np.einsum("ti,tj->tij", Y, X).reshape(T, d * p),
                           np.einsum("ti,tj->tij", X, X).reshape(T, p * p)], axis=1)


def stats_from_outer(outer, labels, K, d, p):
    """Sum precomputed outer products by label; labels < 0 are ignored."""
    labels = np.asarray(labels)
    ok = labels >= 0
    n = np.bincount(labels[ok], minlength=K)[:K].astype(float)
    onehot = np.zeros((K, len(labels)))
    onehot[labels[ok], np.flatnonzero(ok)] = 1.0
    flat = onehot @ outer
    yy = flat[:, :d * d].reshape(K, d, d)
    yx = flat[:, d * d:d * d + d * p].reshape(K, d, p)
    xx = flat[:, d * d + d * p:].reshape(K, p, p)
    return n, yy, yx, xx


def raw_stats(Y, X, labels, K):
    """Per-label data statistics ``(n, YY, YX, XX)`` without prior seeding.

    Labels < 0 are ignored.
    """
    return stats_from_outer(outer_products(Y, X), labels, K, Y.shape[1], X.shape[1])


def seed(prior, n, yy, yx, xx):
    return n, yy + prior.seed_yy, yx + prior.seed_yx, xx + prior.L


def log_marginal_likelihood_raw(prior, n, yy, yx, xx):
    return log_marginal_likelihood_batch(*seed(prior, n, yy, yx, xx), prior)


def posterior_mean_batch(prior, n, yy, yx, xx):
    """Posterior means ``(A[K], Sigma[K])`` from raw statistics."""
    n, Syy, Syx, Sxx = seed(prior, n, yy, yx, xx)
    d = prior.d
    K = len(n)
    if K == 0:
        return np.zeros((0, d, prior.p)), np.zeros((0, d, d))
    Lx = _cholesky(Sxx, behavior=np.arange(K))
    W = np.linalg.solve(Lx, np.swapaxes(Syx, -1, -2))
    # meanA' = Sxx^{-1} Syx' = Lx^{-T} W
    A = np.swapaxes(np.linalg.solve(np.swapaxes(Lx, -1, -2), W), -1, -2)
    scale = Syy - np.swapaxes(W, -1, -2) @ W + prior.S0
    scale = 0.5 * (scale + np.swapaxes(scale, -1, -2))
    dof = n + prior.n0
    div = np.where(dof > d + 1, dof - d - 1, dof + d + 1)
    if np.any(dof <= d + 1):
        numeric_events["mode_substitution"] += int(np.sum(dof <= d + 1))
    return A, scale / div[:, None, None]


def sample_posterior_batch(prior, n, yy, yx, xx, rng, seeded=False):
    """Independent posterior draws ``(A[K], Sigma[K])``.

    ``Sigma`` uses the Bartlett decomposition: if ``scale = C C'`` and ``B``
    is the lower-triangular Bartlett factor with ``dof`` degrees of freedom,
    then ``Sigma = M M'`` with ``M = C B^{-T}``.  ``A`` is matrix normal with
    row covariance ``Sigma`` and column covariance ``Sxx^{-1}``.
    """
    if not seeded:
        n, yy, yx, xx = seed(prior, n, yy, yx, xx)
    n = np.asarray(n, dtype=float)
    d, p, K = prior.d, prior.p, len(n)
    if K == 0:
        return np.zeros((0, d, p)), np.zeros((0, d, d))
    Lx = _cholesky(xx, behavior=np.arange(K))
    W = np.linalg.solve(Lx, np.swapaxes(yx, -1, -2))
    meanA = np.swapaxes(np.linalg.solve(np.swapaxes(Lx, -1, -2), W), -1, -2)
    scale = yy - np.swapaxes(W, -1, -2) @ W + prior.S0
    C = _cholesky(0.5 * (scale + np.swapaxes(scale, -1, -2)), behavior=np.arange(K))
    dof = n + prior.n0
    B = np.zeros((K, d, d))
    B[:, np.arange(d), np.arange(d)] = np.sqrt(rng.chisquare(dof[:, None] - np.arange(d)))
    low = np.tril_indices(d, -1)
    B[:, low[0], low[1]] = rng.standard_normal((K, len(low[0])))
    M = np.swapaxes(np.linalg.solve(B, np.swapaxes(C, -1, -2)), -1, -2)
    Sigma = M @ np.swapaxes(M, -1, -2)
    Z = rng.standard_normal((K, d, p))
    # noise = M Z Lx^{-1}, so its column covariance is Lx^{-T} Lx^{-1} = Sxx^{-1}
    noise = np.swapaxes(np.linalg.solve(np.swapaxes(Lx, -1, -2),
                                        np.swapaxes(M @ Z, -1, -2)), -1, -2)
    return meanA + noise, Sigma
