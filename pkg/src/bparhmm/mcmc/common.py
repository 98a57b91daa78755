from dataclasses import dataclass, field

import numpy as np

from ..conjugacy import posterior_mean_batch
from ..dynamics import (ThetaSet, block_sample_z, emission_log_lik, logsumexp, path_log_prob,
                        prior_mean_log_pi, sequence_log_lik, to_local)
from ..model import joint_log_prob_terms


def log_gamma_rvs(shape, rng):
    """log of Gamma(shape, 1) draws, stable for tiny shapes.

    Uses ``G(a) = G(a + 1) * U^{1/a}`` so draws never underflow to -inf.
    """
    shape = np.asarray(shape, dtype=float)
    g = rng.gamma(shape + 1.0)
    u = rng.random(shape.shape)
    return np.log(g) + np.log(u) / shape


def log_dirichlet_rvs(conc, rng):
    g = log_gamma_rvs(conc, rng)
    return g - logsumexp(g, axis=-1, keepdims=True)


def posterior_mean_thetas(prior, n, yy, yx, xx):
    A, Sigma = posterior_mean_batch(prior, n, yy, yx, xx)
    return ThetaSet(A, Sigma)


def propose_z(seq, thetas, gamma, kappa, rng=None, target=None):
    """Block-sample a local path under prior-mean weights, or score ``target``.

    ``thetas`` holds the active features of the sequence in local order.
    Returns ``(z_local, log_q)``.
    """
    log_pi = prior_mean_log_pi(thetas.K, gamma, kappa)
    log_em = emission_log_lik(seq.Y, seq.X, thetas)
    if target is None:
        zl, lq, _ = block_sample_z(log_pi, log_em, rng)
        return zl, lq
    return target, path_log_prob(log_pi, log_em, target)


def auxiliary_loglik(log_em, active, gamma, kappa):
    """``log p(y | f, eta_hat, theta_hat)`` for columns ``active`` of an emission table."""
    return sequence_log_lik(prior_mean_log_pi(len(active), gamma, kappa), log_em[:, active])


def local_target(z_global, active):
    return to_local(np.asarray(z_global, dtype=np.int64), active)


def unique_features(F, i):
    m = F.sum(axis=0)
    return np.flatnonzero(F[i] & (m == 1))


def relabel(F, z, order):
    """Reorder columns of F by ``order`` (old indices) and remap z to match."""
    order = np.asarray(order, dtype=np.int64)
    inv = np.full(F.shape[1], -1, dtype=np.int64)
    inv[order] = np.arange(len(order))
    return F[:, order], [inv[zi] for zi in z]


def ordered_joint(data, F, z, hypers):
    """Collapsed joint with F treated as a set of distinguishable features."""
    t = joint_log_prob_terms(data, F, z, hypers, equivalence_class=False, check=False)
    return t["ibp"] + t["trans"] + t["lik"]


@dataclass
class MoveResult:
    """Outcome of one birth/death or split/merge proposal.

    ``log_q_fwd`` and ``log_q_rev`` are the full proposal log densities of the
    forward move and of its exact reverse; ``info`` holds the move-specific
    choices needed to replay it.
    """
    kind: str
    accepted: bool
    F: np.ndarray
    z: list
    log_accept: float = np.nan
    log_q_fwd: float = np.nan
    log_q_rev: float = np.nan
    log_joint_ratio: float = np.nan
    proposal: tuple = None
    info: dict = field(default_factory=dict)

    @property
    def log_hastings(self):
        return self.log_q_rev - self.log_q_fwd
