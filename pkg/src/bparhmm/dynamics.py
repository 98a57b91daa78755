"""Feature-constrained AR-HMM computations for a single sequence.

Transition weights are held in log space.  A weight table has one row per
"from" state plus a leading initial-state pseudo-row, and one column per
"to" state.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from . import kernels
from .conjugacy import LOG_2PI, _cholesky
from .errors import ContractViolation


@dataclass(frozen=True, eq=False)
class ThetaSet:
    """Stacked VAR parameters for K behaviors: ``A`` (K, d, rd), ``Sigma`` (K, d, d)."""
    A: np.ndarray
    Sigma: np.ndarray

    @classmethod
    def from_params(cls, params):
        return cls(np.stack([np.atleast_2d(t.A) for t in params]),
                   np.stack([np.atleast_2d(t.Sigma) for t in params]))

    @property
    def K(self):
        return self.A.shape[0]

    @cached_property
    def _chol_inv(self):
        L = _cholesky(self.Sigma, behavior=np.arange(self.K))
        eye = np.broadcast_to(np.eye(self.A.shape[1]), L.shape)
        Linv = np.linalg.solve(L, eye)
        half_logdet = np.log(np.diagonal(L, axis1=1, axis2=2)).sum(-1)
        return Linv, half_logdet

    def subset(self, idx):
        return ThetaSet(self.A[idx], self.Sigma[idx])


@dataclass(frozen=True, eq=False)
class TransitionWeights:
    """Unnormalized weights over the active features of one sequence.

    ``eta`` has shape ``(K_i + 1, K_i)``; row 0 is the initial pseudo-row.
    ``active`` maps local indices to global feature ids.
    """
    eta: np.ndarray
    active: np.ndarray

    @classmethod
    def from_log(cls, log_eta, active):
        return cls(np.exp(log_eta), np.asarray(active))

    def log_pi(self):
        return build_transition_rows(np.log(self.eta))


def logsumexp(a, axis=None, keepdims=False):
    """Lean log-sum-exp for small arrays; all -inf input gives -inf."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        out = np.full(np.sum(a, axis=axis, keepdims=keepdims).shape, -np.inf)
        return out if out.ndim else float(out)
    mx = np.max(a, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - mx), axis=axis, keepdims=True)) + mx
    if not keepdims:
        out = np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    return out if out.ndim else float(out)


def build_transition_rows(log_eta):
    """Normalize each row of log weights into log transition probabilities."""
    log_eta = np.asarray(log_eta, dtype=float)
    mx = log_eta.max(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        norm = mx + np.log(np.exp(log_eta - mx).sum(axis=1, keepdims=True))
    if not np.all(np.isfinite(norm)):
        raise ContractViolation("transition weight row has zero mass")
    return log_eta - norm


def active_log_pi(log_eta_full, active):
    """Local log transition rows for the ``active`` subset of a full weight table.

    ``log_eta_full`` is ``(K + 1, K)`` over all instantiated features.
    """
    rows = np.concatenate(([0], np.asarray(active) + 1))
    return build_transition_rows(log_eta_full[np.ix_(rows, active)])


@lru_cache(maxsize=512)
def prior_mean_log_pi(K_i, gamma, kappa):
    """Local log transition rows built from prior-mean weights ``gamma + kappa * delta``.

    The result is cached and read-only.
    """
    eta = np.full((K_i + 1, K_i), float(gamma))
    eta[1:][np.diag_indices(K_i)] += kappa
    out = build_transition_rows(np.log(eta))
    out.flags.writeable = False
    return out


def var_log_lik(y, ylag, theta):
    """log N(y; A ylag, Sigma)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ylag = np.atleast_1d(np.asarray(ylag, dtype=float))
    A = np.atleast_2d(theta.A)
    Sigma = np.atleast_2d(theta.Sigma)
    L = _cholesky(Sigma)
    w = np.linalg.solve(L, y - A @ ylag)
    return float(-0.5 * w @ w - np.log(np.diag(L)).sum() - 0.5 * len(y) * LOG_2PI)


def emission_log_lik(Y, X, thetas):
    """Table ``(T, K)`` of ``log N(Y_t; A_k X_t, Sigma_k)``."""
    Linv, half_logdet = thetas._chol_inv
    K, d, p = thetas.A.shape
    pred = (X @ thetas.A.reshape(K * d, p).T).reshape(len(X), K, d)
    resid = np.swapaxes(Y[:, None, :] - pred, 0, 1)  # (K, T, d)
    w = resid @ np.swapaxes(Linv, -1, -2)
    return (-0.5 * (w * w).sum(-1) - half_logdet[:, None]).T - 0.5 * d * LOG_2PI


def backward_messages(log_pi, log_em):
    """Normalized log backward messages; see :func:`kernels.backward_messages`."""
    beta, norms, _ = kernels.backward_messages(log_pi, log_em)
    return beta, norms


def sequence_log_lik(log_pi, log_em):
    """``log p(y | f, eta, theta)`` with states marginalized."""
    return kernels.forward_loglik(log_pi, log_em)


def block_sample_z(log_pi, log_em, rng):
    """Exact joint draw of a local state path; returns ``(z, log_prob, loglik)``.

    ``log_prob`` is the log probability of the returned path under the
    sampler, which equals ``log p(y, z) - log p(y)``.
    """
    beta, _, loglik = kernels.backward_messages(log_pi, log_em)
    u = rng.random(log_em.shape[0])
    z = kernels.sample_path(log_pi, log_em, beta, u)
    return z, kernels.path_log_joint(log_pi, log_em, z) - loglik, loglik


def path_log_prob(log_pi, log_em, z, loglik=None):
    """Log probability that :func:`block_sample_z` returns the local path ``z``."""
    if loglik is None:
        loglik = sequence_log_lik(log_pi, log_em)
    return kernels.path_log_joint(log_pi, log_em, z) - loglik


def count_transitions(z_local, K_i):
    """Transition counts ``(K_i + 1, K_i)``; row 0 records the first state."""
    z_local = np.asarray(z_local, dtype=np.int64)
    if len(z_local) and (z_local.min() < 0 or z_local.max() >= K_i):
        raise ContractViolation("label outside active range")
    n = np.zeros((K_i + 1, K_i), dtype=np.int64)
    if len(z_local) == 0:
        return n
    n[0, z_local[0]] += 1
    np.add.at(n, (z_local[:-1] + 1, z_local[1:]), 1)
    return n


def to_local(z, active):
    """Map global labels onto positions in ``active``; raises if any label is inactive."""
    lookup = np.full(max(int(np.max(active, initial=-1)), int(np.max(z, initial=-1))) + 1, -1)
    lookup[active] = np.arange(len(active))
    local = lookup[z]
    if np.any(local < 0):
        raise ContractViolation("state sequence uses a feature the sequence does not own")
    return local
