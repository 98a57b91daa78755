"""Auxiliary draws of behavior parameters and transition weights."""
import numpy as np

from ..conjugacy import sample_posterior_batch
from ..dynamics import ThetaSet, TransitionWeights, count_transitions, to_local
from ..model import pooled_raw_stats
from .common import log_gamma_rvs, log_dirichlet_rvs


def sample_eta_full(z_i, f_i, gamma, kappa, rng):
    """Log transition weights ``(K + 1, K)`` over all instantiated features.

    Rows/columns of active features follow the posterior: the normalized row
    is Dirichlet with counts added and its total mass is a fresh prior draw
    ``Gamma(K_i gamma + kappa, 1)``.  Entries touching inactive features do
    not affect the likelihood and are drawn from their Gamma prior.  Row 0
    is the initial-state pseudo-row and carries no sticky bonus.
    """
    f_i = np.asarray(f_i, dtype=bool)
    K = len(f_i)
    active = np.flatnonzero(f_i)
    K_i = len(active)
    shape = np.full((K + 1, K), float(gamma))
    shape[1:][np.diag_indices(K)] += kappa
    log_eta = log_gamma_rvs(shape, rng)

    counts = count_transitions(to_local(np.asarray(z_i, dtype=np.int64), active), K_i)
    conc = np.full((K_i + 1, K_i), float(gamma)) + counts
    conc[1:][np.diag_indices(K_i)] += kappa
    log_pi = log_dirichlet_rvs(conc, rng)
    mass = np.full(K_i + 1, K_i * gamma + kappa)
    mass[0] = K_i * gamma
    log_C = log_gamma_rvs(mass, rng)
    rows = np.concatenate(([0], active + 1))
    log_eta[np.ix_(rows, active)] = log_C[:, None] + log_pi
    return log_eta


def sample_eta(z_i, f_i, gamma, kappa, rng):
    """Posterior transition weights restricted to the active features of ``f_i``."""
    active = np.flatnonzero(f_i)
    full = sample_eta_full(z_i, f_i, gamma, kappa, rng)
    rows = np.concatenate(([0], active + 1))
    return TransitionWeights.from_log(full[np.ix_(rows, active)], active)


def sample_thetas(data, z, K, prior, rng):
    return ThetaSet(*sample_posterior_batch(prior, *pooled_raw_stats(data, z, K), rng))


def sample_auxiliary(state, data, rng):
    """Draw ``(thetas, log_etas)`` from their full conditional given (F, z)."""
    h = state.hypers
    thetas = sample_thetas(data, state.z, state.K, h.mniw, rng)
    log_etas = [sample_eta_full(zi, state.F[i], h.gamma, h.kappa, rng)
                for i, zi in enumerate(state.z)]
    return thetas, log_etas
