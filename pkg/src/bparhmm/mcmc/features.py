"""Shared-feature flips and block state-sequence updates given auxiliaries."""
import numpy as np

from ..dynamics import active_log_pi, block_sample_z, emission_log_lik, sequence_log_lik


def emission_tables(data, thetas):
    return [emission_log_lik(seq.Y, seq.X, thetas) for seq in data]


def flip_log_prior_odds(m_other, N, c, currently_on):
    """log p(flipped) - log p(current) for one shared entry under the IBP predictive."""
    on = np.log(m_other) - np.log(c + N - 1)
    off = np.log(c + N - 1 - m_other) - np.log(c + N - 1)
    return off - on if currently_on else on - off


def sample_shared_features(state, data, log_em, log_etas, rng):
    """One Metropolis sweep over every shared entry of F.

    Returns ``(F, n_proposed, n_accepted)``.  Entries whose column is owned by
    no other sequence are left to birth/death.  A flip that would leave a
    row empty is rejected.
    """
    F = state.F.copy()
    N, K = F.shape
    c = state.hypers.c
    m = F.sum(axis=0)
    proposed = accepted = 0

    for i in range(N):
        def loglik(row):
            active = np.flatnonzero(row)
            return sequence_log_lik(active_log_pi(log_etas[i], active), log_em[i][:, active])

        current = loglik(F[i])
        for k in range(K):
            m_other = m[k] - F[i, k]
            if m_other < 1:
                continue
            proposed += 1
            row = F[i].copy()
            row[k] = not row[k]
            if not row.any():
                continue
            ll = loglik(row)
            log_rho = flip_log_prior_odds(m_other, N, c, F[i, k]) + ll - current
            if np.log(rng.random()) < log_rho:
                m[k] += 1 if row[k] else -1
                F[i] = row
                current = ll
                accepted += 1
    return F, proposed, accepted


def block_resample_all_z(state, data, log_em, log_etas, rng):
    """Redraw every state sequence exactly given F and the auxiliaries."""
    z = []
    for i in range(len(data)):
        active = np.flatnonzero(state.F[i])
        zl, _, _ = block_sample_z(active_log_pi(log_etas[i], active), log_em[i][:, active], rng)
        z.append(active[zl])
    return z
