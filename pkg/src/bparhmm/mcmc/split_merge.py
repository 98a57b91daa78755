"""Split/merge of features across sequences with sequential allocation.

Layout conventions (the reverse of each move is evaluated against these):

* a split of ``km`` yields ``[columns except km] + [ka, kb]``;
* a merge of ``x, y`` yields ``[columns except x, y] + [km]``.

Anchor ``i`` always owns ``ka`` and anchor ``j`` owns ``kb``.  When both
anchors own both split features the same state is reachable with the roles
of ``ka`` and ``kb`` exchanged, so split densities and merge selection
probabilities sum over both role assignments.
"""
import numpy as np

from ..conjugacy import log_marginal_likelihood_raw, posterior_mean_batch
from ..dynamics import ThetaSet, emission_log_lik, logsumexp
from ..model import pooled_raw_stats
from .common import (MoveResult, auxiliary_loglik, local_target, ordered_joint, propose_z,
                     relabel)

PAIRS = ((0, 1), (1, 0), (1, 1))
ANCHOR_PAIRS = {"i": ((1, 0), (1, 1)), "j": ((0, 1), (1, 1))}


def kj_log_probs(prior, stats, ki, f_j):
    """log q(k_j = k | k_i, f_j) over all K columns.

    Non-split partners are weighted by the marginal-likelihood ratio of
    pooling their data with ``k_i``; ``k_i`` itself (if owned by ``j``) gets
    twice the total of those weights, so splits take 2/3 of the mass.
    """
    n, yy, yx, xx = stats
    K = len(n)
    cand = np.flatnonzero(f_j)
    others = cand[cand != ki]
    logw = np.full(K, -np.inf)
    if len(others):
        lml = log_marginal_likelihood_raw(prior, n, yy, yx, xx)
        pair = log_marginal_likelihood_raw(prior, n[ki] + n[others], yy[ki] + yy[others],
                                           yx[ki] + yx[others], xx[ki] + xx[others])
        logw[others] = pair - lml[ki] - lml[others]
    if f_j[ki]:
        logw[ki] = np.log(2.0) + logsumexp(logw[others]) if len(others) else 0.0
    return logw - logsumexp(logw)


def select_log_prob(data, F, z, prior, i, j, ki, kj, stats=None):
    """log q_k(k_i, k_j | F, z, i, j)."""
    if not (F[i, ki] and F[j, kj]):
        return -np.inf
    if stats is None:
        stats = pooled_raw_stats(data, z, F.shape[1])
    return -np.log(F[i].sum()) + kj_log_probs(prior, stats, ki, F[j])[kj]


def _merge_select_log_prob(data, F, z, prior, i, j, x, y):
    """Selection density of merging ``x, y``, summed over both orders."""
    stats = pooled_raw_stats(data, z, F.shape[1])
    out = select_log_prob(data, F, z, prior, i, j, x, y, stats)
    if F[i, y] and F[j, x]:
        out = np.logaddexp(out, select_log_prob(data, F, z, prior, i, j, y, x, stats))
    return out


def _swap_last_two(F, z):
    K = F.shape[1]
    order = list(range(K - 2)) + [K - 1, K - 2]
    return relabel(F, z, order)


def _pair_log_prior(m_a, m_b, n_prev, c, options):
    """Independent IBP predictives for the pair, restricted to ``options``.

    A coordinate fixed across all options (an anchor's own feature) is left
    out, since it cancels after restriction.
    """
    p = (m_a / (c + n_prev), m_b / (c + n_prev))
    free = [len({opt[q] for opt in options}) > 1 for q in (0, 1)]
    out = np.zeros(len(options))
    for o, opt in enumerate(options):
        for q in (0, 1):
            if free[q]:
                out[o] += np.log(p[q]) if opt[q] else np.log1p(-p[q])
    return out


def _ab_stats(seq, z_l, ka, kb):
    lab = np.full(len(z_l), -1, dtype=np.int64)
    lab[z_l == ka] = 0
    lab[z_l == kb] = 1
    return seq.raw_stats(lab, 2)


def split_proposal(data, F, z, hypers, i, j, km, perm, rng=None, target=None):
    """Sequential-allocation split of ``km``; returns ``(F, z, log_q)``.

    ``perm`` is the visiting order of the non-anchor owners of ``km``.  With
    ``target = (F_t, z_t)`` in the split layout, every choice is forced to
    the target and ``log_q`` is the density of producing it.
    """
    N, K = F.shape
    prior, c, g, kap = hypers.mniw, hypers.c, hypers.gamma, hypers.kappa
    keep = np.array([k for k in range(K) if k != km], dtype=np.int64)
    ka, kb = K - 1, K
    S = np.flatnonzero(F[:, km])

    Fn = np.zeros((N, K + 1), dtype=bool)
    Fn[:, :K - 1] = F[:, keep]
    mapping = np.full(K, -1, dtype=np.int64)
    mapping[keep] = np.arange(K - 1)
    zn = [mapping[zl] for zl in z]

    A, Sig = posterior_mean_batch(prior, *pooled_raw_stats(data, z, K))
    A, Sig = A[keep], Sig[keep]

    # anchors seed the new features with their own km segments
    Fn[i, ka] = True
    Fn[j, kb] = True
    contrib = {}
    for anchor, lab in ((i, ka), (j, kb)):
        zz = np.where(z[anchor] == km, lab, -1)
        contrib[anchor] = _ab_stats(data[anchor], zz, ka, kb)
    if target is not None:
        Ft, zt = target
        if Ft.shape != Fn.shape:
            return Fn, zn, -np.inf

    def thetas_now():
        tot = [sum(cs[q] for cs in contrib.values()) for q in range(4)]
        Ab, Sb = posterior_mean_batch(prior, *tot)
        return ThetaSet(np.concatenate([A, Ab]), np.concatenate([Sig, Sb]))

    log_q = 0.0

    def visit(l, options, m_a, m_b, n_prev):
        nonlocal log_q
        seq = data[l]
        thetas = thetas_now()
        log_em = emission_log_lik(seq.Y, seq.X, thetas)
        base = Fn[l, :K - 1]
        actives = []
        lik = np.empty(len(options))
        for o, (fa, fb) in enumerate(options):
            act = np.concatenate([np.flatnonzero(base), [ka] if fa else [], [kb] if fb else []])
            act = act.astype(np.int64)
            actives.append(act)
            lik[o] = auxiliary_loglik(log_em, act, g, kap)
        logp = _pair_log_prior(m_a, m_b, n_prev, c, options) + lik
        logp -= logsumexp(logp)
        if target is None:
            o = int(rng.choice(len(options), p=np.exp(logp)))
        else:
            want = (bool(Ft[l, ka]), bool(Ft[l, kb]))
            hits = [q for q, opt in enumerate(options) if tuple(map(bool, opt)) == want]
            if not hits:
                return False
            o = hits[0]
        log_q += logp[o]
        Fn[l, ka], Fn[l, kb] = options[o]
        act = actives[o]
        th = thetas.subset(act)
        zl, lq = propose_z(seq, th, g, kap, rng,
                           None if target is None else local_target(zt[l], act))
        log_q += lq
        zn[l] = act[zl]
        contrib[l] = _ab_stats(seq, zn[l], ka, kb)
        return True

    m_a = m_b = 1
    n_prev = 2
    for l in perm:
        if not visit(l, PAIRS, m_a, m_b, n_prev):
            return Fn, zn, -np.inf
        m_a += int(Fn[l, ka])
        m_b += int(Fn[l, kb])
        n_prev += 1

    for anchor, role in ((i, "i"), (j, "j")):
        others = S[S != anchor]
        ma = int(Fn[others, ka].sum())
        mb = int(Fn[others, kb].sum())
        if not visit(anchor, ANCHOR_PAIRS[role], ma, mb, len(others)):
            return Fn, zn, -np.inf
    return Fn, zn, log_q


def merge_proposal(data, F, z, hypers, x, y, rng=None, target=None):
    """Merge ``x, y`` into one feature owned by every owner of either; returns ``(F, z, log_q)``."""
    N, K = F.shape
    prior, g, kap = hypers.mniw, hypers.gamma, hypers.kappa
    keep = np.array([k for k in range(K) if k not in (x, y)], dtype=np.int64)
    km = K - 2
    S = np.flatnonzero(F[:, x] | F[:, y])
    Fn = np.zeros((N, K - 1), dtype=bool)
    Fn[:, :km] = F[:, keep]
    Fn[S, km] = True
    mapping = np.full(K, km, dtype=np.int64)
    mapping[keep] = np.arange(km)
    zn = [mapping[zl] for zl in z]

    n, yy, yx, xx = pooled_raw_stats(data, z, K)
    A, Sig = posterior_mean_batch(prior, n[keep], yy[keep], yx[keep], xx[keep])
    Am, Sm = posterior_mean_batch(prior, n[[x]] + n[[y]], yy[[x]] + yy[[y]],
                                  yx[[x]] + yx[[y]], xx[[x]] + xx[[y]])
    thetas = ThetaSet(np.concatenate([A, Am]), np.concatenate([Sig, Sm]))
    if target is not None and target[0].shape != Fn.shape:
        return Fn, zn, -np.inf
    log_q = 0.0
    for l in S:
        act = np.flatnonzero(Fn[l])
        zl, lq = propose_z(data[l], thetas.subset(act), g, kap, rng,
                           None if target is None else local_target(target[1][l], act))
        log_q += lq
        zn[l] = act[zl]
    return Fn, zn, log_q


def _split_log_q_roles(data, F, z, hypers, i, j, km, perm, Ft, zt, first=None):
    """Split density of reaching (Ft, zt), summed over the a/b role assignments.

    ``first`` may carry the already known density of the unswapped roles.
    """
    K = Ft.shape[1]
    out = first
    if out is None:
        out = split_proposal(data, F, z, hypers, i, j, km, perm, target=(Ft, zt))[2]
    if Ft[i, K - 1] and Ft[i, K - 2] and Ft[j, K - 2] and Ft[j, K - 1]:
        Fs, zs = _swap_last_two(Ft, zt)
        out = np.logaddexp(out, split_proposal(data, F, z, hypers, i, j, km, perm,
                                               target=(Fs, zs))[2])
    return out


def split_merge_log_q(data, F, z, hypers, i, j, move, perm, Ft, zt):
    """Total log proposal density of reaching (Ft, zt) from (F, z).

    ``move`` is ``("split", km)`` or ``("merge", x, y)``; the target must be
    in the corresponding layout.  Includes the feature-selection density.
    """
    prior = hypers.mniw
    if move[0] == "split":
        km = move[1]
        sel = select_log_prob(data, F, z, prior, i, j, km, km)
        if not np.isfinite(sel):
            return -np.inf
        return sel + _split_log_q_roles(data, F, z, hypers, i, j, km, perm, Ft, zt)
    _, x, y = move
    sel = _merge_select_log_prob(data, F, z, prior, i, j, x, y)
    if not np.isfinite(sel):
        return -np.inf
    return sel + merge_proposal(data, F, z, hypers, x, y, target=(Ft, zt))[2]


def split_merge_move(state, data, inv_temp, rng, log_accept_bias=0.0, current_joint=None):
    """One split or merge proposal; returns a :class:`MoveResult`."""
    F, z, h = state.F, state.z, state.hypers
    N, K = F.shape
    if N < 2:
        return MoveResult("none", False, F, z)
    prior = h.mniw
    i, j = (int(v) for v in rng.choice(N, size=2, replace=False))
    act_i = np.flatnonzero(F[i])
    ki = int(act_i[rng.integers(len(act_i))])
    stats = pooled_raw_stats(data, z, K)
    kj = int(rng.choice(K, p=np.exp(kj_log_probs(prior, stats, ki, F[j]))))
    S = np.flatnonzero(F[:, ki] | F[:, kj])
    perm = rng.permutation(S[(S != i) & (S != j)])
    info = {"i": i, "j": j, "ki": ki, "kj": kj, "perm": perm}

    if ki == kj:
        kind = "split"
        F1, z1, lq_path = split_proposal(data, F, z, h, i, j, ki, perm, rng)
        log_q_fwd = (select_log_prob(data, F, z, prior, i, j, ki, ki, stats)
                     + _split_log_q_roles(data, F, z, h, i, j, ki, perm, F1, z1, first=lq_path))
        info["sampled_path_log_q"] = lq_path
        Ft, zt = relabel(F, z, [k for k in range(K) if k != ki] + [ki])
        info.update(move=("split", ki), reverse=("merge", K - 1, K))
        log_q_rev = split_merge_log_q(data, F1, z1, h, i, j, ("merge", K - 1, K), perm, Ft, zt)
    else:
        kind = "merge"
        F1, z1, lq_path = merge_proposal(data, F, z, h, ki, kj, rng)
        log_q_fwd = _merge_select_log_prob(data, F, z, prior, i, j, ki, kj) + lq_path
        Ft, zt = relabel(F, z, [k for k in range(K) if k not in (ki, kj)] + [ki, kj])
        info.update(move=("merge", ki, kj), reverse=("split", K - 2))
        log_q_rev = split_merge_log_q(data, F1, z1, h, i, j, ("split", K - 2), perm, Ft, zt)
    info["target"] = (Ft, zt)

    if current_joint is None:
        current_joint = ordered_joint(data, F, z, h)
    log_joint = ordered_joint(data, F1, z1, h) - current_joint
    log_accept = log_joint + inv_temp * (log_q_rev - log_q_fwd) + log_accept_bias
    accepted = bool(np.log(rng.random()) < log_accept)
    return MoveResult(kind, accepted, F1 if accepted else F, z1 if accepted else z,
                      log_accept=log_accept, log_q_fwd=log_q_fwd, log_q_rev=log_q_rev,
                      log_joint_ratio=log_joint, proposal=(F1, z1), info=info)
