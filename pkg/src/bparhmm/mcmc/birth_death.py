"""Data-driven birth/death of features unique to one sequence.

A birth appends a new column owned only by sequence ``i`` whose auxiliary
emission parameters are the posterior mean given a random window of that
sequence; a death removes one of the sequence's unique columns.  In both
cases ``z^(i)`` is block-sampled under prior-mean transition weights and
posterior-mean emissions, and the reverse density is obtained by replaying
the complementary move against the proposed state.
"""
from dataclasses import dataclass

import numpy as np

from ..conjugacy import posterior_mean_batch
from ..dynamics import ThetaSet
from ..model import pooled_raw_stats
from .common import MoveResult, local_target, ordered_joint, propose_z, relabel, unique_features

LOG_HALF = np.log(0.5)


@dataclass(frozen=True)
class WindowProposalConfig:
    minLen: int = 20
    maxLen: int = 100

    def __post_init__(self):
        if not 1 <= self.minLen <= self.maxLen:
            raise ValueError("need 1 <= minLen <= maxLen")


def draw_window(n_steps, cfg, rng):
    """Random subwindow ``(start, stop)``; length uniform on the clipped bounds."""
    hi = min(cfg.maxLen, n_steps)
    lo = min(cfg.minLen, hi)
    length = int(rng.integers(lo, hi + 1))
    start = int(rng.integers(0, n_steps - length + 1))
    return start, start + length


def _birth_log_choice(n_unique):
    return 0.0 if n_unique == 0 else LOG_HALF


def _death_log_choice(n_unique):
    return LOG_HALF - np.log(n_unique)


def birth_proposal(data, F, z, i, window, hypers, rng=None, target=None):
    """Append a feature owned by sequence ``i``; returns ``(F, z, log_q_z)``.

    With ``target`` (global labels in the new layout) the path is scored
    instead of sampled.
    """
    N, K = F.shape
    seq, prior = data[i], hypers.mniw
    A, Sig = posterior_mean_batch(prior, *pooled_raw_stats(data, z, K))
    s, e = window
    in_window = np.full(seq.n_steps, -1, dtype=np.int64)
    in_window[s:e] = 0
    An, Sn = posterior_mean_batch(prior, *seq.raw_stats(in_window, 1))
    F_new = np.zeros((N, K + 1), dtype=bool)
    F_new[:, :K] = F
    F_new[i, K] = True
    active = np.flatnonzero(F_new[i])
    thetas = ThetaSet(np.concatenate([A, An])[active], np.concatenate([Sig, Sn])[active])
    zl, lq = propose_z(seq, thetas, hypers.gamma, hypers.kappa, rng,
                       None if target is None else local_target(target, active))
    z_new = list(z)
    z_new[i] = active[zl]
    return F_new, z_new, lq


def death_proposal(data, F, z, i, k, hypers, rng=None, target=None):
    """Remove unique feature ``k`` of sequence ``i``; returns ``(F, z, log_q_z)``.

    ``target`` is given in the pre-removal labeling.
    """
    N, K = F.shape
    seq, prior = data[i], hypers.mniw
    remaining = np.flatnonzero(F[i])
    remaining = remaining[remaining != k]
    A, Sig = posterior_mean_batch(prior, *pooled_raw_stats(data, z, K))
    thetas = ThetaSet(A[remaining], Sig[remaining])
    zl, lq = propose_z(seq, thetas, hypers.gamma, hypers.kappa, rng,
                       None if target is None else local_target(target, remaining))
    keep = np.arange(K) != k
    mapping = np.cumsum(keep) - 1
    z_new = [mapping[zl_] for zl_ in z]
    z_new[i] = mapping[remaining[zl]]
    return F[:, keep].copy(), z_new, lq


def birth_death_log_q(data, F, z, hypers, i, move, window, z_target_i):
    """Log density of moving from (F, z) to a given target by ``move``.

    ``move`` is ``("birth",)`` or ``("death", k)``; ``z_target_i`` is the
    target path of sequence ``i`` (in the pre-move labeling for deaths and
    the post-move labeling for births).
    """
    n_i = len(unique_features(F, i))
    if move[0] == "birth":
        return _birth_log_choice(n_i) + birth_proposal(
            data, F, z, i, window, hypers, target=z_target_i)[2]
    k = move[1]
    if n_i == 0 or k not in unique_features(F, i) or F[i].sum() < 2:
        return -np.inf
    return _death_log_choice(n_i) + death_proposal(
        data, F, z, i, k, hypers, target=z_target_i)[2]


def birth_death_move(state, data, i, inv_temp, rng, cfg=None, log_accept_bias=0.0,
                     current_joint=None):
    """One birth or death proposal for sequence ``i``; returns a :class:`MoveResult`.

    ``current_joint`` may carry the already known :func:`ordered_joint` of
    the current state.

    ``log_accept_bias`` is added to the log acceptance ratio; it exists only
    so tests can check that a miscalibrated sampler is detected.
    """
    cfg = cfg or WindowProposalConfig()
    F, z, h = state.F, state.z, state.hypers
    K = F.shape[1]
    uniq = unique_features(F, i)
    n_i = len(uniq)
    window = draw_window(data[i].n_steps, cfg, rng)
    birth = n_i == 0 or rng.random() < 0.5

    if birth:
        kind = "birth"
        F1, z1, lq = birth_proposal(data, F, z, i, window, h, rng)
        log_q_fwd = _birth_log_choice(n_i) + lq
        log_q_rev = birth_death_log_q(data, F1, z1, h, i, ("death", K), window, z[i])
        info = {"i": i, "window": window, "move": ("birth",), "reverse": ("death", K)}
    else:
        kind = "death"
        k = int(uniq[rng.integers(n_i)])
        info = {"i": i, "window": window, "move": ("death", k), "reverse": ("birth",)}
        if F[i].sum() < 2:
            return MoveResult(kind, False, F, z, info=info)
        F1, z1, lq = death_proposal(data, F, z, i, k, h, rng)
        log_q_fwd = _death_log_choice(n_i) + lq
        order = [c for c in range(K) if c != k] + [k]
        _, z_back = relabel(F, z, order)
        log_q_rev = birth_death_log_q(data, F1, z1, h, i, ("birth",), window, z_back[i])
        info["target_z_i"] = z_back[i]

    if current_joint is None:
        current_joint = ordered_joint(data, F, z, h)
    log_joint = ordered_joint(data, F1, z1, h) - current_joint
    log_accept = log_joint + inv_temp * (log_q_rev - log_q_fwd) + log_accept_bias
    accepted = bool(np.log(rng.random()) < log_accept)
    return MoveResult(kind, accepted, F1 if accepted else F, z1 if accepted else z,
                      log_accept=log_accept, log_q_fwd=log_q_fwd, log_q_rev=log_q_rev,
                      log_joint_ratio=log_joint, proposal=(F1, z1), info=info)
