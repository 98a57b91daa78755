"""Domain types and the collapsed joint probability of the BP-AR-HMM.

Feature matrices are boolean arrays of shape ``(N, K)``; state sequences are
lists of int arrays holding 0-based global feature ids, one entry per modeled
time step (the first ``r`` observations of every sequence are conditioned on).
"""
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import gammaln, betaln

from .conjugacy import MNIWPrior, log_marginal_likelihood_raw, outer_products, stats_from_outer
from .dynamics import count_transitions, to_local
from .errors import ContractViolation

__all__ = [
    "SequenceData", "ModelHypers", "SamplerState", "MNIWPrior",
    "usage_counts", "check_consistent", "ibp_log_prob", "log_prob_nonempty_rows",
    "trans_log_prob_collapsed", "joint_log_prob", "joint_log_prob_terms",
    "compact_features",
]


class SequenceData:
    """One multivariate series with its lagged design matrix.

    ``Y`` holds the modeled observations ``y[r:]`` and ``X`` row ``t`` is
    ``[y_{t-1}; y_{t-2}; ...; y_{t-r}]`` for the matching step.
    """

    def __init__(self, y, r=1, id=None):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if r < 1:
            raise ContractViolation("lag order r must be positive")
        if y.shape[0] <= r:
            raise ContractViolation(f"sequence {id!r} has {y.shape[0]} steps; need more than r={r}")
        self.id = id
        self.y = y
        self.r = int(r)
        T, d = y.shape
        self.Y = y[r:]
        self.X = np.hstack([y[r - lag:T - lag] for lag in range(1, r + 1)])

    @property
    def d(self):
        return self.y.shape[1]

    @property
    def T(self):
        return self.y.shape[0]

    @property
    def n_steps(self):
        return self.Y.shape[0]

    yLagged = property(lambda self: self.X)

    @cached_property
    def outer(self):
        return outer_products(self.Y, self.X)

    def raw_stats(self, labels, K):
        """Per-label statistics of this sequence; labels < 0 are ignored.

        Results for recently seen label arrays are memoized; callers must not
        modify the returned arrays.
        """
        labels = np.asarray(labels, dtype=np.int64)
        key = (labels.tobytes(), K)
        cache = self.__dict__.setdefault("_stats_cache", {})
        hit = cache.get(key)
        if hit is None:
            hit = stats_from_outer(self.outer, labels, K, self.d, self.X.shape[1])
            if len(cache) >= 32:
                cache.pop(next(iter(cache)))
            cache[key] = hit
        return hit

    def __repr__(self):
        return f"SequenceData(id={self.id!r}, T={self.T}, d={self.d}, r={self.r})"


@dataclass
class ModelHypers:
    alpha: float = 1.0
    c: float = 1.0
    gamma: float = 1.0
    kappa: float = 10.0
    mniw: MNIWPrior = None

    def __post_init__(self):
        for name in ("alpha", "c", "gamma"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive")
        if not self.kappa >= 0:
            raise ContractViolation("kappa must be nonnegative")


@dataclass
class SamplerState:
    F: np.ndarray
    z: list
    hypers: ModelHypers
    iteration: int = 0
    inverseTemperature: float = 1.0
    rngSeed: int = 0
    proposal_scales: dict = field(default_factory=dict)

    def copy(self):
        return replace(self, F=self.F.copy(), z=[zi.copy() for zi in self.z],
                       hypers=replace(self.hypers), proposal_scales=dict(self.proposal_scales))

    @property
    def K(self):
        return self.F.shape[1]


def usage_counts(F):
    return np.asarray(F, dtype=bool).sum(axis=0)


def check_consistent(F, z):
    F = np.asarray(F, dtype=bool)
    if len(z) != F.shape[0]:
        raise ContractViolation(f"F has {F.shape[0]} rows but z has {len(z)} sequences")
    for i, zi in enumerate(z):
        zi = np.asarray(zi)
        if len(zi) and (zi.min() < 0 or zi.max() >= F.shape[1] or not F[i, zi].all()):
            raise ContractViolation(f"sequence {i} uses a feature it does not own")


def _harmonic(N, c):
    return float(np.sum(c / (c + np.arange(N))))


def ibp_log_prob(F, alpha, c, equivalence_class=True):
    """log probability of F under the two-parameter IBP.

    With ``equivalence_class=True`` this is the left-ordered-form (lof) pmf,
    which includes ``1 / prod_h K_h!`` over distinct column histories.  With
    ``False`` that factor is dropped: the result is the probability of F as
    a collection of distinguishable features, which is the density the
    sampler's birth/death and split/merge ratios are taken against.  Empty
    columns are ignored.
    """
    if not (alpha > 0 and c > 0):
        raise ValueError("alpha and c must be positive")
    F = np.asarray(F, dtype=bool)
    N = F.shape[0]
    m = F.sum(axis=0)
    keep = m > 0
    F, m = F[:, keep], m[keep]
    K = len(m)
    out = K * np.log(alpha * c) - alpha * _harmonic(N, c)
    out += float(np.sum(betaln(m, N - m + c)))
    if equivalence_class and K:
        _, hist_counts = np.unique(F.T, axis=0, return_counts=True)
        out -= float(np.sum(gammaln(hist_counts + 1)))
    return float(out)


@lru_cache(maxsize=256)
def log_prob_nonempty_rows(N, alpha, c):
    """log P(every row of an N-row IBP matrix has at least one feature).

    By inclusion-exclusion over sets of empty rows; any s rows of an IBP
    matrix form an s-row IBP, whose rows are all empty with probability
    ``exp(-alpha * sum_{i<s} c / (c + i))``.
    """
    # double precision suffices unless the alternating sum cancels badly
    H = np.concatenate(([0.0], np.cumsum(c / (c + np.arange(N)))))
    terms = np.exp(gammaln(N + 1) - gammaln(np.arange(N + 1) + 1)
                   - gammaln(N - np.arange(N + 1) + 1) - alpha * H)
    total = float(np.sum(terms[0::2]) - np.sum(terms[1::2]))
    if total > 1e-4 * float(np.sum(terms)):
        return float(np.log(total))

    import mpmath

    with mpmath.workdps(30 + N // 2):
        total = mpmath.mpf(0)
        H = mpmath.mpf(0)
        for s in range(N + 1):
            if s:
                H += mpmath.mpf(c) / (mpmath.mpf(c) + s - 1)
            total += (-1) ** s * mpmath.binomial(N, s) * mpmath.exp(-mpmath.mpf(alpha) * H)
        return float(mpmath.log(total))


def _trans_rows_logprob(counts, gamma, kappa):
    K_i = counts.shape[1]
    prior = np.full(counts.shape, float(gamma))
    prior[1:][np.diag_indices(K_i)] += kappa
    n_j = counts.sum(axis=1)
    a_j = prior.sum(axis=1)
    return float(np.sum(gammaln(a_j) - gammaln(a_j + n_j))
                 + np.sum(gammaln(prior + counts) - gammaln(prior)))


_trans_cache = {}


def trans_log_prob_collapsed(z_i, f_i, gamma, kappa):
    """log p(z_i | f_i, gamma, kappa) with transition rows integrated out."""
    z_i = np.asarray(z_i, dtype=np.int64)
    f_i = np.asarray(f_i, dtype=bool)
    key = (z_i.tobytes(), f_i.tobytes(), float(gamma), float(kappa))
    hit = _trans_cache.get(key)
    if hit is None:
        hit = _trans_log_prob(z_i, f_i, gamma, kappa)
        if len(_trans_cache) >= 512:
            _trans_cache.pop(next(iter(_trans_cache)))
        _trans_cache[key] = hit
    return hit


def _trans_log_prob(z_i, f_i, gamma, kappa):
    active = np.flatnonzero(f_i)
    if len(active) == 0:
        raise ContractViolation("sequence owns no features")
    local = to_local(np.asarray(z_i, dtype=np.int64), active)
    return _trans_rows_logprob(count_transitions(local, len(active)), gamma, kappa)


def joint_log_prob_terms(data, F, z, hypers, equivalence_class=True, check=True):
    """The three additive pieces of :func:`joint_log_prob`."""
    F = np.asarray(F, dtype=bool)
    if check:
        check_consistent(F, z)
        if len({s.d for s in data}) > 1 or len({s.r for s in data}) > 1:
            raise ContractViolation("all sequences must share d and r")
    K = F.shape[1]
    ibp = ibp_log_prob(F, hypers.alpha, hypers.c, equivalence_class)
    trans = sum(trans_log_prob_collapsed(zi, F[i], hypers.gamma, hypers.kappa)
                for i, zi in enumerate(z))
    lml = float(np.sum(log_marginal_likelihood_raw(hypers.mniw, *pooled_raw_stats(data, z, K))))
    return {"ibp": ibp, "trans": trans, "lik": lml}


def joint_log_prob(data, F, z, hypers, equivalence_class=True):
    """Collapsed ``log p(y, F, z | alpha, c, gamma, kappa)``.

    Sum of the IBP term, the collapsed transition term of every sequence and
    the MNIW marginal likelihood of every behavior's pooled data.
    """
    t = joint_log_prob_terms(data, F, z, hypers, equivalence_class)
    return t["ibp"] + t["trans"] + t["lik"]


def pooled_raw_stats(data, z, K):
    """Raw per-feature statistics pooled over all sequences."""
    d, p = data[0].d, data[0].X.shape[1]
    n = np.zeros(K)
    yy = np.zeros((K, d, d))
    yx = np.zeros((K, d, p))
    xx = np.zeros((K, p, p))
    for seq, zi in zip(data, z):
        a, b, c_, e = seq.raw_stats(zi, K)
        n += a
        yy += b
        yx += c_
        xx += e
    return n, yy, yx, xx


def compact_features(F, z):
    """Drop all-zero columns and relabel ``z``; returns ``(F, z, old_to_new)``.

    ``old_to_new[k]`` is -1 for removed columns.
    """
    F = np.asarray(F, dtype=bool)
    keep = F.any(axis=0)
    mapping = np.full(F.shape[1], -1, dtype=np.int64)
    mapping[keep] = np.arange(int(keep.sum()))
    if keep.all():
        return F.copy(), [np.asarray(zi).copy() for zi in z], mapping
    new_z = []
    for zi in z:
        zi = np.asarray(zi)
        if len(zi) and np.any(mapping[zi] < 0):
            raise ContractViolation("state sequence uses an unowned (empty) feature")
        new_z.append(mapping[zi])
    return F[:, keep].copy(), new_z, mapping
