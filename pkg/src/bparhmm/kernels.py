"""Message-passing kernels for feature-constrained AR-HMMs.

All kernels work on *local* state indices.  ``log_pi`` has shape
``(K + 1, K)``: row 0 is the initial-state pseudo-row and row ``j + 1`` holds
transitions out of state ``j``.  ``log_em`` has shape ``(T, K)``.

Two interchangeable backends exist: numba-compiled loops and a numpy
fallback.  The backend is chosen at import from ``BPARHMM_DISABLE_NUMBA`` and
can be switched at runtime with :func:`set_backend`.
"""
import numpy as np

from ._accel import numba_disabled, numba_installed, optional_njit

__all__ = [
    "backward_messages",
    "forward_loglik",
    "sample_path",
    "path_log_joint",
    "set_backend",
    "get_backend",
    "available_backends",
]


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

@optional_njit(cache=True)
def _lse_row(v):
    m = -np.inf
    for x in v:
        if x > m:
            m = x
    if m == -np.inf:
        return m
    s = 0.0
    for x in v:
        s += np.exp(x - m)
    return m + np.log(s)


@optional_njit(cache=True)
def _backward_nb(log_pi, log_em):
    T, K = log_em.shape
    beta = np.zeros((T, K))
    norms = np.zeros(T)
    tmp = np.empty(K)
    for t in range(T - 2, -1, -1):
        cmax = -np.inf
        for j in range(K):
            for k in range(K):
                tmp[k] = log_pi[j + 1, k] + log_em[t + 1, k] + beta[t + 1, k]
            beta[t, j] = _lse_row(tmp)
            if beta[t, j] > cmax:
                cmax = beta[t, j]
        for j in range(K):
            beta[t, j] -= cmax
        norms[t] = cmax
    for k in range(K):
        tmp[k] = log_pi[0, k] + log_em[0, k] + beta[0, k]
    loglik = _lse_row(tmp) + norms.sum()
    return beta, norms, loglik


@optional_njit(cache=True)
def _forward_nb(log_pi, log_em):
    T, K = log_em.shape
    alpha = np.empty(K)
    new = np.empty(K)
    tmp = np.empty(K)
    total = 0.0
    for k in range(K):
        alpha[k] = log_pi[0, k] + log_em[0, k]
    for t in range(1, T):
        cmax = -np.inf
        for k in range(K):
            if alpha[k] > cmax:
                cmax = alpha[k]
        total += cmax
        for k in range(K):
            alpha[k] -= cmax
        for k in range(K):
            for j in range(K):
                tmp[j] = alpha[j] + log_pi[j + 1, k]
            new[k] = _lse_row(tmp) + log_em[t, k]
        for k in range(K):
            alpha[k] = new[k]
    return total + _lse_row(alpha)


@optional_njit(cache=True)
def _sample_nb(log_pi, log_em, beta, u):
    T, K = log_em.shape
    z = np.empty(T, dtype=np.int64)
    w = np.empty(K)
    prev = -1
    for t in range(T):
        cmax = -np.inf
        for k in range(K):
            w[k] = log_pi[prev + 1, k] + log_em[t, k] + beta[t, k]
            if w[k] > cmax:
                cmax = w[k]
        s = 0.0
        for k in range(K):
            w[k] = np.exp(w[k] - cmax)
            s += w[k]
        target = u[t] * s
        acc = 0.0
        choice = K - 1
        for k in range(K):
            acc += w[k]
            if target < acc and w[k] > 0.0:
                choice = k
                break
        z[t] = choice
        prev = choice
    return z


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _lse(a, axis=-1):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _backward_np(log_pi, log_em):
    T, K = log_em.shape
    beta = np.zeros((T, K))
    norms = np.zeros(T)
    trans = log_pi[1:]
    for t in range(T - 2, -1, -1):
        b = _lse(trans + (log_em[t + 1] + beta[t + 1])[None, :], axis=1)
        c = b.max()
        beta[t] = b - c
        norms[t] = c
    loglik = _lse(log_pi[0] + log_em[0] + beta[0]) + norms.sum()
    return beta, norms, float(loglik)


def _forward_np(log_pi, log_em):
    T = log_em.shape[0]
    alpha = log_pi[0] + log_em[0]
    trans = log_pi[1:]
    total = 0.0
    for t in range(1, T):
        c = alpha.max()
        total += c
        alpha = _lse(trans + (alpha - c)[:, None], axis=0) + log_em[t]
    return float(total + _lse(alpha))


def _sample_np(log_pi, log_em, beta, u):
    T, K = log_em.shape
    z = np.empty(T, dtype=np.int64)
    prev = -1
    for t in range(T):
        w = log_pi[prev + 1] + log_em[t] + beta[t]
        p = np.exp(w - w.max())
        cdf = np.cumsum(p)
        choice = int(np.searchsorted(cdf, u[t] * cdf[-1], side="right"))
        choice = min(choice, K - 1)
        while p[choice] == 0.0:  # guard against landing on a null state
            choice -= 1
        z[t] = choice
        prev = choice
    return z


_BACKENDS = {
    "numpy": (_backward_np, _forward_np, _sample_np),
}
if numba_installed and not numba_disabled:
    _BACKENDS["numba"] = (_backward_nb, _forward_nb, _sample_nb)

_active = "numba" if "numba" in _BACKENDS else "numpy"


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` kernels for subsequent calls."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(_BACKENDS)}")
    _active = name


def get_backend():
    return _active


def available_backends():
    return sorted(_BACKENDS)


def _prep(log_pi, log_em):
    return (np.ascontiguousarray(log_pi, dtype=np.float64),
            np.ascontiguousarray(log_em, dtype=np.float64))


def backward_messages(log_pi, log_em):
    """Max-normalized log backward messages.

    Returns ``(beta, norms, loglik)``; ``beta[t]`` is proportional to
    ``log p(y_{t+1:T} | z_t)`` with the per-step constant in ``norms[t]``.
    """
    log_pi, log_em = _prep(log_pi, log_em)
    beta, norms, loglik = _BACKENDS[_active][0](log_pi, log_em)
    return beta, norms, float(loglik)


def forward_loglik(log_pi, log_em):
    """``log p(y_{1:T})`` by the forward recursion, O(T K^2)."""
    log_pi, log_em = _prep(log_pi, log_em)
    return float(_BACKENDS[_active][1](log_pi, log_em))


def sample_path(log_pi, log_em, beta, u):
    """Forward-sample a state path given backward messages and uniforms ``u``."""
    log_pi, log_em = _prep(log_pi, log_em)
    return _BACKENDS[_active][2](log_pi, log_em, np.ascontiguousarray(beta),
                                 np.ascontiguousarray(u, dtype=np.float64))


def path_log_joint(log_pi, log_em, z):
    """``log p(y, z)`` for one explicit path ``z`` (local indices)."""
    z = np.asarray(z)
    T = len(z)
    out = log_pi[0, z[0]] + log_em[np.arange(T), z].sum()
    if T > 1:
        out += log_pi[z[:-1] + 1, z[1:]].sum()
    return float(out)
