"""Random-walk Metropolis updates of the IBP and transition hyperparameters.

All four parameters move on a log scale (kappa on ``log(kappa + eps)`` so
that zero is reachable from the interior), with Gamma hyperpriors.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from ..model import ibp_log_prob, log_prob_nonempty_rows

TARGET_ACCEPT = 0.44
DEFAULT_SCALE = 0.5


@dataclass(frozen=True)
class GammaHyperprior:
    shape: float = 1.0
    rate: float = 1.0

    def logpdf(self, x):
        a, b = self.shape, self.rate
        if x < 0 or (x == 0 and a > 1):
            return -np.inf
        if x == 0:
            return np.inf if a < 1 else np.log(b)
        return a * np.log(b) - gammaln(a) + (a - 1) * np.log(x) - b * x

    def rvs(self, rng):
        return rng.gamma(self.shape, 1.0 / self.rate)


@dataclass
class HyperpriorConfig:
    alpha: GammaHyperprior = field(default_factory=GammaHyperprior)
    c: GammaHyperprior = field(default_factory=GammaHyperprior)
    gamma: GammaHyperprior = field(default_factory=GammaHyperprior)
    kappa: GammaHyperprior = field(default_factory=GammaHyperprior)
    sample: tuple = ("alpha", "c", "gamma", "kappa")
    kappa_eps: float = 1e-6


def adapt_scale(scale, accepted, step):
    """Robbins-Monro step toward the target acceptance rate, gain decaying with ``step``."""
    gain = 1.0 / (1.0 + step) ** 0.6
    return float(np.exp(np.log(scale) + gain * ((1.0 if accepted else 0.0) - TARGET_ACCEPT)))


def _rw_step(name, value, log_target, state, rng, adapt, shift=0.0):
    """One log-scale random-walk step on ``value``; returns ``(value, accepted)``.

    ``shift`` moves the walk to ``log(value + shift)``; the Jacobian of that
    map is folded into the acceptance ratio.
    """
    scale = state.proposal_scales.get(name, DEFAULT_SCALE)
    u = np.log(value + shift)
    u_new = u + scale * rng.standard_normal()
    new = np.exp(u_new) - shift
    accepted = False
    if new > 0 or (shift > 0 and new >= 0):
        log_rho = log_target(new) + u_new - log_target(value) - u
        accepted = bool(np.log(rng.random()) < log_rho)
    if adapt:
        state.proposal_scales[name] = adapt_scale(scale, accepted, state.iteration)
    return (new if accepted else value), accepted


def ibp_hyper_log_target(F, alpha, c, prior_alpha, prior_c):
    """log p(F | alpha, c, rows nonempty) + log hyperpriors."""
    if alpha <= 0 or c <= 0:
        return -np.inf
    N = F.shape[0]
    return (ibp_log_prob(F, alpha, c, equivalence_class=False)
            - log_prob_nonempty_rows(N, alpha, c)
            + prior_alpha.logpdf(alpha) + prior_c.logpdf(c))


def eta_summaries(log_etas):
    """Sums of log weights split into self-transition and other entries."""
    s_self = s_off = 0.0
    n_self = n_off = 0
    for le in log_etas:
        K = le.shape[1]
        diag = np.diagonal(le[1:])
        s_self += float(diag.sum())
        s_off += float(le.sum() - diag.sum())
        n_self += K
        n_off += le.size - K
    return s_self, n_self, s_off, n_off


def transition_hyper_log_target(summ, gamma, kappa, prior_gamma, prior_kappa):
    """log prod Gamma(eta; gamma + kappa * delta, 1) + log hyperpriors (eta-only terms dropped)."""
    if gamma <= 0 or kappa < 0:
        return -np.inf
    s_self, n_self, s_off, n_off = summ
    return ((gamma - 1) * s_off - n_off * gammaln(gamma)
            + (gamma + kappa - 1) * s_self - n_self * gammaln(gamma + kappa)
            + prior_gamma.logpdf(gamma) + prior_kappa.logpdf(kappa))


def sample_ibp_hypers(state, rng, cfg, adapt=False):
    """Update alpha then c in place; returns per-parameter acceptance flags."""
    h, F = state.hypers, state.F
    out = {}
    if "alpha" in cfg.sample:
        h.alpha, out["alpha"] = _rw_step(
            "alpha", h.alpha, lambda a: ibp_hyper_log_target(F, a, h.c, cfg.alpha, cfg.c),
            state, rng, adapt)
    if "c" in cfg.sample:
        h.c, out["c"] = _rw_step(
            "c", h.c, lambda c: ibp_hyper_log_target(F, h.alpha, c, cfg.alpha, cfg.c),
            state, rng, adapt)
    return out


def sample_transition_hypers(state, log_etas, rng, cfg, adapt=False):
    """Update gamma then kappa in place given the auxiliary weights."""
    h = state.hypers
    summ = eta_summaries(log_etas)
    out = {}
    if "gamma" in cfg.sample:
        h.gamma, out["gamma"] = _rw_step(
            "gamma", h.gamma,
            lambda g: transition_hyper_log_target(summ, g, h.kappa, cfg.gamma, cfg.kappa),
            state, rng, adapt)
    if "kappa" in cfg.sample:
        h.kappa, out["kappa"] = _rw_step(
            "kappa", h.kappa,
            lambda k: transition_hyper_log_target(summ, h.gamma, k, cfg.gamma, cfg.kappa),
            state, rng, adapt, shift=cfg.kappa_eps)
    return out


def sample_hypers(state, log_etas, rng, cfg, adapt=False):
    out = sample_ibp_hypers(state, rng, cfg, adapt)
    out.update(sample_transition_hypers(state, log_etas, rng, cfg, adapt))
    return out
