"""Joint-distribution ("getting it right") test of the full sampler.

Marginal-conditional draws simulate hyperparameters, F, z and data straight
from the model.  Successive-conditional draws alternate one sampler
iteration with a fresh draw of the data given (F, z, hyperparameters).  A
correct sampler leaves the two sets of statistics identically distributed.
"""
from dataclasses import dataclass, field

import numpy as np

from .conjugacy import MNIWPrior
from .mcmc.anneal import AnnealSchedule
from .mcmc.hypers import HyperpriorConfig
from .mcmc.sampler import SamplerConfig, run_iteration
from .model import ModelHypers, SamplerState, SequenceData
from .simulate import sample_ibp, sample_prior_thetas, sample_transition_rows, simulate_sequence

STATISTICS = ("K", "sum_m", "self_transitions", "alpha")


@dataclass
class GewekeConfig:
    N: int = 2
    T: int = 10
    prior: MNIWPrior = field(default_factory=lambda: MNIWPrior(
        n0=10.0, S0=8.0 * np.eye(1), M=np.zeros((1, 1)), L=10.0 * np.eye(1)))
    hyperpriors: HyperpriorConfig = field(default_factory=HyperpriorConfig)
    n_forward: int = 20000
    n_batches: int = 50
    burn: int = 100
    log_accept_bias: float = 0.0

    def __post_init__(self):
        if self.N > 2 or self.T > 10 or self.prior.d != 1 or self.prior.p != 1:
            raise ValueError("the joint test is defined for N<=2, T<=10, d=1, r=1")


@dataclass
class GewekeReport:
    statistics: tuple
    forward_mean: dict
    forward_se: dict
    chain_mean: dict
    chain_se: dict
    z_scores: dict
    n_forward: int
    n_chain: int
    inconclusive: bool = False

    @property
    def max_abs_z(self):
        return max((abs(v) for v in self.z_scores.values()), default=np.nan)

    def passed(self, threshold=3.0):
        return not self.inconclusive and self.max_abs_z < threshold

    def summary(self):
        if self.inconclusive:
            return "inconclusive (no draws)"
        return ", ".join(f"{s}: fwd {self.forward_mean[s]:.4f} chain {self.chain_mean[s]:.4f} "
                         f"z={self.z_scores[s]:+.2f}" for s in self.statistics)


def statistics(state):
    F, z = state.F, state.z
    return {
        "K": float(F.shape[1]),
        "sum_m": float(F.sum()),
        "self_transitions": float(np.mean([np.sum(zi[1:] == zi[:-1]) for zi in z])),
        "alpha": float(state.hypers.alpha),
    }


def _draw_hypers(cfg, rng):
    hp = cfg.hyperpriors
    return ModelHypers(alpha=hp.alpha.rvs(rng), c=hp.c.rvs(rng), gamma=hp.gamma.rvs(rng),
                       kappa=hp.kappa.rvs(rng), mniw=cfg.prior)


def _draw_data(F, z, hypers, cfg, rng):
    """Fresh (y, theta) given (F, z); the conditioning frame is standard normal."""
    thetas = sample_prior_thetas(cfg.prior, F.shape[1], rng)
    data = []
    for zi in z:
        y = np.zeros((cfg.T, 1))
        y[0] = rng.standard_normal(1)
        for t in range(1, cfg.T):
            k = zi[t - 1]
            y[t] = thetas.A[k] @ y[t - 1] + np.sqrt(thetas.Sigma[k, 0, 0]) * rng.standard_normal(1)
        data.append(SequenceData(y, r=1))
    return data


def forward_draw(cfg, rng):
    """One exact draw of (state, data) from the model."""
    h = _draw_hypers(cfg, rng)
    F = sample_ibp(cfg.N, h.alpha, h.c, rng)
    thetas = sample_prior_thetas(cfg.prior, F.shape[1], rng)
    data, z = [], []
    for i in range(cfg.N):
        log_pi = sample_transition_rows(F[i], h.gamma, h.kappa, rng)
        y, zi = simulate_sequence(F[i], thetas, cfg.T, log_pi, rng)
        data.append(SequenceData(y, r=1))
        z.append(zi)
    return SamplerState(F=F, z=z, hypers=h), data


def _batch_se(x, n_batches):
    x = np.asarray(x, dtype=float)
    n_batches = min(n_batches, len(x))
    if n_batches < 2:
        return np.nan
    b = len(x) // n_batches
    means = x[:b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def geweke_joint_test(cfg, iterations, rng):
    """Run the test with ``iterations`` successive-conditional steps."""
    if iterations <= 0:
        return GewekeReport(STATISTICS, {}, {}, {}, {}, {}, 0, 0, inconclusive=True)
    fwd = [statistics(forward_draw(cfg, rng)[0]) for _ in range(cfg.n_forward)]

    sampler_cfg = SamplerConfig(anneal=AnnealSchedule(0, "off"), hyperpriors=cfg.hyperpriors,
                                log_accept_bias=cfg.log_accept_bias)
    state, data = forward_draw(cfg, rng)
    state.rngSeed = int(rng.integers(2 ** 63))
    chain = []
    for s in range(cfg.burn + iterations):
        state, _ = run_iteration(state, data, sampler_cfg)
        data = _draw_data(state.F, state.z, state.hypers, cfg, rng)
        if s >= cfg.burn:
            chain.append(statistics(state))

    out = {k: {} for k in ("fm", "fs", "cm", "cs", "z")}
    for name in STATISTICS:
        f = np.array([d[name] for d in fwd])
        c = np.array([d[name] for d in chain])
        out["fm"][name] = float(f.mean())
        out["fs"][name] = float(f.std(ddof=1) / np.sqrt(len(f)))
        out["cm"][name] = float(c.mean())
        out["cs"][name] = _batch_se(c, cfg.n_batches)
        se = np.hypot(out["fs"][name], out["cs"][name])
        out["z"][name] = float((out["cm"][name] - out["fm"][name]) / se) if se > 0 else 0.0
    return GewekeReport(STATISTICS, out["fm"], out["fs"], out["cm"], out["cs"], out["z"],
                        len(fwd), len(chain))
