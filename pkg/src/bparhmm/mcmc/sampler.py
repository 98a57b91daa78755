"""The full sampler: one iteration cycles through all seven moves.

Every iteration draws from its own generator seeded by ``(seed, iteration)``,
so a run is reproducible from the state alone and a resumed chain matches
an uninterrupted one exactly.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericDegeneracyError
from ..model import SamplerState, check_consistent, compact_features, joint_log_prob
from .anneal import AnnealSchedule, anneal_inv_temperature
from .auxiliary import sample_auxiliary
from .common import ordered_joint
from .birth_death import WindowProposalConfig, birth_death_move
from .features import block_resample_all_z, emission_tables, sample_shared_features
from .hypers import HyperpriorConfig, sample_ibp_hypers, sample_transition_hypers
from .split_merge import split_merge_move

log = logging.getLogger(__name__)

MOVES = ("flip", "birth", "death", "split", "merge", "alpha", "c", "gamma", "kappa")


@dataclass
class SamplerConfig:
    iterations: int = 1000
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    window: WindowProposalConfig = field(default_factory=WindowProposalConfig)
    hyperpriors: HyperpriorConfig = field(default_factory=HyperpriorConfig)
    split_merge_per_iter: int = 1
    birth_death: bool = True
    split_merge: bool = True
    shared_flips: bool = True
    adapt_iterations: int = 0
    debug_checks: bool = False
    # test fixture: added to every birth/death log acceptance ratio
    log_accept_bias: float = 0.0


def iteration_rng(seed, iteration):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(iteration)]))


def init_state(data, hypers, seed, mode="unique", n_features=1):
    """Starting state: ``unique`` gives every sequence its own features,
    ``shared`` gives all sequences the same ``n_features`` features.

    Labels are assigned in contiguous equal-length blocks.
    """
    N = len(data)
    if mode == "unique":
        F = np.kron(np.eye(N, dtype=bool), np.ones((1, n_features), dtype=bool))
    elif mode == "shared":
        F = np.ones((N, n_features), dtype=bool)
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    z = []
    for i, seq in enumerate(data):
        own = np.flatnonzero(F[i])
        blocks = np.minimum(np.arange(seq.n_steps) * len(own) // max(seq.n_steps, 1), len(own) - 1)
        z.append(own[blocks].astype(np.int64))
    return SamplerState(F=F, z=z, hypers=hypers, iteration=0, rngSeed=int(seed))


def _tally(counts, name, accepted):
    c = counts.setdefault(name, [0, 0])
    c[0] += 1
    c[1] += int(bool(accepted))


def run_iteration(state, data, config):
    """Advance ``state`` by one iteration; returns ``(new_state, record)``.

    A numeric degeneracy anywhere in the iteration rolls the state back to
    its value at entry (only the iteration counter advances).
    """
    rng = iteration_rng(state.rngSeed, state.iteration)
    st = state.copy()
    st.inverseTemperature = anneal_inv_temperature(state.iteration, config.anneal)
    counts = {}
    event = None
    try:
        thetas, log_etas = sample_auxiliary(st, data, rng)
        log_em = emission_tables(data, thetas)
        if config.shared_flips:
            st.F, proposed, accepted = sample_shared_features(st, data, log_em, log_etas, rng)
            counts["flip"] = [proposed, accepted]
        st.z = block_resample_all_z(st, data, log_em, log_etas, rng)
        adapt = state.iteration < config.adapt_iterations
        for k, acc in sample_ibp_hypers(st, rng, config.hyperpriors, adapt).items():
            _tally(counts, k, acc)
        for k, acc in sample_transition_hypers(st, log_etas, rng, config.hyperpriors, adapt).items():
            _tally(counts, k, acc)
        del thetas, log_etas, log_em
        st.F, st.z, _ = compact_features(st.F, st.z)

        current = ordered_joint(data, st.F, st.z, st.hypers)
        if config.birth_death:
            for i in range(len(data)):
                res = birth_death_move(st, data, i, st.inverseTemperature, rng, config.window,
                                       config.log_accept_bias, current)
                _tally(counts, res.kind, res.accepted)
                if res.accepted:
                    st.F, st.z, _ = compact_features(res.F, res.z)
                    current += res.log_joint_ratio
        if config.split_merge and len(data) > 1:
            for _ in range(config.split_merge_per_iter):
                res = split_merge_move(st, data, st.inverseTemperature, rng,
                                       current_joint=current)
                _tally(counts, res.kind, res.accepted)
                if res.accepted:
                    st.F, st.z, _ = compact_features(res.F, res.z)
                    current += res.log_joint_ratio
        if config.debug_checks:
            check_consistent(st.F, st.z)
            assert st.F.any(axis=1).all() and st.F.any(axis=0).all()
    except NumericDegeneracyError as err:
        log.warning("iteration %d rolled back: %s", state.iteration, err)
        event = f"rollback: {err}"
        st = state.copy()
        counts = {}

    st.iteration = state.iteration + 1
    record = make_record(st, data, counts, event)
    return st, record


def make_record(state, data, counts, event=None):
    h = state.hypers
    rec = {
        "iteration": state.iteration,
        "jointLogProb": joint_log_prob(data, state.F, state.z, h),
        "K_plus": int(state.K),
        "inverseTemperature": state.inverseTemperature,
        "alpha": h.alpha, "c": h.c, "gamma": h.gamma, "kappa": h.kappa,
        "accept": {k: counts[k] for k in sorted(counts)},
    }
    if event:
        rec["event"] = event
    return rec


def run_sampler(config, data, state, iterations=None):
    """Yield ``(state, record)`` after each iteration."""
    n = config.iterations if iterations is None else iterations
    for _ in range(n):
        state, record = run_iteration(state, data, config)
        yield state, record
