"""Driving a chain from a :class:`RunConfig`: setup, output files, checkpoints."""
import logging
import math
import time
from pathlib import Path

from .conjugacy import MNIWPrior
from .config import HYPER_NAMES, RunConfig, canonical_json
from .errors import ConfigError, NumericDegeneracyError
from .io import (TraceWriter, export_segmentation, load_checkpoint, load_sequences, read_jsonl,
                 save_checkpoint, truncate_jsonl)
from .mcmc.anneal import AnnealSchedule
from .mcmc.birth_death import WindowProposalConfig
from .mcmc.hypers import GammaHyperprior, HyperpriorConfig
from .mcmc.sampler import SamplerConfig, init_state, run_iteration
from .model import ModelHypers
from .preprocess import empirical_bayes_mniw

log = logging.getLogger(__name__)

__all__ = ["sampler_config", "build_prior", "initial_state", "run_chain", "fit", "resume",
           "best_sample"]


def sampler_config(cfg):
    hp = HyperpriorConfig(**{n: GammaHyperprior(getattr(cfg, f"{n}_shape"), getattr(cfg, f"{n}_rate"))
                             for n in HYPER_NAMES}, sample=tuple(cfg.sample_hypers))
    return SamplerConfig(
        iterations=cfg.iterations,
        anneal=AnnealSchedule(cfg.anneal_iterations, cfg.anneal_mode),
        window=WindowProposalConfig(cfg.window_min, cfg.window_max),
        hyperpriors=hp, split_merge_per_iter=cfg.split_merge_per_iter,
        birth_death=cfg.birth_death, split_merge=cfg.split_merge,
        shared_flips=cfg.shared_flips, adapt_iterations=cfg.adapt_iterations)


def build_prior(cfg, data):
    if cfg.mniw == "empirical":
        return empirical_bayes_mniw([s.y for s in data], cfg.r, cfg.s0_multiplier,
                                    cfg.l_multiplier, cfg.n0)
    return MNIWPrior.default(data[0].d, cfg.r, n0=cfg.n0, s0_scale=cfg.s0_multiplier,
                             l_scale=cfg.l_multiplier)


def initial_state(cfg, data, prior=None):
    if cfg.seed is None:
        raise ConfigError("a seed is required")
    hypers = ModelHypers(alpha=cfg.alpha, c=cfg.c, gamma=cfg.gamma, kappa=cfg.kappa,
                         mniw=prior if prior is not None else build_prior(cfg, data))
    return init_state(data, hypers, cfg.seed, cfg.init_mode, cfg.init_features)


def best_sample(samples):
    """The stored sample with the highest joint log probability (earliest on ties)."""
    return max(samples, key=lambda s: (s["jointLogProb"], -s["iteration"]))


def run_chain(cfg, data, state, out_dir, iterations, append=False):
    """Advance ``state`` by ``iterations``, writing trace, samples and checkpoints.

    Returns the final state.  Consecutive rolled-back iterations beyond
    ``cfg.max_rollbacks`` abort with :class:`NumericDegeneracyError`.
    """
    out = Path(out_dir)
    scfg = sampler_config(cfg)
    ckpt = out / "checkpoint.json"
    rollbacks = 0
    with TraceWriter(out, mode="a" if append else "w") as writer:
        for _ in range(iterations):
            t0 = time.perf_counter()
            state, record = run_iteration(state, data, scfg)
            if not math.isfinite(record["jointLogProb"]):
                raise NumericDegeneracyError(f"joint log probability is {record['jointLogProb']} "
                                             f"at iteration {state.iteration}")
            rollbacks = rollbacks + 1 if "event" in record else 0
            if rollbacks > cfg.max_rollbacks:
                raise NumericDegeneracyError(f"{rollbacks} consecutive iterations rolled back; "
                                             f"last: {record['event']}")
            if state.iteration % cfg.thin == 0:
                writer.write(record, time.perf_counter() - t0, state)
            if cfg.checkpoint_every and state.iteration % cfg.checkpoint_every == 0:
                writer.flush()
                save_checkpoint(ckpt, state, cfg)
    save_checkpoint(ckpt, state, cfg)
    samples = read_jsonl(out / "samples.jsonl")
    if samples:
        best = best_sample(samples)
        export_segmentation(out / "segmentation", data, best["F"], best["z"])
    return state


def fit(cfg, out_dir=None):
    """Load data, build the initial state and run ``cfg.iterations``."""
    out = Path(out_dir or cfg.out)
    data = load_sequences(cfg.data, cfg.r, cfg.columns)
    state = initial_state(cfg, data)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(canonical_json(cfg.to_dict()) + "\n")
    log.info("fitting %d sequences, d=%d, seed %d", len(data), data[0].d, cfg.seed)
    return run_chain(cfg, data, state, out, cfg.iterations), data


def resume(checkpoint, iterations, out_dir=None):
    """Continue a run from its checkpoint; outputs past the checkpoint are discarded."""
    state, cfg_dict = load_checkpoint(checkpoint)
    cfg = RunConfig.from_dict(cfg_dict)
    out = Path(out_dir) if out_dir else Path(checkpoint).parent
    for name in ("trace.jsonl", "timing.jsonl", "samples.jsonl"):
        truncate_jsonl(out / name, state.iteration)
    data = load_sequences(cfg.data, cfg.r, cfg.columns)
    return run_chain(cfg, data, state, out, iterations, append=True), data
