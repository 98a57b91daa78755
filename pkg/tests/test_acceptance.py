"""Acceptance criteria, each checked at its stated tolerance.

Every test prints one ``C<n> ...: PASS|FAIL`` line (collected again in the
terminal summary).  Criteria 5, 7 and 8 are long-running.
"""
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from bparhmm import cli
from bparhmm.config import RunConfig
from bparhmm.conjugacy import BehaviorSuffStats, log_marginal_likelihood
from bparhmm.dynamics import emission_log_lik, sequence_log_lik
from bparhmm.evaluate import normalized_hamming
from bparhmm.geweke import GewekeConfig, geweke_joint_test
from bparhmm.io import read_jsonl, write_matrix_csv
from bparhmm.mcmc.birth_death import WindowProposalConfig, birth_death_log_q, birth_death_move
from bparhmm.mcmc.split_merge import split_merge_log_q, split_merge_move
from bparhmm.model import (ModelHypers, SamplerState, ibp_log_prob, joint_log_prob,
                           trans_log_prob_collapsed)
from bparhmm.oracles import (brute_joint_log_prob, brute_sequence_loglik, customer_ibp_log_prob,
                             random_tiny_instance)
from bparhmm.runner import best_sample, fit
from bparhmm.simulate import (generate_from_truth, random_ownership, sample_ibp,
                              sample_prior_thetas, separated_behaviors)

from conftest import random_prior, report_criterion
from test_conjugacy import updated_prior

MINUTE = 60.0


# ---------------------------------------------------------------- criterion 1

def test_c1_oracle_equivalence():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst_joint = worst_seq = 0.0
    for _ in range(100):
        data, F, z, h = random_tiny_instance(rng)
        worst_joint = max(worst_joint, abs(joint_log_prob(data, F, z, h)
                                           - brute_joint_log_prob(data, F, z, h)))
        thetas = sample_prior_thetas(h.mniw, F.shape[1], rng)
        for i, seq in enumerate(data):
            active = np.flatnonzero(F[i])
            log_pi = np.log(rng.dirichlet(np.ones(len(active)), size=len(active) + 1))
            log_em = emission_log_lik(seq.Y, seq.X, thetas.subset(active))
            worst_seq = max(worst_seq, abs(sequence_log_lik(log_pi, log_em)
                                           - brute_sequence_loglik(log_pi, log_em)))
    elapsed = time.perf_counter() - t0
    ok = worst_joint < 1e-8 and worst_seq < 1e-8 and elapsed < 5.0
    report_criterion("C1 oracle equivalence", ok,
                     f"max|d| joint={worst_joint:.2e} sequence={worst_seq:.2e} (tol 1e-8), "
                     f"{elapsed:.2f}s (limit 5s)")
    assert ok


# ---------------------------------------------------------------- criterion 2

def test_c2_conjugacy():
    from test_conjugacy import TestMarginalLikelihood

    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(1000):
        d, r = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        prior = random_prior(d, r, rng)
        n = int(rng.integers(2, 15))
        Y, X = rng.standard_normal((n, d)), rng.standard_normal((n, d * r))
        cut = int(rng.integers(1, n))
        s1 = BehaviorSuffStats.from_data(prior, Y[:cut], X[:cut])
        full = log_marginal_likelihood(BehaviorSuffStats.from_data(prior, Y, X), prior)
        p2 = updated_prior(prior, s1)
        part = (log_marginal_likelihood(s1, prior)
                + log_marginal_likelihood(BehaviorSuffStats.from_data(p2, Y[cut:], X[cut:]), p2))
        worst = max(worst, abs(full - part))
    try:
        TestMarginalLikelihood().test_quadrature_d1()
        quad_ok = True
    except AssertionError:
        quad_ok = False
    ok = worst < 1e-9 and quad_ok
    report_criterion("C2 conjugacy", ok, f"chain rule max|d|={worst:.2e} over 1000 splits "
                     f"(tol 1e-9); d=1 quadrature {'within' if quad_ok else 'outside'} 1e-4")
    assert ok


# ---------------------------------------------------------------- criterion 3

def _mc_trans_prob(z_local, K, gamma, kappa, rng, draws):
    prior = np.full((K + 1, K), float(gamma))
    prior[1:][np.diag_indices(K)] += kappa
    rows = [rng.dirichlet(prior[j], size=draws) for j in range(K + 1)]
    p = rows[0][:, z_local[0]].copy()
    for a, b in zip(z_local[:-1], z_local[1:]):
        p *= rows[a + 1][:, b]
    return p.mean(), p.std(ddof=1) / np.sqrt(draws)


def test_c3_collapsed_transitions():
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(20):
        K = int(rng.integers(1, 4))
        T = int(rng.integers(2, 7))
        z = rng.integers(0, K, size=T)
        gamma, kappa = rng.gamma(2.0) + 0.2, rng.gamma(2.0) * 2
        exact = np.exp(trans_log_prob_collapsed(z, np.ones(K, bool), gamma, kappa))
        mean, se = _mc_trans_prob(z, K, gamma, kappa, rng, 10 ** 6)
        worst = max(worst, abs(mean - exact) / se if se > 0 else 0.0)
    ok = worst < 3.0
    report_criterion("C3 collapsed transitions", ok,
                     f"max |exact - MC| = {worst:.2f} sigma over 20 instances, 1e6 draws (tol 3)")
    assert ok


# ---------------------------------------------------------------- criterion 4

def test_c4_ibp_calibration():
    rng = np.random.default_rng(404)
    n = 10 ** 5
    K = np.fromiter((sample_ibp(10, 2.0, 1.0, rng, nonempty_rows=False).shape[1] for _ in range(n)),
                    dtype=float, count=n)
    want = 2.0 * np.sum(1.0 / np.arange(1, 11))
    rel = abs(K.mean() - want) / want
    worst = 0.0
    for bits in range(16):
        F = np.array([(bits >> q) & 1 for q in range(4)], dtype=bool).reshape(2, 2)
        for a, c in ((1.0, 1.0), (2.0, 0.5), (0.3, 3.0)):
            worst = max(worst, abs(ibp_log_prob(F, a, c) - customer_ibp_log_prob(F, a, c)))
    ok = rel < 0.02 and worst < 1e-10
    report_criterion("C4 IBP calibration", ok,
                     f"E[K+]={K.mean():.4f} vs {want:.4f} (rel {rel:.2%}, tol 2%); "
                     f"2x2 enumeration max|d|={worst:.1e} (tol 1e-10)")
    assert ok


# ---------------------------------------------------------------- criterion 5

@pytest.mark.slow
def test_c5_geweke():
    t0 = time.perf_counter()
    good = geweke_joint_test(GewekeConfig(), 50000, np.random.default_rng(11))
    elapsed = time.perf_counter() - t0
    bad = geweke_joint_test(GewekeConfig(log_accept_bias=np.log(2.0)), 50000,
                            np.random.default_rng(11))
    ok = good.passed() and elapsed < 10 * MINUTE and not bad.passed() and bad.max_abs_z > 5.0
    report_criterion("C5 Geweke joint test", ok,
                     f"correct sampler max|z|={good.max_abs_z:.2f} (<3) in {elapsed:.0f}s "
                     f"(limit 600s); corrupted-ratio fixture max|z|={bad.max_abs_z:.2f} (>5)")
    print("  correct:", good.summary())
    print("  corrupted:", bad.summary())
    assert ok


# ---------------------------------------------------------------- criterion 6

def _replay_problem(rng):
    N, K = int(rng.integers(2, 5)), int(rng.integers(2, 5))
    F = random_ownership(N, K, rng, min_features=1)
    data, truth = generate_from_truth(F, separated_behaviors(K, 2), int(rng.integers(15, 40)),
                                      1.0, 5.0, rng)
    h = ModelHypers(alpha=1.0, c=float(rng.gamma(2.0)) + 0.2, gamma=float(rng.gamma(2.0)) + 0.2,
                    kappa=float(rng.gamma(2.0)) * 3, mniw=random_prior(2, 1, rng))
    return data, SamplerState(F=truth.trueF, z=truth.trueZ, hypers=h)


def test_c6_reversibility_accounting():
    rng = np.random.default_rng(606)
    worst = 0.0
    counts = {"birth": 0, "death": 0, "split": 0, "merge": 0}
    n_bd = n_sm = 0
    while n_bd + n_sm < 1000:
        data, state = _replay_problem(rng)
        F, z, h = state.F, state.z, state.hypers
        if n_bd < 500:
            i = int(rng.integers(len(data)))
            res = birth_death_move(state, data, i, 1.0, rng, WindowProposalConfig(5, 30))
            if not np.isfinite(res.log_q_fwd):
                continue
            F1, z1 = res.proposal
            w = res.info["window"]
            back = z[i] if res.kind == "birth" else res.info["target_z_i"]
            fwd_target = z1[i]
            if res.kind == "death":
                # death targets are given in the pre-removal labeling
                k = res.info["move"][1]
                fwd_target = np.where(z1[i] >= k, z1[i] + 1, z1[i])
            q_fwd = birth_death_log_q(data, F, z, h, i, res.info["move"], w, fwd_target)
            q_rev = birth_death_log_q(data, F1, z1, h, i, res.info["reverse"], w, back)
            n_bd += 1
        else:
            res = split_merge_move(state, data, 1.0, rng)
            info = res.info
            F1, z1 = res.proposal
            Ft, zt = info["target"]
            q_fwd = split_merge_log_q(data, F, z, h, info["i"], info["j"], info["move"],
                                      info["perm"], F1, z1)
            q_rev = split_merge_log_q(data, F1, z1, h, info["i"], info["j"], info["reverse"],
                                      info["perm"], Ft, zt)
            n_sm += 1
        counts[res.kind] += 1
        # the replayed reverse move's Hastings term is q_fwd - q_rev
        worst = max(worst, abs(res.log_hastings + (q_fwd - q_rev)))
    ok = worst < 1e-9 and all(counts.values())
    report_criterion("C6 reversibility accounting", ok,
                     f"max|forward + replayed reverse log-Hastings|={worst:.2e} over 1000 "
                     f"proposals {counts} (tol 1e-9)")
    assert ok


# ------------------------------------------------------------ criteria 7 and 8

SYNTH_SEEDS = (1, 2, 3, 4, 5)


def synthetic_dataset(root):
    """N=8 sequences, 4 well-separated VAR(1) behaviors, d=2, T=300."""
    rng = np.random.default_rng(1234)
    F = random_ownership(8, 4, rng)
    data, truth = generate_from_truth(F, separated_behaviors(4, 2), 300, 1.0, 20.0, rng)
    paths = []
    for i, seq in enumerate(data):
        path = root / "data" / f"seq{i}.csv"
        write_matrix_csv(path, seq.y)
        paths.append(str(path))
    return paths, truth


@pytest.fixture(scope="module")
def synthetic_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic")
    paths, truth = synthetic_dataset(root)
    runs = {}

    def get(seed, mode):
        if (seed, mode) not in runs:
            cfg = RunConfig(data=paths, seed=seed, out=str(root / f"{mode}_{seed}"),
                            iterations=2000, anneal_mode=mode, anneal_iterations=500)
            t0 = time.perf_counter()
            state, _ = fit(cfg)
            elapsed = time.perf_counter() - t0
            out = Path(cfg.out)
            best = best_sample(read_jsonl(out / "samples.jsonl"))
            ham = normalized_hamming([np.asarray(zi) for zi in best["z"]],
                                     truth.trueZ).normalizedHamming
            trace = [r["jointLogProb"] for r in read_jsonl(out / "trace.jsonl")]
            runs[seed, mode] = {"hamming": ham, "K": len(best["F"][0]), "seconds": elapsed,
                                "trace": trace}
        return runs[seed, mode]

    return get


@pytest.mark.slow
def test_c7_synthetic_recovery(synthetic_runs):
    res = [synthetic_runs(s, "linear") for s in SYNTH_SEEDS]
    ham = np.median([r["hamming"] for r in res])
    Ks = [r["K"] for r in res]
    slowest = max(r["seconds"] for r in res)
    ok = ham <= 0.10 and all(3 <= k <= 6 for k in Ks) and slowest < 10 * MINUTE
    report_criterion("C7 synthetic recovery", ok,
                     f"median best-sample Hamming={ham:.4f} (<=0.10), per-seed "
                     f"{[round(r['hamming'], 4) for r in res]}; K+={Ks} (in [3,6]); "
                     f"slowest seed {slowest:.0f}s (limit 600s)")
    assert ok


def iterations_to_converge(trace, frac=0.01):
    final = trace[-1]
    close = np.abs(np.asarray(trace) - final) <= frac * abs(final)
    return int(np.argmax(close)) + 1


@pytest.mark.slow
def test_c8_annealing_benefit(synthetic_runs):
    ann = [iterations_to_converge(synthetic_runs(s, "linear")["trace"]) for s in SYNTH_SEEDS]
    off = [iterations_to_converge(synthetic_runs(s, "off")["trace"]) for s in SYNTH_SEEDS]
    ok = np.median(ann) < np.median(off)
    report_criterion("C8 annealing benefit", ok,
                     f"median iterations to within 1% of final jointLogProb: annealed "
                     f"{np.median(ann):.0f} {ann} vs off {np.median(off):.0f} {off}"
                     + ("" if ok else " (diagnostic only; soft gate)"), gate=False)


# ---------------------------------------------------------------- criterion 9

def test_c9_determinism(tmp_path):
    rng = np.random.default_rng(909)
    F = random_ownership(4, 3, rng)
    data, _ = generate_from_truth(F, separated_behaviors(3, 2), 60, 1.0, 20.0, rng)
    paths = []
    for i, seq in enumerate(data):
        write_matrix_csv(tmp_path / "data" / f"s{i}.csv", seq.y)
        paths.append(str(tmp_path / "data" / f"s{i}.csv"))

    def cfg(out, iterations):
        return RunConfig(data=paths, seed=77, out=str(tmp_path / out), iterations=iterations,
                         anneal_iterations=6, window_min=10, window_max=40)

    fit(cfg("a", 12))
    fit(cfg("b", 12))
    fit(cfg("c", 6))
    from bparhmm.runner import resume
    resume(tmp_path / "c" / "checkpoint.json", 6)
    trace = {k: (tmp_path / k / "trace.jsonl").read_bytes() for k in "abc"}
    samples = {k: (tmp_path / k / "samples.jsonl").read_bytes() for k in "abc"}
    same_seed = trace["a"] == trace["b"] and samples["a"] == samples["b"]
    resumed = trace["a"] == trace["c"] and samples["a"] == samples["c"]
    ok = same_seed and resumed
    report_criterion("C9 determinism", ok,
                     f"identical seed/config traces bitwise equal: {same_seed}; "
                     f"6 + resume 6 equals uninterrupted 12: {resumed}")
    assert ok


# --------------------------------------------------------------- criterion 10

def _synthetic_mocap(root, rng, n_seq=6, frames=1800, window=12, d=12):
    """12-channel series at a high frame rate whose block averages follow a VAR(1) switching model."""
    K = 4
    F = random_ownership(n_seq, K, rng)
    coarse, truth = generate_from_truth(F, separated_behaviors(K, d, noise=0.3),
                                        frames // window, 1.0, 20.0, rng)
    raw_dir, truth_dir = root / "raw", root / "truth"
    for i, seq in enumerate(coarse):
        fine = np.repeat(seq.y, window, axis=0) + 0.01 * rng.standard_normal((frames, d))
        write_matrix_csv(raw_dir / f"seq{i:02d}.csv", fine, header=[f"ch{c}" for c in range(d)])
        t = np.arange(1, seq.T)
        write_matrix_csv(truth_dir / f"seq{i:02d}.csv", np.column_stack([t, truth.trueZ[i]]),
                         header=["time", "label"], fmt="%d")
    return sorted(raw_dir.glob("*.csv")), truth_dir


def test_c10_pipeline(tmp_path):
    user_dir = os.environ.get("BPARHMM_C10_DATA")
    if user_dir:
        raw = sorted(Path(user_dir).glob("*.csv"))
        truth_dir = Path(user_dir) / "truth"
    else:
        raw, truth_dir = _synthetic_mocap(tmp_path, np.random.default_rng(1010))
    pre, run = tmp_path / "pre", tmp_path / "run"
    codes = [cli.main(["preprocess", *map(str, raw), "--out", str(pre), "--window", "12"])]
    data = sorted(str(p) for p in pre.glob("*.csv"))
    codes.append(cli.main(["fit", "--seed", "1", "--data", *data, "--out", str(run),
                           "--iterations", "300", "--anneal-iterations", "100",
                           "--mniw", "empirical", "--window-min", "10", "--window-max", "50"]))
    detail = f"exit codes {codes}"
    if truth_dir.is_dir():
        codes.append(cli.main(["eval", "--run", str(run), "--truth", str(truth_dir)]))
        report = json.loads((run / "eval.json").read_text())
        detail = (f"exit codes {codes}; best-sample normalized Hamming "
                  f"{report['normalizedHamming']:.3f} with K+={report['K_plus']} "
                  f"(reference outcome on motion capture: nearly 0.20, not gated)")
    ok = all(c == 0 for c in codes)
    report_criterion("C10 end-to-end pipeline", ok, detail)
    assert ok
