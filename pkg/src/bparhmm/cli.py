"""Command-line entry points.

Exit codes: 0 success, 1 failed check, 2 configuration error, 3 data error,
4 numeric degeneracy.
"""
import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import RunConfig, canonical_json, load_config
from .conjugacy import MNIWPrior
from .errors import ConfigError, ContractViolation, DataLoadError, NumericDegeneracyError
from .evaluate import normalized_hamming
from .io import (export_segmentation, read_jsonl, read_labels, read_matrix_csv,
                 write_matrix_csv)
from .model import ModelHypers
from .preprocess import block_average_downsample, scale_first_difference
from .runner import best_sample, fit, resume
from .simulate import generate_from_truth, generate_synthetic, random_ownership, separated_behaviors

log = logging.getLogger("bparhmm")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _run_config_flags(p):
    """Add one flag per :class:`RunConfig` field (``--name`` or ``--no-name`` for booleans)."""
    g = p.add_argument_group("run configuration (overrides the config file)")
    for f in fields(RunConfig):
        if f.name in ("seed", "data", "out", "iterations"):
            continue
        flag = "--" + f.name.replace("_", "-")
        default = f.default
        if f.name in ("columns", "sample_hypers"):
            g.add_argument(flag, dest=f.name, default=None,
                           help="comma-separated list" + (" of column indices" if f.name == "columns" else ""))
        elif isinstance(default, bool):
            g.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif isinstance(default, int):
            g.add_argument(flag, dest=f.name, type=int, default=None)
        elif isinstance(default, float) or f.name == "n0":
            g.add_argument(flag, dest=f.name, type=float, default=None)
        else:
            g.add_argument(flag, dest=f.name, default=None)


def _collect_config(args):
    base = load_config(args.config).to_dict() if args.config else RunConfig().to_dict()
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is None:
            continue
        if f.name == "columns":
            v = _int_list(v)
        elif f.name == "sample_hypers":
            v = [s for s in v.split(",") if s]
        base[f.name] = v
    if base.get("data"):
        base["data"] = [str(Path(p).resolve()) for p in base["data"]]
    return RunConfig.from_dict(base)


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def cmd_preprocess(args):
    columns = _int_list(args.columns) if args.columns else None
    raw = [read_matrix_csv(p, columns) for p in args.input]
    if len({y.shape[1] for y in raw}) > 1:
        raise DataLoadError("input files disagree in dimension")
    series = [block_average_downsample(y, args.window) for y in raw]
    scales = np.ones(series[0].shape[1])
    if args.scale:
        series, scales = scale_first_difference(series)
    out = Path(args.out)
    for path, y in zip(args.input, series):
        write_matrix_csv(out / Path(path).name, y)
    (out / "preprocess.json").write_text(canonical_json({
        "inputs": [str(p) for p in args.input], "columns": columns, "window": args.window,
        "scaled": bool(args.scale), "scales": scales.tolist()}) + "\n")
    print(f"wrote {len(series)} sequences to {out}")
    return EXIT_OK


def cmd_simulate(args):
    rng = np.random.default_rng(args.seed)
    if args.separated:
        F = random_ownership(args.N, args.separated, rng)
        thetas = separated_behaviors(args.separated, args.d, rng)
        data, truth = generate_from_truth(F, thetas, args.T, args.gamma, args.kappa, rng, args.r)
    else:
        hypers = ModelHypers(alpha=args.alpha, c=args.c, gamma=args.gamma, kappa=args.kappa,
                             mniw=MNIWPrior.default(args.d, args.r))
        data, truth = generate_synthetic(hypers, args.N, args.T, args.d, args.r, rng)
    out = Path(args.out)
    for i, seq in enumerate(data):
        write_matrix_csv(out / "data" / f"seq{i:03d}.csv", seq.y)
        seq.id = f"seq{i:03d}"
    export_segmentation(out / "truth", data, truth.trueF, truth.trueZ)
    (out / "truth" / "thetas.json").write_text(canonical_json(
        {"A": truth.trueThetas.A.tolist(), "Sigma": truth.trueThetas.Sigma.tolist()}) + "\n")
    print(f"simulated {len(data)} sequences with K={truth.trueF.shape[1]} into {out}")
    return EXIT_OK


def _fit_summary(state, out):
    return {"iteration": state.iteration, "K_plus": int(state.K), "out": str(out)}


def cmd_fit(args):
    cfg = _collect_config(args)
    cfg.seed = args.seed
    if args.data:
        cfg.data = [str(Path(p).resolve()) for p in args.data]
    if args.out:
        cfg.out = args.out
    if args.iterations is not None:
        cfg.iterations = args.iterations
    cfg.validate()
    if not cfg.data:
        raise ConfigError("no data files (use --data or the config key 'data')")
    missing = [p for p in cfg.data if not Path(p).exists()]
    if missing:
        raise ConfigError(f"data file not found: {missing[0]}")
    state, _ = fit(cfg)
    print(json.dumps(_fit_summary(state, cfg.out)))
    return EXIT_OK


def cmd_resume(args):
    state, _ = resume(args.checkpoint, args.iterations, args.out)
    print(json.dumps(_fit_summary(state, args.out or Path(args.checkpoint).parent)))
    return EXIT_OK


def _label_files(paths):
    if len(paths) == 1 and Path(paths[0]).is_dir():
        return sorted(p for p in Path(paths[0]).glob("*.csv") if p.name != "F.csv")
    return [Path(p) for p in paths]


def cmd_eval(args):
    run = Path(args.run)
    cfg = RunConfig.from_dict(json.loads((run / "config.json").read_text()))
    samples = read_jsonl(run / "samples.jsonl")
    if not samples:
        raise DataLoadError(f"{run / 'samples.jsonl'}: no samples")
    if args.iteration is None:
        sample = best_sample(samples)
    else:
        hits = [s for s in samples if s["iteration"] == args.iteration]
        if not hits:
            raise ConfigError(f"no stored sample at iteration {args.iteration}")
        sample = hits[0]
    truth_files = _label_files(args.truth)
    if len(truth_files) != len(sample["z"]):
        raise DataLoadError(f"{len(truth_files)} truth files for {len(sample['z'])} sequences")
    est, true = [], []
    for path, zi in zip(truth_files, sample["z"]):
        t_true, lab = read_labels(path)
        t_est = np.arange(cfg.r, cfg.r + len(zi))
        zi = np.asarray(zi)
        if args.count_initial:
            # frames before the first modeled step take its label
            t_est = np.concatenate([np.arange(cfg.r), t_est])
            zi = np.concatenate([np.full(cfg.r, zi[0]), zi])
        pos = {int(t): q for q, t in enumerate(t_est)}
        sel = [q for q, t in enumerate(t_true) if int(t) in pos]
        est.append(zi[[pos[int(t_true[q])] for q in sel]])
        true.append(lab[sel])
    res = normalized_hamming(est, true)
    report = {"iteration": sample["iteration"], "jointLogProb": sample["jointLogProb"],
              "K_plus": len(sample["F"][0]), "normalizedHamming": res.normalizedHamming,
              "mapping": {str(k): v for k, v in sorted(res.mapping.items())},
              "steps": int(sum(len(e) for e in est))}
    (run / "eval.json").write_text(canonical_json(report) + "\n")
    print(json.dumps(report))
    return EXIT_OK


def cmd_oracle_check(args):
    from .dynamics import sequence_log_lik
    from .model import joint_log_prob
    from .oracles import brute_joint_log_prob, brute_sequence_loglik, random_tiny_instance

    rng = np.random.default_rng(args.seed)
    worst_joint = worst_seq = 0.0
    for _ in range(args.instances):
        data, F, z, h = random_tiny_instance(rng)
        worst_joint = max(worst_joint, abs(joint_log_prob(data, F, z, h)
                                           - brute_joint_log_prob(data, F, z, h)))
        K, T = int(rng.integers(1, 4)), int(rng.integers(1, 8))
        log_pi = np.log(rng.dirichlet(np.ones(K), size=K + 1))
        log_em = rng.normal(size=(T, K))
        worst_seq = max(worst_seq, abs(sequence_log_lik(log_pi, log_em)
                                       - brute_sequence_loglik(log_pi, log_em)))
    ok = max(worst_joint, worst_seq) < args.tol
    print(json.dumps({"instances": args.instances, "maxAbsErrorJoint": worst_joint,
                      "maxAbsErrorSequence": worst_seq, "tolerance": args.tol, "passed": ok}))
    return EXIT_OK if ok else EXIT_CHECK


def build_parser():
    p = _Parser(prog="bparhmm", description="BP-AR-HMM segmentation of multiple time series")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("preprocess", help="column selection, block averaging, difference scaling")
    s.add_argument("input", nargs="+", help="raw CSV files, one per sequence")
    s.add_argument("--out", required=True)
    s.add_argument("--window", type=int, default=1)
    s.add_argument("--columns", help="comma-separated column indices to keep")
    s.add_argument("--scale", action=argparse.BooleanOptionalAction, default=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("simulate", help="generate a synthetic dataset with ground truth")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--N", type=int, default=8)
    s.add_argument("--T", type=int, default=300)
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--r", type=int, default=1)
    s.add_argument("--separated", type=int, default=0, metavar="K",
                   help="use K well-separated behaviors and random ownership instead of prior draws")
    for name, default in (("alpha", 1.0), ("c", 1.0), ("gamma", 1.0), ("kappa", 20.0)):
        s.add_argument(f"--{name}", type=float, default=default)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="run the sampler")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--config", help="JSON run configuration")
    s.add_argument("--data", nargs="+")
    s.add_argument("--out")
    s.add_argument("--iterations", type=int)
    _run_config_flags(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("resume", help="continue a run from its checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--iterations", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_resume)

    s = sub.add_parser("eval", help="normalized Hamming distance against reference labels")
    s.add_argument("--run", required=True, help="output directory of a fit")
    s.add_argument("--truth", nargs="+", required=True,
                   help="label CSVs (time,label) in sequence order, or one directory")
    s.add_argument("--iteration", type=int, help="stored sample to score (default: best)")
    s.add_argument("--count-initial", action="store_true",
                   help="also score the first r conditioned frames")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("oracle-check", help="compare closed forms with brute-force enumeration")
    s.add_argument("--instances", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-8)
    s.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as err:
        print(f"bparhmm: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"bparhmm: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataLoadError, ContractViolation) as err:
        print(f"bparhmm: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except NumericDegeneracyError as err:
        print(f"bparhmm: numeric degeneracy: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as err:
        print(f"bparhmm: file error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
