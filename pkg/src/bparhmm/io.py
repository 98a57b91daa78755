"""File formats: sequence CSVs, traces, segmentations and checkpoints.

Sequence files are numeric CSV, one file per sequence, one row per time
step, with an optional single header row (detected when the first line does
not parse as numbers).  Traces and sample files hold one JSON object per
line.  Checkpoints are canonical JSON, so saving a loaded checkpoint
reproduces it byte for byte.
"""
import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .config import canonical_json
from .conjugacy import MNIWPrior
from .errors import DataLoadError
from .model import ModelHypers, SamplerState, SequenceData

CHECKPOINT_VERSION = 1

__all__ = ["read_matrix_csv", "load_sequences", "write_matrix_csv", "TraceWriter",
           "read_jsonl", "truncate_jsonl", "export_segmentation", "read_labels", "state_to_dict",
           "state_from_dict", "save_checkpoint", "load_checkpoint", "CHECKPOINT_VERSION"]


def _parse_row(row):
    return [float(v) for v in row]


def read_matrix_csv(path, columns=None):
    """Parse one numeric CSV into a ``(T, d)`` array.

    Errors name the file and the 1-based line of the offending row.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [(n, row) for n, row in enumerate(csv.reader(fh), start=1)
                    if row and any(v.strip() for v in row)]
    except OSError as err:
        raise DataLoadError(f"{path}: cannot read: {err.strerror or err}") from None
    if rows:
        try:
            _parse_row(rows[0][1])
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise DataLoadError(f"{path}: no data rows")
    width = len(rows[0][1])
    out = np.empty((len(rows), width))
    for t, (n, row) in enumerate(rows):
        if len(row) != width:
            raise DataLoadError(f"{path}: row {n}: expected {width} columns, found {len(row)}")
        try:
            vals = _parse_row(row)
        except ValueError:
            raise DataLoadError(f"{path}: row {n}: non-numeric entry") from None
        bad = [j for j, v in enumerate(vals) if not math.isfinite(v)]
        if bad:
            raise DataLoadError(f"{path}: row {n}: NaN or infinite value in column {bad[0]}")
        out[t] = vals
    if columns is not None:
        if any(c >= width for c in columns):
            raise DataLoadError(f"{path}: column selection {list(columns)} exceeds width {width}")
        out = out[:, list(columns)]
    return out


def load_sequences(paths, r=1, columns=None):
    """Load one sequence per CSV; every file must have the same dimension."""
    if not paths:
        raise DataLoadError("no data files given")
    data = []
    d = None
    for path in paths:
        y = read_matrix_csv(path, columns)
        if d is None:
            d = y.shape[1]
        elif y.shape[1] != d:
            raise DataLoadError(f"{path}: dimension {y.shape[1]} differs from {d} in {paths[0]}")
        if y.shape[0] <= r:
            raise DataLoadError(f"{path}: {y.shape[0]} rows; need more than r={r}")
        data.append(SequenceData(y, r=r, id=Path(path).stem))
    return data


def write_matrix_csv(path, arr, header=None, fmt="%.17g"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.atleast_2d(np.asarray(arr))
    np.savetxt(path, arr, delimiter=",", fmt=fmt, header="" if header is None else ",".join(header),
               comments="")


class TraceWriter:
    """Appends trace records (deterministic) and wall-clock timings (separate file)."""

    def __init__(self, out_dir, mode="w"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.trace = (out / "trace.jsonl").open(mode)
        self.timing = (out / "timing.jsonl").open(mode)
        self.samples = (out / "samples.jsonl").open(mode)

    def write(self, record, seconds, state=None):
        self.trace.write(canonical_json(_plain(record)) + "\n")
        self.timing.write(canonical_json({"iteration": record["iteration"],
                                          "wallClock": round(seconds, 6)}) + "\n")
        if state is not None:
            self.samples.write(canonical_json({
                "iteration": record["iteration"], "jointLogProb": record["jointLogProb"],
                "F": state.F.astype(int).tolist(), "z": [zi.tolist() for zi in state.z]}) + "\n")

    def flush(self):
        for fh in (self.trace, self.timing, self.samples):
            fh.flush()

    def close(self):
        for fh in (self.trace, self.timing, self.samples):
            fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_jsonl(path):
    path = Path(path)
    try:
        with path.open() as fh:
            return [json.loads(line) for line in fh if line.strip()]
    except OSError as err:
        raise DataLoadError(f"{path}: cannot read: {err.strerror or err}") from None
    except json.JSONDecodeError as err:
        raise DataLoadError(f"{path}: malformed line: {err.msg}") from None


def truncate_jsonl(path, last_iteration):
    """Drop records past ``last_iteration`` (used when resuming an interrupted run)."""
    path = Path(path)
    if not path.exists():
        return
    keep = [line for line in path.read_text().splitlines(keepends=True)
            if line.strip() and json.loads(line)["iteration"] <= last_iteration]
    path.write_text("".join(keep))


def export_segmentation(out_dir, data, F, z):
    """Per-sequence ``time,label`` CSVs (original time index) plus ``F.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, (seq, zi) in enumerate(zip(data, z)):
        t = np.arange(seq.r, seq.T)
        name = seq.id if seq.id is not None else f"seq{i}"
        write_matrix_csv(out / f"{i:03d}_{name}.csv", np.column_stack([t, zi]),
                         header=["time", "label"], fmt="%d")
    write_matrix_csv(out / "F.csv", np.asarray(F, dtype=int), fmt="%d")


def read_labels(path):
    """Read a ``time,label`` CSV; returns integer arrays ``(time, label)``."""
    arr = read_matrix_csv(path)
    if arr.shape[1] != 2:
        raise DataLoadError(f"{path}: label files need exactly two columns (time, label)")
    if np.any(arr != np.round(arr)):
        raise DataLoadError(f"{path}: time and label must be integers")
    return arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _prior_to_dict(prior):
    return {"n0": float(prior.n0), "S0": prior.S0.tolist(), "M": prior.M.tolist(),
            "L": prior.L.tolist()}


def _prior_from_dict(d):
    return MNIWPrior(n0=d["n0"], S0=np.array(d["S0"], dtype=float),
                     M=np.array(d["M"], dtype=float), L=np.array(d["L"], dtype=float))


def state_to_dict(state):
    h = state.hypers
    return {
        "F": state.F.astype(int).tolist(),
        "z": [np.asarray(zi).tolist() for zi in state.z],
        "hypers": {"alpha": float(h.alpha), "c": float(h.c), "gamma": float(h.gamma),
                   "kappa": float(h.kappa), "mniw": _prior_to_dict(h.mniw)},
        "iteration": int(state.iteration),
        "inverseTemperature": float(state.inverseTemperature),
        "rngSeed": int(state.rngSeed),
        "proposal_scales": {k: float(v) for k, v in sorted(state.proposal_scales.items())},
    }


def state_from_dict(d):
    h = d["hypers"]
    F = np.array(d["F"], dtype=bool).reshape(len(d["F"]), -1)
    return SamplerState(
        F=F, z=[np.array(zi, dtype=np.int64) for zi in d["z"]],
        hypers=ModelHypers(alpha=h["alpha"], c=h["c"], gamma=h["gamma"], kappa=h["kappa"],
                           mniw=_prior_from_dict(h["mniw"])),
        iteration=d["iteration"], inverseTemperature=d["inverseTemperature"],
        rngSeed=d["rngSeed"], proposal_scales=dict(d["proposal_scales"]))


def save_checkpoint(path, state, config):
    """Write state, RNG position and config.

    Every iteration draws from a generator seeded by ``(rngSeed, iteration)``,
    so the seed and iteration counter fully determine the stream position.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"version": CHECKPOINT_VERSION, "state": state_to_dict(state),
           "rng": {"seed": int(state.rngSeed), "iteration": int(state.iteration)},
           "config": config.to_dict(), "configHash": config.digest()}
    path.write_text(canonical_json(doc) + "\n")


def load_checkpoint(path):
    """Returns ``(state, config_dict)``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as err:
        raise DataLoadError(f"{path}: cannot read checkpoint: {err.strerror or err}") from None
    except json.JSONDecodeError as err:
        raise DataLoadError(f"{path}: corrupt checkpoint: {err.msg}") from None
    if doc.get("version") != CHECKPOINT_VERSION:
        raise DataLoadError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    if hashlib.sha256(canonical_json(doc["config"]).encode()).hexdigest() != doc.get("configHash"):
        raise DataLoadError(f"{path}: config hash mismatch")
    return state_from_dict(doc["state"]), doc["config"]
