"""Segmentation scoring: Hungarian alignment and normalized Hamming distance."""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractViolation


@dataclass
class AlignmentResult:
    mapping: dict
    normalizedHamming: float


def hungarian_align(cost):
    """Minimum-cost injective assignment of rows to columns.

    Rectangular matrices are allowed; with more rows than columns some rows
    stay unassigned.  Returns ``(mapping, total_cost)``.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or not np.all(np.isfinite(cost)):
        raise ValueError("cost must be a finite 2-d array")
    rows, cols = linear_sum_assignment(cost)
    return {int(r): int(c) for r, c in zip(rows, cols)}, float(cost[rows, cols].sum())


def _flatten(z):
    if len(z) and np.ndim(z[0]) > 0:
        return np.concatenate([np.asarray(zi).ravel() for zi in z])
    return np.asarray(z).ravel()


def normalized_hamming(z_est, z_true):
    """Fraction of steps mislabeled after the best injective estimated->true relabeling.

    Both arguments are a label array or a list of per-sequence arrays; steps
    are pooled across sequences.
    """
    est, true = _flatten(z_est), _flatten(z_true)
    if est.shape != true.shape:
        raise ContractViolation(f"label lengths differ: {est.size} vs {true.size}")
    if est.size == 0:
        return AlignmentResult({}, 0.0)
    e_ids, e_inv = np.unique(est, return_inverse=True)
    t_ids, t_inv = np.unique(true, return_inverse=True)
    overlap = np.zeros((len(e_ids), len(t_ids)))
    np.add.at(overlap, (e_inv, t_inv), 1)
    mapping, neg = hungarian_align(-overlap)
    matched = -neg
    return AlignmentResult({e_ids[r].item(): t_ids[c].item() for r, c in mapping.items()},
                           float(1.0 - matched / est.size))
