"""Preprocessing of raw multivariate series before fitting.

The documented order is: select columns, block-average and downsample each
series, then divide every dimension by the pooled standard deviation of its
first differences.  The emitted scales undo the last step exactly.
"""
import numpy as np

from .conjugacy import MNIWPrior
from .errors import DataLoadError

__all__ = ["block_average_downsample", "scale_first_difference", "unscale",
           "empirical_bayes_mniw", "pooled_first_differences"]


def block_average_downsample(series, window):
    """Mean over consecutive blocks of ``window`` frames; a trailing partial block is dropped."""
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    window = int(window)
    if window < 1:
        raise ValueError("window must be a positive integer")
    T = series.shape[0]
    if window > T:
        raise DataLoadError(f"window {window} exceeds series length {T}")
    n = T // window
    return series[:n * window].reshape(n, window, -1).mean(axis=1)


def pooled_first_differences(dataset):
    diffs = [np.diff(np.asarray(s, dtype=float).reshape(len(s), -1), axis=0) for s in dataset]
    return np.concatenate(diffs, axis=0)


def scale_first_difference(dataset):
    """Divide each dimension by the pooled first-difference standard deviation.

    Uses the population variance (divide by n).  Returns ``(scaled, scales)``
    with ``scaled[i] * scales == dataset[i]``.
    """
    dataset = [np.asarray(s, dtype=float).reshape(len(s), -1) for s in dataset]
    diffs = pooled_first_differences(dataset)
    if len(diffs) == 0:
        raise DataLoadError("need at least two frames to form first differences")
    scales = np.sqrt(diffs.var(axis=0))
    for k, sc in enumerate(scales):
        if not sc > 0:
            raise DataLoadError(f"dimension {k} is constant (zero first-difference variance)")
    return [s / scales for s in dataset], scales


def unscale(dataset, scales):
    return [np.asarray(s) * scales for s in dataset]


def empirical_bayes_mniw(dataset, r=1, s0_multiplier=0.5, l_multiplier=1.0, n0=None):
    """MNIW prior set from the pooled covariance of first differences.

    ``S0 = s0_multiplier * cov``, ``M = 0``, ``L = l_multiplier * I`` and
    ``n0 = d + 2`` unless given.
    """
    diffs = pooled_first_differences(dataset)
    if len(diffs) == 0:
        raise DataLoadError("empirical-Bayes prior needs a nonempty dataset")
    d = diffs.shape[1]
    cov = np.atleast_2d(np.cov(diffs, rowvar=False, bias=True))
    S0 = s0_multiplier * 0.5 * (cov + cov.T)
    return MNIWPrior(n0=float(d + 2 if n0 is None else n0), S0=S0,
                     M=np.zeros((d, d * r)), L=l_multiplier * np.eye(d * r))
