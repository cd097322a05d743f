"""Distribution distances for convergence experiments."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

__all__ = ["ks_distance", "empirical_summary"]


def ks_distance(sample_a, sample_b) -> float:
    """Two-sample Kolmogorov statistic: the sup-norm distance between the
    empirical CDFs of the samples.

    Symmetric in its arguments and exactly zero when the samples coincide.
    Both samples must be non-empty.
    """
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise DimensionError("ks_distance needs two non-empty samples")
    if np.any(~np.isfinite(a)) or np.any(~np.isfinite(b)):
        raise DimensionError("ks_distance needs finite samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def empirical_summary(sample) -> tuple[float, float, float]:
    """Mean, variance and standard error of the mean of a 1d sample."""
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise DimensionError("empty sample")
    mean = float(x.mean())
    var = float(x.var())
    stderr = float(np.sqrt(var / x.size)) if x.size > 1 else 0.0
    return mean, var, stderr
