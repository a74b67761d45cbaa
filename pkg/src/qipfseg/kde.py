"""Gaussian-RKHS information potential field (IPF).

The field over a sample set {z_1..z_n} is the unnormalized Parzen sum

    psi(z*) = (1/n) * sum_i exp(-||z_i - z*||^2 / (2 sigma^2))

so that a kernel at its own center contributes exactly 1/n.  The missing
(2 pi sigma^2)^(-d/2) density factor is intentional: it cancels in the
normalized-Laplacian ratio and in every argmax this package takes.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateSamples, DimensionMismatch, NonFiniteInput


class SampleSet:
    """Immutable n x d matrix of feature vectors defining one density field.

    Rows are sorted lexicographically at construction so that kernel sums
    accumulate in a canonical order: permuting the input rows yields a
    bit-identical field.
    """

    def __init__(self, data):
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionMismatch(f"expected an n x d matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteInput("sample matrix contains NaN or infinity")
        order = np.lexsort(data.T[::-1])  # sort by column 0, then 1, ...
        self._data = np.ascontiguousarray(data[order])
        self._data.flags.writeable = False

    @property
    def data(self):
        return self._data

    @property
    def n(self):
        return self._data.shape[0]

    @property
    def d(self):
        return self._data.shape[1]

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class Bandwidth:
    """Isotropic Gaussian kernel width."""

    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise DegenerateSamples(f"bandwidth must be positive and finite, got {self.sigma}")


@dataclass(frozen=True)
class FieldEval:
    """Field value, analytic gradient and analytic Laplacian at one point."""

    value: float
    gradient: np.ndarray
    laplacian: float


def silverman_bandwidth(samples):
    """Silverman rule-of-thumb bandwidth for a SampleSet.

    Uses the mean of the per-dimension sample standard deviations as the
    scale estimate and the d-dimensional Silverman exponent:

        sigma = sigma_hat * (4 / ((d + 2) * n)) ** (1 / (d + 4))
    """
    n, d = samples.n, samples.d
    if n < 2:
        raise DegenerateSamples("need at least 2 samples for a bandwidth")
    sigma_hat = float(np.mean(np.std(samples.data, axis=0, ddof=1)))
    # identical rows can leave a ~1e-17 residual std from cancellation
    tol = 1e-12 * max(1.0, float(np.max(np.abs(samples.data))))
    if sigma_hat <= tol:
        raise DegenerateSamples("all samples identical: zero spread")
    sigma = sigma_hat * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))
    return Bandwidth(sigma)


def _check_points(samples, points):
    points = np.atleast_2d(np.ascontiguousarray(points, dtype=np.float64))
    if points.shape[1] != samples.d:
        raise DimensionMismatch(
            f"point dimension {points.shape[1]} != sample dimension {samples.d}"
        )
    if not np.all(np.isfinite(points)):
        raise NonFiniteInput("evaluation point contains NaN or infinity")
    return points


def ipf_fields(samples, sigma, points):
    """Vectorized field evaluation: arrays of values, gradients, Laplacians.

    Returns (values (p,), grads (p, d), laps (p,)) for a (p, d) point batch.
    """
    points = _check_points(samples, points)
    return kernels.eval_fields(samples.data, points, sigma.sigma)


def ipf_eval(samples, sigma, point):
    """Evaluate the field and its derivatives at a single point."""
    values, grads, laps = ipf_fields(samples, sigma, np.asarray(point, dtype=np.float64))
    return FieldEval(float(values[0]), grads[0], float(laps[0]))


def ipf_batch(samples, sigma, points):
    """ipf_eval applied to each point of a list; order preserved."""
    points = list(points)
    if not points:
        return []
    values, grads, laps = ipf_fields(samples, sigma, np.asarray(points, dtype=np.float64))
    return [FieldEval(float(v), g, float(l)) for v, g, l in zip(values, grads, laps)]


def subsample(samples, n_max, seed):
    """Uniform without-replacement downsampling to at most n_max rows."""
    if n_max < 1:
        raise DegenerateSamples("n_max must be >= 1")
    if samples.n <= n_max:
        return samples
    rng = np.random.default_rng(seed)
    idx = rng.choice(samples.n, size=n_max, replace=False)
    return SampleSet(samples.data[np.sort(idx)])


def standardize(data):
    """Per-dimension whitening to zero mean, unit std (optional, off by default).

    Dimensions with zero spread are left centered only.
    """
    data = np.asarray(data, dtype=np.float64)
    mean = data.mean(axis=0)
    std = data.std(axis=0, ddof=1) if data.shape[0] > 1 else np.ones(data.shape[1])
    std = np.where(std > 0, std, 1.0)
    return (data - mean) / std, mean, std
