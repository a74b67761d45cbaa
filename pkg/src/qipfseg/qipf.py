"""Moment decomposition of the information potential field.

The field psi is rescaled by a normalizer (L2 over the training
evaluations by default) and projected onto Hermite polynomials of
successively higher order.  Each mode's raw value is the normalized
Laplacian of the projection,

    rho_k(z*) = (sigma^2 / 2) * lap(h_k(psi_hat))(z*) / h_k(psi_hat)(z*),

and the reported moment is its studentized exceedance above the
calibrated floor:

    H_k(z*) = (rho_k(z*) - min_i rho_k(z_i)) / std_i rho_k(z_i)

with min and std taken over the training points.  The floor shift makes
every moment nonnegative on the calibration set (the minimizer lands at
exactly 0); the per-mode std divisor puts the modes on a common scale so
that the argmax over k is comparable across modes.  Without it the
argmax is pinned to whichever mode's calibration happened to graze a
polynomial root, and the tail-alignment behavior of the decomposition is
lost.  The argmax index is the uncertainty score: higher indices fire in
low-density (tail) regions.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateField, OrderTooLarge
from .kde import Bandwidth, SampleSet, ipf_fields

MAX_ORDER = 32  # h_k grows like 2^k k!; beyond this doubles overflow fast
EPS = 1e-12  # |h_k(psi_hat)| below this is treated as a node of the projection

NORMALIZATIONS = ("l2", "max")


def hermite_eval(k, x):
    """Physicists' Hermite polynomial h_k(x) with first two derivatives.

    Recurrence h_{k+1} = 2x h_k - 2k h_{k-1}; derivatives follow from
    h'_k = 2k h_{k-1} and h''_k = 4k(k-1) h_{k-2}.  Accepts scalar or
    array x; returns (h, h', h'').
    """
    if k < 0 or k > MAX_ORDER:
        raise OrderTooLarge(f"order {k} outside [0, {MAX_ORDER}]")
    table = hermite_table(k, x)
    h = table[k]
    hp = 2.0 * k * table[k - 1] if k >= 1 else np.zeros_like(h)
    hpp = 4.0 * k * (k - 1) * table[k - 2] if k >= 2 else np.zeros_like(h)
    return h, hp, hpp


def hermite_table(k_max, x):
    """All h_0(x) .. h_{k_max}(x) stacked along axis 0."""
    if k_max < 0 or k_max > MAX_ORDER:
        raise OrderTooLarge(f"order {k_max} outside [0, {MAX_ORDER}]")
    x = np.asarray(x, dtype=np.float64)
    table = np.empty((k_max + 1,) + x.shape, dtype=np.float64)
    table[0] = 1.0
    if k_max >= 1:
        table[1] = 2.0 * x
    for k in range(1, k_max):
        table[k + 1] = 2.0 * x * table[k] - 2.0 * k * table[k - 1]
    return table


@dataclass(frozen=True)
class QipfModel:
    """A fitted per-location (or per-class) uncertainty decomposer."""

    samples: SampleSet
    sigma: Bandwidth
    normalizer: float
    e_lower: np.ndarray  # length m, calibrated lower bounds (-min of rho_k)
    scale: np.ndarray  # length m, calibration std of rho_k (>0)
    m: int
    normalization: str = "l2"


@dataclass(frozen=True)
class MomentSpectrum:
    """Ordered moment values H_1(z*) .. H_m(z*) at one evaluation point."""

    values: np.ndarray


def _mode_ratios(sigma, m, u, grad_sq, lap):
    """Normalized-Laplacian term of every mode, plus a validity mask.

    u, grad_sq, lap are arrays over evaluation points: the rescaled field
    value, squared gradient norm, and Laplacian.  The Laplacian of the
    projection h_k(u(z)) follows the chain rule

        lap(h_k(u)) = h''_k(u) * ||grad u||^2 + h'_k(u) * lap(u).

    Entries where |h_k(u)| < EPS are masked invalid.
    """
    table = hermite_table(m, u)
    half_s2 = 0.5 * sigma * sigma
    ratios = np.empty((m,) + u.shape, dtype=np.float64)
    valid = np.empty((m,) + u.shape, dtype=bool)
    for k in range(1, m + 1):
        h = table[k]
        hp = 2.0 * k * table[k - 1]
        hpp = 4.0 * k * (k - 1) * table[k - 2] if k >= 2 else 0.0
        lap_k = hpp * grad_sq + hp * lap
        ok = np.abs(h) >= EPS
        ratios[k - 1] = np.where(ok, half_s2 * lap_k / np.where(ok, h, 1.0), 0.0)
        valid[k - 1] = ok
    return ratios, valid


def _rescaled_fields(model, points):
    values, grads, laps = ipf_fields(model.samples, model.sigma, points)
    u = values / model.normalizer
    grad_sq = np.einsum("pd,pd->p", grads, grads) / model.normalizer**2
    lap = laps / model.normalizer
    return u, grad_sq, lap


def fit(samples, sigma, m, normalization="l2"):
    """Fit a QipfModel: normalizer plus per-mode lower bounds.

    The lower bound of mode k is minus the minimum of the mode's
    normalized-Laplacian term over the training points, so every moment
    is >= 0 on the set it was calibrated on (the minimizer lands at 0).
    """
    if m < 1:
        raise OrderTooLarge("m must be >= 1")
    if m > MAX_ORDER:
        raise OrderTooLarge(f"m {m} exceeds {MAX_ORDER}")
    if normalization not in NORMALIZATIONS:
        raise DegenerateField(f"unknown normalization {normalization!r}")

    values, grads, laps = ipf_fields(samples, sigma, samples.data)
    if normalization == "l2":
        normalizer = float(np.sqrt(np.sum(values**2)))
    else:
        normalizer = float(np.max(values))
    if not (normalizer > 0):
        raise DegenerateField("field normalizer is zero")

    u = values / normalizer
    grad_sq = np.einsum("pd,pd->p", grads, grads) / normalizer**2
    lap = laps / normalizer

    ratios, valid = _mode_ratios(sigma.sigma, m, u, grad_sq, lap)
    e_lower = np.zeros(m)
    scale = np.ones(m)
    for k in range(m):
        if valid[k].any():
            kept = ratios[k][valid[k]]
            e_lower[k] = -float(np.min(kept))
            sd = float(np.std(kept))
            if np.isfinite(sd) and sd > 0.0:
                scale[k] = sd
    e_lower.flags.writeable = False
    scale.flags.writeable = False
    return QipfModel(samples, sigma, normalizer, e_lower, scale, m, normalization)


def moments_batch(model, points, clamp=True):
    """Moment spectra for a (p, d) batch of points, as a (p, m) array.

    Modes whose projection value sits inside the EPS guard band are
    reported as 0 (uninformative).  With clamp=True, negative
    out-of-calibration values are clamped to 0 as well.
    """
    u, grad_sq, lap = _rescaled_fields(model, np.asarray(points, dtype=np.float64))
    ratios, valid = _mode_ratios(model.sigma.sigma, model.m, u, grad_sq, lap)
    spectra = (model.e_lower[:, None] + ratios) / model.scale[:, None]
    spectra[~valid] = 0.0
    if clamp:
        np.maximum(spectra, 0.0, out=spectra)
    return spectra.T


def moments(model, point, clamp=True):
    """Moment spectrum at a single point."""
    values = moments_batch(model, np.atleast_2d(np.asarray(point, dtype=np.float64)), clamp)[0]
    values.flags.writeable = False
    return MomentSpectrum(values)


def uncertainty_index(spectrum):
    """1-based index of the largest moment; ties go to the smallest index."""
    values = spectrum.values if isinstance(spectrum, MomentSpectrum) else np.asarray(spectrum)
    return int(np.argmax(values)) + 1


def normalized_uncertainty(index, m):
    """Map a moment index onto (0, 1] for threshold sweeps."""
    if not 1 <= index <= m:
        raise OrderTooLarge(f"index {index} outside [1, {m}]")
    return index / m
