"""Pure-numpy reference implementation of the Gaussian field kernels.

Used when the compiled extension is unavailable (or explicitly disabled
via QIPFSEG_PURE_PYTHON=1).  Semantics are identical to the compiled
core; only summation order inside one kernel sum may differ at the
floating-point level.
"""

import numpy as np

BACKEND = "python"


def eval_fields(samples, points, sigma):
    """Evaluate the Gaussian kernel sum and its derivatives at many points.

    Parameters
    ----------
    samples : (n, d) float64 array
    points : (p, d) float64 array
    sigma : float, kernel width > 0

    Returns
    -------
    values : (p,) array, (1/n) * sum_i exp(-||z_i - z*||^2 / (2 sigma^2))
    grads : (p, d) array, analytic gradient of `values` w.r.t. z*
    laps : (p,) array, analytic Laplacian of `values` w.r.t. z*
    """
    samples = np.asarray(samples, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    n, d = samples.shape
    inv_s2 = 1.0 / (sigma * sigma)

    # ||z_i - z*||^2 expanded so everything is a (p, n) GEMM, never (p, n, d)
    s_sq = np.einsum("nd,nd->n", samples, samples)
    p_sq = np.einsum("pd,pd->p", points, points)
    r2 = p_sq[:, None] + s_sq[None, :] - 2.0 * (points @ samples.T)
    np.maximum(r2, 0.0, out=r2)
    w = np.exp(-0.5 * r2 * inv_s2)

    w_sum = w.sum(axis=1)
    values = w_sum / n
    grads = (w @ samples - w_sum[:, None] * points) * (inv_s2 / n)
    laps = ((w * r2).sum(axis=1) * inv_s2 - d * w_sum) * (inv_s2 / n)
    return values, grads, laps
