"""Comparison uncertainty estimators: softmax, MC dropout, deep ensemble.

Each returns a per-pixel UncertaintyMap in [0,1].
"""

from dataclasses import dataclass

import numpy as np

from .errors import HeterogeneousEnsemble, InvalidPasses
from .toymodel import forward


@dataclass(frozen=True)
class UncertaintyMap:
    values: np.ndarray  # H x W in [0,1]
    method: str  # {qipf, softmax, mc_dropout, ensemble}


def softmax_uncertainty(ft):
    """1 minus the winning softmax probability, per pixel."""
    return UncertaintyMap(1.0 - ft.probs.max(axis=2), "softmax")


def mc_dropout_uncertainty(model, sample, passes, seed):
    """Predictive entropy of the mean softmax over seeded dropout passes.

    Normalized by ln(C) so a uniform mean softmax scores exactly 1.
    """
    if passes < 2:
        raise InvalidPasses(f"need at least 2 passes, got {passes}")
    rng = np.random.default_rng(seed)
    pass_seeds = rng.integers(0, 2**63, size=passes)
    mean_probs = None
    for s in pass_seeds:
        ft = forward(model, sample, dropout_on=True, seed=s)
        mean_probs = ft.probs if mean_probs is None else mean_probs + ft.probs
    mean_probs = mean_probs / passes
    c = mean_probs.shape[2]
    entropy = -np.sum(mean_probs * np.log(mean_probs + 1e-300), axis=2)
    return UncertaintyMap(np.clip(entropy / np.log(c), 0.0, 1.0), "mc_dropout")


def ensemble_uncertainty(models, sample):
    """Member disagreement on the ensemble-mean predicted class.

    Per pixel: the population std across members of the softmax
    probability assigned to the class the mean softmax predicts,
    rescaled by its theoretical maximum of 0.5.
    """
    if len(models) < 2:
        raise HeterogeneousEnsemble("need at least 2 members")
    archs = {m.arch() for m in models}
    if len(archs) != 1:
        raise HeterogeneousEnsemble(f"mixed architectures: {archs}")
    probs = np.stack([forward(m, sample).probs for m in models])  # (M, H, W, C)
    mean = probs.mean(axis=0)
    pred = np.argmax(mean, axis=2)
    h, w = pred.shape
    member_p = probs[:, np.arange(h)[:, None], np.arange(w)[None, :], pred]
    std = member_p.std(axis=0)
    return UncertaintyMap(np.clip(std / 0.5, 0.0, 1.0), "ensemble")
