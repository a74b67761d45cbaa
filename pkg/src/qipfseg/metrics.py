"""Patch-level accuracy/certainty evaluation: PA, PU, PAvPU.

A patch is "accurate" when strictly more than half its pixels are
predicted correctly, and "uncertain" when its mean uncertainty is at or
above the swept threshold u_th = u_min + t * (u_max - u_min).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidPatch, InvalidRange, ShapeMismatch


@dataclass(frozen=True)
class ConfusionCounts:
    n_ac: int  # accurate & certain
    n_au: int  # accurate & uncertain
    n_ic: int  # inaccurate & certain
    n_iu: int  # inaccurate & uncertain

    @property
    def total(self):
        return self.n_ac + self.n_au + self.n_ic + self.n_iu


@dataclass(frozen=True)
class ThresholdSweep:
    t_values: tuple  # increasing reals in [0,1]
    scores: tuple  # one dict {PA, PU, PAvPU} per t; None marks undefined
    counts: tuple  # one ConfusionCounts per t


DEFAULT_T_GRID = tuple(round(0.05 * i, 2) for i in range(21))


def error_map(preds, truth):
    """Boolean map, true where the prediction disagrees with ground truth."""
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape:
        raise ShapeMismatch(f"{preds.shape} vs {truth.shape}")
    return preds != truth


def patch_reduce(pixel_map, patch, mode="mean"):
    """Reduce an H x W map to a patch grid.

    mode "mean" averages values per patch; mode "accurate_flag" expects a
    boolean correctness map and marks a patch accurate iff strictly more
    than 50% of its pixels are correct.  Trailing partial patches are
    included with their true pixel count.
    """
    if not isinstance(patch, (int, np.integer)) or patch < 1:
        raise InvalidPatch(f"patch must be a positive integer, got {patch}")
    if mode not in ("mean", "accurate_flag"):
        raise InvalidPatch(f"unknown mode {mode!r}")
    pixel_map = np.asarray(pixel_map)
    h, w = pixel_map.shape
    rows = -(-h // patch)
    cols = -(-w // patch)
    out = np.empty((rows, cols), dtype=bool if mode == "accurate_flag" else np.float64)
    for i in range(rows):
        for j in range(cols):
            block = pixel_map[i * patch : (i + 1) * patch, j * patch : (j + 1) * patch]
            if mode == "mean":
                out[i, j] = block.mean()
            else:
                out[i, j] = block.sum() > block.size / 2.0
    return out


def threshold_value(u_min, u_max, t):
    """Affine interpolant u_min + t * (u_max - u_min)."""
    if u_max < u_min:
        raise InvalidRange(f"u_max {u_max} < u_min {u_min}")
    return u_min + t * (u_max - u_min)


def confusion(acc_flags, unc, u_th):
    """Four-cell accuracy x certainty counts; uncertain means unc >= u_th."""
    acc_flags = np.asarray(acc_flags, dtype=bool).ravel()
    unc = np.asarray(unc, dtype=np.float64).ravel()
    if acc_flags.shape != unc.shape:
        raise ShapeMismatch(f"{acc_flags.shape} vs {unc.shape}")
    uncertain = unc >= u_th
    return ConfusionCounts(
        n_ac=int(np.sum(acc_flags & ~uncertain)),
        n_au=int(np.sum(acc_flags & uncertain)),
        n_ic=int(np.sum(~acc_flags & ~uncertain)),
        n_iu=int(np.sum(~acc_flags & uncertain)),
    )


def scores(c):
    """PA, PU, PAvPU from one ConfusionCounts; zero denominators give None."""
    pa = c.n_ac / (c.n_ac + c.n_ic) if c.n_ac + c.n_ic > 0 else None
    pu = c.n_iu / (c.n_ic + c.n_iu) if c.n_ic + c.n_iu > 0 else None
    pavpu = (c.n_ac + c.n_iu) / c.total if c.total > 0 else None
    return {"PA": pa, "PU": pu, "PAvPU": pavpu}


def sweep(acc_flags, unc, u_min, u_max, t_grid=DEFAULT_T_GRID):
    """Scores at every t of the grid via threshold_value + confusion."""
    t_grid = tuple(float(t) for t in t_grid)
    if any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise InvalidRange("t grid must be strictly increasing")
    if t_grid and (t_grid[0] < 0.0 or t_grid[-1] > 1.0):
        raise InvalidRange("t grid must lie in [0, 1]")
    counts = []
    per_t = []
    for t in t_grid:
        c = confusion(acc_flags, unc, threshold_value(u_min, u_max, t))
        counts.append(c)
        per_t.append(scores(c))
    return ThresholdSweep(t_grid, tuple(per_t), tuple(counts))


def average_scores(sw):
    """Mean of each defined score over the t grid."""
    out = {}
    for key in ("PA", "PU", "PAvPU"):
        vals = [s[key] for s in sw.scores if s[key] is not None]
        out[key] = float(np.mean(vals)) if vals else None
    return out
