"""Deterministic single-shot model-uncertainty toolkit.

Decomposes the kernel density field of a classifier's feature space into
ordered moments whose argmax index scores per-pixel uncertainty, and
evaluates the maps against segmentation error with the PA/PU/PAvPU
protocol next to softmax, MC-dropout, and ensemble baselines.
"""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
