"""Pure-numpy implementations of the hot distance/vote kernels.

Semantics must match ``attrsearch.kernels._ckernels`` exactly up to
floating-point summation order; the compiled module is a drop-in
replacement selected at import time in ``attrsearch.kernels``.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def dists_to_vec(reps: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Euclidean distance from ``vec`` to every row of ``reps`` (N, K)."""
    diff = reps - vec
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def dists_to_row(reps: np.ndarray, row: int) -> np.ndarray:
    """Euclidean distance from row ``row`` to every row of ``reps``."""
    return dists_to_vec(reps, reps[row])


def pooled_dists_to_row(reps_stack: np.ndarray, row: int) -> np.ndarray:
    """Mean over the leading (space) axis of per-space distances to ``row``.

    ``reps_stack`` has shape (E, N, K); the result has shape (N,).
    """
    diff = reps_stack - reps_stack[:, row : row + 1, :]
    per_space = np.sqrt(np.einsum("sij,sij->si", diff, diff))
    return per_space.sum(axis=0) / reps_stack.shape[0]


def count_satisfied(d_closer: np.ndarray, d_farther: np.ndarray) -> np.ndarray:
    """Per-column count of rows where ``d_closer < d_farther`` (strict)."""
    return np.count_nonzero(d_closer < d_farther, axis=0).astype(np.int64)
