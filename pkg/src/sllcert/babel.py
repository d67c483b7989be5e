"""Reduced babel function and the sub-matrix operator-norm bound it implies.

``mu(W, s1, s2)`` measures the worst cumulative coherence between one row
and ``d1 - s1 - 1`` others, all restricted to ``d2 - s2`` columns. Then
every ``(d1 - s1) x (d2 - s2)`` block of ``W`` has spectral norm at most
``sqrt(1 + mu) * ||W||_{2,inf}`` (Gershgorin on the block's Gram matrix).

The cheap variant divides by ``||W||_{2,inf}^2`` instead of the restricted
row norms, which makes the inner column choice a sort and the whole table
a few vectorized passes. The exact variant enumerates subsets and is only
meant as an oracle on tiny matrices.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .linalg import as_matrix

EXACT_MAX_DIM = 10
CHEAP = "cheap"
EXACT = "exact"


def _group_sq(W):
    return float(np.max(np.einsum("ij,ij->i", W, W))) if W.size else 0.0


def _check_levels(W, s1, s2):
    d1, d2 = W.shape
    if not 0 <= s1 <= d1 - 1:
        raise ValueError(f"row sparsity {s1} outside [0, {d1 - 1}]")
    if not 0 <= s2 <= d2 - 1:
        raise ValueError(f"column sparsity {s2} outside [0, {d2 - 1}]")


def _pair_sums(W, rows):
    """Coherence numerators for rows ``rows`` against all rows, every ``s2`` at once.

    Returns ``(len(rows), d1, d2)`` with entry ``[., i, s2]`` the best
    ``|sum_{c in J2} W[r, c] W[i, c]|`` over ``|J2| = d2 - s2``.
    """
    d2 = W.shape[1]
    P = np.sort(W[rows][:, None, :] * W[None, :, :], axis=2)
    cs = np.concatenate([np.zeros(P.shape[:2] + (1,)), np.cumsum(P, axis=2)], axis=2)
    m = d2 - np.arange(d2)  # subset size for s2 = 0..d2-1
    bottom = cs[..., m]
    top = cs[..., d2:d2 + 1] - cs[..., d2 - m]
    return np.maximum(top, -bottom)


def pairwise_coherence_cheap(W, s2):
    """``C[i, j]`` = best column-restricted coherence of rows ``i, j`` over ``||W||_{2,inf}^2``."""
    W = as_matrix(W, "W")
    d2 = W.shape[1]
    if not 0 <= s2 <= d2 - 1:
        raise ValueError(f"column sparsity {s2} outside [0, {d2 - 1}]")
    g2 = _group_sq(W)
    if g2 == 0:
        return np.zeros((W.shape[0], W.shape[0]))
    m = d2 - s2
    P = np.sort(W[:, None, :] * W[None, :, :], axis=2)
    top = P[..., d2 - m:].sum(axis=2)
    bottom = P[..., :m].sum(axis=2)
    return np.maximum(top, -bottom) / g2


def _babel_from_coherence(C, s1):
    # C holds per-pair values; the outer max over J1 is "best d1-s1-1 partners of some j"
    d1 = C.shape[0]
    n = d1 - s1 - 1
    if n == 0:
        return 0.0
    C = C.copy()
    np.fill_diagonal(C, -np.inf)
    part = -np.sort(-C, axis=0)[:n]
    return float(np.max(part.sum(axis=0)))


def _exact_coherence(W, s2):
    d1, d2 = W.shape
    subs = list(combinations(range(d2), d2 - s2))
    masks = np.zeros((len(subs), d2))
    for t, J in enumerate(subs):
        masks[t, list(J)] = 1.0
    num = np.abs(np.einsum("tc,ic,jc->ijt", masks, W, W))
    norms = np.sqrt(np.einsum("tc,ic->it", masks, W * W))
    den = norms[:, None, :] * norms[None, :, :]
    ratio = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return ratio.max(axis=2)


def _exact_babel(W, s1, s2):
    d1 = W.shape[0]
    if s1 == d1 - 1:
        return 0.0
    C = _exact_coherence(W, s2)
    best = 0.0
    for J1 in combinations(range(d1), d1 - s1):
        for j in J1:
            best = max(best, sum(C[i, j] for i in J1 if i != j))
    return float(best)


def _check_mode(W, mode):
    if mode not in (CHEAP, EXACT):
        raise ValueError(f"unknown babel mode {mode!r}")
    if mode == EXACT and max(W.shape) > EXACT_MAX_DIM:
        raise ValueError(
            f"exact babel enumerates subsets; refusing a {W.shape[0]}x{W.shape[1]} matrix "
            f"(limit {EXACT_MAX_DIM})"
        )


def reduced_babel(W, s1, s2, mode=CHEAP):
    W = as_matrix(W, "W")
    _check_levels(W, s1, s2)
    _check_mode(W, mode)
    if s1 == W.shape[0] - 1:
        return 0.0
    if mode == EXACT:
        return _exact_babel(W, s1, s2)
    return _babel_from_coherence(pairwise_coherence_cheap(W, s2), s1)


def babel_bound(W, s1, s2, mode=CHEAP):
    """``sqrt(1 + mu_{s1,s2}(W)) * ||W||_{2,inf}``."""
    W = as_matrix(W, "W")
    mu = reduced_babel(W, s1, s2, mode)
    return float(np.sqrt(1.0 + mu) * np.sqrt(_group_sq(W)))


@dataclass(frozen=True)
class BabelTable:
    """``values[s1, s2]`` for every row level ``s1 < d1`` and column level ``s2 < d2``."""

    values: np.ndarray
    mode: str
    layer: int = 0

    def __call__(self, s1, s2):
        return float(self.values[s1, s2])

    def worst_over_columns(self):
        """``max_{s2} mu[s1, s2]`` for each ``s1``."""
        return self.values.max(axis=1)


def babel_table(W, mode=CHEAP, layer=0, block=8):
    """All reduced babel values of ``W``.

    In cheap mode this runs in blocks of reference rows: one sort of the
    elementwise row products gives the coherence for every ``s2``, one sort
    of each coherence column gives the babel value for every ``s1``.
    """
    W = as_matrix(W, "W")
    _check_mode(W, mode)
    d1, d2 = W.shape
    out = np.zeros((d1, d2))
    if mode == EXACT:
        for s1 in range(d1):
            for s2 in range(d2):
                out[s1, s2] = reduced_babel(W, s1, s2, EXACT)
        return BabelTable(out, mode, layer)
    g2 = _group_sq(W)
    if g2 == 0 or d1 == 1:
        return BabelTable(out, mode, layer)
    n = d1 - 1 - np.arange(d1)  # partners counted for s1 = 0..d1-1
    for start in range(0, d1, block):
        rows = np.arange(start, min(start + block, d1))
        C = _pair_sums(W, rows) / g2  # (b, d1, d2)
        C[np.arange(rows.size), rows, :] = -np.inf
        C = -np.sort(-C, axis=1)
        cs = np.concatenate([np.zeros((rows.size, 1, d2)), np.cumsum(C[:, :-1, :], axis=1)], axis=1)
        out = np.maximum(out, cs[:, n, :].max(axis=0))
    return BabelTable(out, mode, layer)
