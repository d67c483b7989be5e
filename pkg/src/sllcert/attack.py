"""l2 PGD on the margin and a bisection for the smallest adversarial radius.

The smallest radius PGD manages to flip is an upper bound on the true
robust radius, so it brackets every certificate from above.
"""

import math
from dataclasses import dataclass

import numpy as np

from .network import forward, predicted_label

MAX_RADIUS = 2.0
NO_ATTACK = math.inf  # min_adv_radius result when nothing up to MAX_RADIUS flips the label


@dataclass(frozen=True)
class AttackConfig:
    steps: int = 50
    step_size: float = None  # None: 2.5 * nu / steps
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be > 0")


def _batch_forward(net, X):
    pre = []
    T = X
    for layer in net.layers:
        Z = T @ layer.W.T + layer.b
        pre.append(Z)
        T = np.maximum(Z, 0.0)
    return pre, T @ net.classifier.T


def margin_violation(net, X, y):
    """``max_{j != y} logit_j - logit_y`` for each row of ``X`` (positive means flipped)."""
    _, logits = _batch_forward(net, np.atleast_2d(X))
    others = np.delete(logits, y, axis=1)
    return others.max(axis=1) - logits[:, y]


def margin_violation_grad(net, X, y):
    """Values and input gradients of :func:`margin_violation`, by backpropagation.

    The competing class is the first maximizer; ReLU has derivative 0 at 0.
    """
    val, G, _ = _violation_grad(net, np.atleast_2d(np.asarray(X, dtype=np.float64)), y)
    return val, G


def _violation_grad(net, X, y):
    pre, logits = _batch_forward(net, X)
    masked = logits.copy()
    masked[:, y] = -np.inf
    j = np.argmax(masked, axis=1)
    rows = np.arange(X.shape[0])
    val = logits[rows, j] - logits[:, y]
    G = np.zeros_like(logits)
    G[rows, j] = 1.0
    G[:, y] -= 1.0
    G = G @ net.classifier
    for layer, Z in zip(reversed(net.layers), reversed(pre)):
        G = (G * (Z > 0)) @ layer.W
    return val, G, logits


def _project(X, x, nu):
    D = X - x
    n = np.linalg.norm(D, axis=1, keepdims=True)
    scale = np.where(n > nu, nu / np.maximum(n, 1e-300), 1.0)
    return x + D * scale


def _random_starts(x, nu, cfg):
    d = x.shape[0]
    starts = np.empty((cfg.restarts, d))
    for r in range(cfg.restarts):
        if r == 0:
            starts[r] = x  # one restart from the clean point
            continue
        rng = np.random.default_rng([cfg.seed, r])
        u = rng.standard_normal(d)
        u *= nu * rng.uniform() ** (1.0 / d) / max(np.linalg.norm(u), 1e-300)
        starts[r] = x + u
    return starts


def pgd_attack(net, x, y, nu, cfg=None):
    """A point within ``nu`` of ``x`` whose predicted label differs from ``y``, or ``None``.

    All restarts run as one batch. The search stops at the first step where
    some restart succeeds and returns the most violating of those points.
    """
    cfg = cfg or AttackConfig()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.dims[0]:
        raise ValueError(f"input has shape {x.shape}, network expects ({net.dims[0]},)")
    if not nu >= 0:
        raise ValueError("nu must be >= 0")
    if nu == 0:
        return x.copy() if predicted_label(forward(net, x).logits) != y else None
    step = cfg.step_size if cfg.step_size is not None else 2.5 * nu / cfg.steps
    X = _random_starts(x, nu, cfg)
    for it in range(cfg.steps + 1):
        val, G, logits = _violation_grad(net, X, y)
        flipped = np.argmax(logits, axis=1) != y
        if np.any(flipped):
            idx = np.flatnonzero(flipped)
            return X[idx[np.argmax(val[idx])]].copy()
        if it == cfg.steps:
            break
        gn = np.linalg.norm(G, axis=1, keepdims=True)
        X = _project(X + step * G / np.where(gn > 0, gn, 1.0), x, nu)
    return None


def min_adv_radius(net, x, tol=1e-3, cfg=None, label=None):
    """Smallest ``nu`` in ``[0, 2]`` (within ``tol``) at which PGD flips the prediction.

    Returns :data:`NO_ATTACK` when the attack fails even at radius 2.
    """
    cfg = cfg or AttackConfig()
    y = predicted_label(forward(net, x).logits) if label is None else label
    if pgd_attack(net, x, y, MAX_RADIUS, cfg) is None:
        return NO_ATTACK
    lo, hi = 0.0, MAX_RADIUS
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pgd_attack(net, x, y, mid, cfg) is None:
            lo = mid
        else:
            hi = mid
    return hi
