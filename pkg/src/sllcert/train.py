"""Plain-SGD training with orthogonal frame regularization, losses, and activity diagnostics."""

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, synth_data  # noqa: F401  (re-exported)
from .network import Layer, Network, margin


@dataclass(frozen=True)
class TrainConfig:
    arch: tuple = (100, 100)
    eta: float = 0.0
    steps: int = 2000
    batch: int = 100
    lr: float = 0.01
    seed: int = 0
    bias: bool = True

    def __post_init__(self):
        arch = tuple(int(w) for w in self.arch)
        if not arch or min(arch) < 1:
            raise ValueError("every hidden width must be >= 1")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.steps < 0 or self.batch < 1:
            raise ValueError("steps must be >= 0 and batch >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        object.__setattr__(self, "arch", arch)


def cross_entropy(logits, y):
    """Mean softmax cross-entropy; accepts one logit vector or a batch."""
    L = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(y)
    mx = L.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(L - mx).sum(axis=1))
    return float(np.mean(lse - L[np.arange(L.shape[0]), y]))


def margin_loss(logits, y, gamma):
    """Ramp on the margin: 0 once it reaches ``gamma``, 1 at or below 0."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    return float(min(1.0, max(0.0, 1.0 - margin(logits, y) / gamma)))


def zero_one_loss(logits, y):
    return float(int(np.argmax(logits)) != y)


def _normalized_rows(W):
    n = np.linalg.norm(W, axis=1, keepdims=True)
    live = n[:, 0] > 0
    Wt = np.zeros_like(W)
    Wt[live] = W[live] / n[live]
    return Wt, n, live


def orth_penalty(W):
    """``||I - W~ W~^T||_F^2`` with unit-normalized rows (zero rows stay zero)."""
    Wt, _, _ = _normalized_rows(np.asarray(W, dtype=np.float64))
    E = Wt @ Wt.T - np.eye(W.shape[0])
    return float(np.sum(E * E))


def orth_penalty_grad(W):
    W = np.asarray(W, dtype=np.float64)
    Wt, n, live = _normalized_rows(W)
    E = Wt @ Wt.T - np.eye(W.shape[0])
    Gt = 4.0 * E @ Wt
    # back through w -> w / ||w||
    G = np.zeros_like(W)
    radial = np.sum(Gt * Wt, axis=1, keepdims=True)
    G[live] = (Gt[live] - radial[live] * Wt[live]) / n[live]
    return G


def regularizer(mats, eta):
    return eta / len(mats) * sum(orth_penalty(W) for W in mats)


def _init(cfg, d_in, n_classes, rng):
    widths = (d_in,) + cfg.arch
    layers = []
    for k in range(1, len(widths)):
        bound = 1.0 / np.sqrt(widths[k - 1])
        W = rng.uniform(-bound, bound, (widths[k], widths[k - 1]))
        b = rng.uniform(-bound, bound, widths[k]) if cfg.bias else np.zeros(widths[k])
        layers.append([W, b])
    bound = 1.0 / np.sqrt(widths[-1])
    A = rng.uniform(-bound, bound, (n_classes, widths[-1]))
    return layers, A


def _loss_and_grads(layers, A, X, y, eta, bias):
    pre, acts = [], [X]
    T = X
    for W, b in layers:
        Z = T @ W.T + b
        pre.append(Z)
        T = np.maximum(Z, 0.0)
        acts.append(T)
    logits = T @ A.T
    n = X.shape[0]
    mx = logits.max(axis=1, keepdims=True)
    P = np.exp(logits - mx)
    P /= P.sum(axis=1, keepdims=True)
    loss = cross_entropy(logits, y)
    D = P
    D[np.arange(n), y] -= 1.0
    D /= n
    gA = D.T @ acts[-1]
    G = D @ A
    grads = []
    for k in range(len(layers) - 1, -1, -1):
        G = G * (pre[k] > 0)
        gW = G.T @ acts[k]
        gb = G.sum(axis=0) if bias else np.zeros(layers[k][1].shape)
        grads.append((gW, gb))
        G = G @ layers[k][0]
    grads.reverse()
    if eta > 0:
        mats = [W for W, _ in layers] + [A]
        c = eta / len(mats)
        loss += c * sum(orth_penalty(M) for M in mats)
        grads = [(gW + c * orth_penalty_grad(W), gb) for (gW, gb), (W, _) in zip(grads, layers)]
        gA = gA + c * orth_penalty_grad(A)
    return loss, grads, gA


@dataclass
class TrainResult:
    net: Network
    losses: list = field(default_factory=list)


def sgd_train(data, cfg=None, record=False):
    """Minibatch SGD on cross-entropy plus ``eta / (K+1) * sum_k ||I - W~ W~^T||_F^2``.

    Reshuffles at each pass over the data with a generator seeded by
    ``cfg.seed``, so equal seeds give bit-identical weights. Returns the
    network, or a :class:`TrainResult` with per-step losses if ``record``.
    """
    cfg = cfg or TrainConfig()
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    layers, A = _init(cfg, data.inputs.shape[1], data.n_classes, rng)
    X, y = data.inputs, data.labels
    n = len(data)
    order = rng.permutation(n)
    pos = 0
    losses = []
    for _ in range(cfg.steps):
        if pos + cfg.batch > n:
            order = rng.permutation(n)
            pos = 0
        idx = order[pos:pos + cfg.batch]
        pos += cfg.batch
        loss, grads, gA = _loss_and_grads(layers, A, X[idx], y[idx], cfg.eta, cfg.bias)
        losses.append(loss)
        for (W, b), (gW, gb) in zip(layers, grads):
            W -= cfg.lr * gW
            b -= cfg.lr * gb
        A -= cfg.lr * gA
    net = Network(tuple(Layer(W, b) for W, b in layers), A)
    return TrainResult(net, losses) if record else net


def objective(net, data, eta):
    """Full-batch training objective of ``net``."""
    layers = [[l.W, l.b] for l in net.layers]
    return _loss_and_grads(layers, net.classifier, data.inputs, data.labels, eta, True)[0]


def accuracy(net, data):
    from .network import forward_batch

    return float(np.mean(np.argmax(forward_batch(net, data.inputs), axis=1) == data.labels))


@dataclass(frozen=True)
class ActivityReport:
    histograms: tuple  # per layer: counts of samples by number of active neurons
    active_fraction: tuple  # per layer: (n_samples,) active fraction
    nu: tuple
    flips: np.ndarray  # (len(nu), K): mean flipped neurons per sample and layer

    def median_active_fraction(self):
        return [float(np.median(f)) for f in self.active_fraction]

    def mean_flips(self):
        return self.flips.sum(axis=1)


def _states(net, X):
    out = []
    T = X
    for layer in net.layers:
        Z = T @ layer.W.T + layer.b
        out.append(Z > 0)
        T = np.maximum(Z, 0.0)
    return out


def activity_report(net, data, nu_list, n_dirs=20, seed=0):
    """Active-neuron counts per layer, and how many neurons flip under noise of norm ``nu``.

    Each sample gets ``n_dirs`` uniformly random directions scaled to norm
    ``nu``; the flip count compares activation states with the clean input.
    """
    X = data.inputs if hasattr(data, "inputs") else np.asarray(data, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("activity report of an empty dataset")
    clean = _states(net, X)
    widths = [S.shape[1] for S in clean]
    counts = [S.sum(axis=1) for S in clean]
    hists = tuple(np.bincount(c, minlength=w + 1) for c, w in zip(counts, widths))
    fracs = tuple(c / w for c, w in zip(counts, widths))
    rng = np.random.default_rng(seed)
    n, d = X.shape
    dirs = rng.standard_normal((n_dirs, n, d))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    flips = np.zeros((len(nu_list), len(widths)))
    for a, nu in enumerate(nu_list):
        total = np.zeros(len(widths))
        for t in range(n_dirs):
            noisy = _states(net, X + nu * dirs[t])
            total += [np.sum(S != C) for S, C in zip(noisy, clean)]
        flips[a] = total / (n_dirs * n)
    return ActivityReport(hists, fracs, tuple(float(v) for v in nu_list), flips)
