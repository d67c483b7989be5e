"""Sparse local Lipschitz certificates with respect to the input.

Layer ``k`` (1-based) of a trace owns the normalized pre-activations
``q^k``. Choosing ``s^k`` of its most inactive neurons gives a radius (how
far the layer input may move before one of them wakes up) and a scale (the
operator norm of the weight block on the surviving rows and columns).
Radii and scales compose across layers; a greedy pass picks the sparsity
for a given energy level and a bisection over that energy finds the best
certificate.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import complement, kth_largest, spectral_norm, submatrix, top_k_indices
from .network import forward


class ScaleCache:
    """Memoizes reduced-block spectral norms for one network."""

    def __init__(self, net):
        self.net = net
        self._norms = {}

    def __call__(self, k, J_prev, J_cur):
        key = (k, J_prev.tobytes(), J_cur.tobytes())
        val = self._norms.get(key)
        if val is None:
            val = layer_scale(self.net, J_prev, J_cur, k)
            self._norms[key] = val
        return val


def _scales(net, cache):
    return cache if cache is not None else ScaleCache(net)


def _width(trace, k):
    return trace.q[k - 1].shape[0]


def layer_radius(trace, k, s_k):
    """Stable inactive set ``I^k`` of size ``s_k`` and its radius.

    ``s_k = 0`` is the global case, radius ``+inf``. Asking for more neurons
    than are inactive is allowed and yields radius 0.
    """
    d = _width(trace, k)
    if not 0 <= s_k <= d:
        raise ValueError(f"sparsity {s_k} outside [0, {d}] at layer {k}")
    if s_k == 0:
        return np.zeros(0, dtype=np.intp), math.inf
    neg_q = -trace.q[k - 1]
    idx = top_k_indices(neg_q, s_k)
    if s_k > trace.inactive[k - 1].shape[0]:
        return idx, 0.0
    return idx, max(kth_largest(neg_q, s_k), 0.0)


def layer_scale(net, J_prev, J_cur, k):
    """``||W^k[J_cur, J_prev]||_2``; an empty block has norm 0."""
    return spectral_norm(submatrix(net.layers[k - 1].W, J_cur, J_prev))


def input_retained(trace, s0):
    """``J^0`` for input sparsity ``s0``: drop the first ``s0`` zero coordinates of x.

    Returns ``None`` when x has fewer than ``s0`` zeros.
    """
    d0 = trace.x.shape[0]
    zeros = np.flatnonzero(trace.x == 0)
    if s0 > zeros.shape[0]:
        return None
    return complement(zeros[:s0], d0)


@dataclass(frozen=True)
class Composition:
    r_cum: float
    l_cum: float
    sets: tuple  # J^0..J^K
    radii: tuple  # r^(k), k = 1..K
    scales: tuple  # l^(k)
    feasible: bool


def compose(net, trace, s, cache=None):
    """Cumulative radius and scale for the sparsity vector ``s = (s^0..s^K)``.

    Layer ``k``'s radius is divided by the product of the scales before it.
    An infeasible ``s`` gives ``r_cum = 0``; the offending layers keep their
    full row set so ``l_cum`` still means something.
    """
    scale = _scales(net, cache)
    K = net.depth
    if len(s) != K + 1:
        raise ValueError(f"sparsity vector needs {K + 1} entries, got {len(s)}")
    d0 = trace.x.shape[0]
    if not 0 <= s[0] <= d0:
        raise ValueError(f"input sparsity {s[0]} outside [0, {d0}]")
    J = input_retained(trace, s[0])
    feasible = J is not None
    if J is None:
        J = np.arange(d0)
    sets, radii, scales = [J], [], []
    r_cum, l_prefix = math.inf, 1.0
    for k in range(1, K + 1):
        I, r = layer_radius(trace, k, s[k])
        d = _width(trace, k)
        if s[k] > trace.inactive[k - 1].shape[0]:
            feasible = False
            J = np.arange(d)
        else:
            J = complement(I, d)
        l = scale(k, sets[-1], J)
        if l_prefix > 0:
            r_cum = min(r_cum, r / l_prefix)
        sets.append(J)
        radii.append(r)
        scales.append(l)
        l_prefix *= l
    if not feasible:
        r_cum = 0.0
    return Composition(r_cum, l_prefix, tuple(sets), tuple(radii), tuple(scales), feasible)


def _margin_bound(margin, a_norm, l_cum):
    if margin <= 0:
        return 0.0
    denom = 2.0 * a_norm * l_cum
    return math.inf if denom == 0 else margin / denom


def certify_at(net, x, s, trace=None, a_norm=None, cache=None):
    """``min{r_cum(x, s), margin / (2 ||A||_2 l_cum(x, s))}`` for a fixed ``s``."""
    if s[0] != 0:
        raise ValueError("certification fixes the input sparsity s^0 to 0")
    trace = trace if trace is not None else forward(net, x)
    a_norm = a_norm if a_norm is not None else net.classifier_norm()
    if trace.margin <= 0:
        return 0.0
    comp = compose(net, trace, s, cache)
    return min(comp.r_cum, _margin_bound(trace.margin, a_norm, comp.l_cum))


def greedy_sparsity(net, trace, nu, cache=None):
    """Largest sparsity per layer whose radius still absorbs the propagated energy."""
    if not nu >= 0:
        raise ValueError("nu must be >= 0")
    scale = _scales(net, cache)
    s = [0]
    J_prev = np.arange(trace.x.shape[0])
    nu_hat = float(nu)
    for k in range(1, net.depth + 1):
        neg_q = -trace.q[k - 1]
        if nu_hat == 0:
            # no energy reaches this layer: every inactive neuron stays put
            s_k = trace.inactive[k - 1].shape[0]
        else:
            s_k = int(np.count_nonzero(neg_q >= nu_hat))
        J = complement(top_k_indices(neg_q, s_k), neg_q.shape[0])
        nu_hat *= scale(k, J_prev, J)
        s.append(s_k)
        J_prev = J
    return tuple(s)


@dataclass(frozen=True)
class InputCertificate:
    r_sparse: float
    r_global: float
    s_hat: tuple
    radii: tuple
    scales: tuple
    r_cum: float
    l_cum: float
    l_global: float
    margin: float
    classifier_norm: float
    tol: float
    label: int = 0
    # ||A||_2 on the columns kept at s_hat; reported only, the radius uses the full norm
    classifier_norm_reduced: float = math.nan
    probes: int = field(default=0, compare=False)


def certify(net, x, tol=1e-6, trace=None, a_norm=None, cache=None):
    """Bisection over the perturbation energy using the greedy sparsity rule.

    The energy ``nu`` is safe when ``nu <= margin / (2 ||A||_2 l_cum(x, s(nu)))``
    with ``s(nu)`` the greedy vector. Safe energies form an interval starting
    at 0, and its right end never exceeds the bound at maximal sparsity
    ``s(0)``, so that bound is where the search starts.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    trace = trace if trace is not None else forward(net, x)
    a_norm = a_norm if a_norm is not None else net.classifier_norm()
    cache = _scales(net, cache)
    K = net.depth
    zero = (0,) * (K + 1)
    glob = compose(net, trace, zero, cache)
    m = trace.margin
    r_global = min(glob.r_cum, _margin_bound(m, a_norm, glob.l_cum))

    probes = 0

    def l_at(nu):
        nonlocal probes
        probes += 1
        return compose(net, trace, greedy_sparsity(net, trace, nu, cache), cache).l_cum

    def safe(nu):
        return 2.0 * a_norm * l_at(nu) * nu <= m

    if m <= 0:
        lo = 0.0
    else:
        hi = _margin_bound(m, a_norm, l_at(0.0))
        if math.isinf(hi):
            # a layer collapses to nothing at maximal sparsity; grow until unsafe
            lo, hi = 0.0, max(float(np.linalg.norm(trace.x)), 1.0)
            while hi < 1e300 and safe(hi):
                lo, hi = hi, 2.0 * hi
        else:
            lo = 0.0
        if safe(hi):
            lo = hi
        else:
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if safe(mid):
                    lo = mid
                else:
                    hi = mid
    s_hat = greedy_sparsity(net, trace, lo, cache)
    comp = compose(net, trace, s_hat, cache)
    # report the certificate of the concrete vector; it is never below lo
    r_sparse = 0.0 if m <= 0 else max(lo, min(comp.r_cum, _margin_bound(m, a_norm, comp.l_cum)))
    return InputCertificate(
        r_sparse=r_sparse,
        r_global=r_global,
        s_hat=s_hat,
        radii=comp.radii,
        scales=comp.scales,
        r_cum=comp.r_cum,
        l_cum=comp.l_cum,
        l_global=glob.l_cum,
        margin=m,
        classifier_norm=a_norm,
        tol=tol,
        label=trace.label,
        classifier_norm_reduced=spectral_norm(net.classifier[:, comp.sets[-1]]) if comp.sets[-1].size else 0.0,
        probes=probes,
    )


def certify_many(net, X, tol=1e-6, threads=1):
    """Certificates for each row of ``X``, in row order."""
    from .parallel import parallel_map

    a_norm = net.classifier_norm()
    return parallel_map(lambda x: certify(net, x, tol, a_norm=a_norm), list(np.asarray(X)), threads)


def security_curve(net, data, nu_grid, tol=1e-6, certs=None, threads=1):
    """Certified accuracy against perturbation energy.

    Rows are ``(nu, certified_acc_sparse, certified_acc_global, clean_acc)``.
    """
    if len(data) == 0:
        raise ValueError("security curve of an empty dataset")
    grid = np.asarray(nu_grid, dtype=np.float64)
    if np.any(np.diff(grid) < 0):
        raise ValueError("nu grid must be sorted ascending")
    if certs is None:
        certs = certify_many(net, data.inputs, tol, threads)
    correct = np.array([c.label == y for c, y in zip(certs, data.labels)])
    rs = np.array([c.r_sparse for c in certs])
    rg = np.array([c.r_global for c in certs])
    n = len(data)
    clean = correct.mean()
    return [
        (float(nu), float(np.sum(correct & (rs >= nu)) / n), float(np.sum(correct & (rg >= nu)) / n), float(clean))
        for nu in grid
    ]


@dataclass(frozen=True)
class MonotoneReport:
    checked: int
    violations: tuple

    @property
    def ok(self):
        return not self.violations


def _in_set(trace, k, s_in):
    if k == 1:
        return input_retained(trace, s_in)
    neg_q = -trace.q[k - 2]
    return complement(top_k_indices(neg_q, s_in), neg_q.shape[0])


def monotone_check(net, trace, radius_fn=None, scale_fn=None, rtol=1e-8):
    """Exhaustively test the monotone-ordering conditions at every layer.

    For each layer the radius must not grow with the output sparsity nor
    shrink with the input sparsity, and the scale must not grow with
    either. ``radius_fn(trace, k, s_in, s_out)`` and
    ``scale_fn(net, trace, k, s_in, s_out)`` can be swapped in to test a
    different implementation.
    """

    def default_radius(trace, k, s_in, s_out):
        return layer_radius(trace, k, s_out)[1]

    def default_scale(net, trace, k, s_in, s_out):
        I, _ = layer_radius(trace, k, s_out)
        return layer_scale(net, _in_set(trace, k, s_in), complement(I, _width(trace, k)), k)

    radius_fn = radius_fn or default_radius
    scale_fn = scale_fn or default_scale
    bad, checked = [], 0
    for k in range(1, net.depth + 1):
        n_in = np.count_nonzero(trace.x == 0) if k == 1 else trace.inactive[k - 2].shape[0]
        n_out = trace.inactive[k - 1].shape[0]
        R = np.array([[radius_fn(trace, k, a, b) for b in range(n_out + 1)] for a in range(n_in + 1)])
        L = np.array([[scale_fn(net, trace, k, a, b) for b in range(n_out + 1)] for a in range(n_in + 1)])
        checked += R.size
        slack = rtol * max(1.0, float(np.max(L)))
        if np.any(R[:, 1:] > R[:, :-1]):
            bad.append(f"layer {k}: radius grows with output sparsity")
        if np.any(R[1:] < R[:-1]):
            bad.append(f"layer {k}: radius shrinks with input sparsity")
        if np.any(L[1:] > L[:-1] + slack) or np.any(L[:, 1:] > L[:, :-1] + slack):
            bad.append(f"layer {k}: scale grows with sparsity")
    return MonotoneReport(checked, tuple(bad))
