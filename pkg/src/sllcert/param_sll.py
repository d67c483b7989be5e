"""Sensitivity of zero-bias ReLU networks to weight perturbations.

The classifier is treated as layer ``K+1`` with weight ``B = A^T`` of shape
``(d^K, C)``, so its row sparsity is the sparsity of the last hidden
representation. Every quantity is derived from per-layer constants: the
group norm bound ``M_W[k]`` and babel bounds ``M_s[k][s]``.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .babel import CHEAP, babel_table, reduced_babel
from .cert_input import compose
from .linalg import row_group_norm
from .network import forward

CONSISTENCY_SLACK = 1e-12


class ConsistencyError(RuntimeError):
    """A normalized inner product left [-1, 1]: the norm bounds do not hold."""


def layer_mats(net):
    """``W^1..W^K`` followed by ``A^T``."""
    return net.weights() + [net.classifier.T]


@dataclass(frozen=True)
class HypothesisConstraints:
    """Per-layer bounds for layers ``1..K+1`` (index 0 is layer 1).

    ``M_s[k][s]`` bounds the reduced babel value of layer ``k+1`` at row
    sparsity ``s`` over every column sparsity. ``rows[k]`` is the row count
    used by the scaled parameter norm.
    """

    M_W: tuple
    M_s: tuple
    rows: tuple
    mode: str = CHEAP

    def __post_init__(self):
        if not len(self.M_W) == len(self.M_s) == len(self.rows):
            raise ValueError("constraint tables disagree on depth")
        tables = []
        for M in self.M_s:
            M = np.asarray(M, dtype=np.float64)
            if M.size and M[-1] != 0:
                raise ValueError("babel bound at the singleton level must be 0")
            if np.any(M[1:] > M[:-1]):
                raise ValueError("babel bounds must be non-increasing in the sparsity level")
            tables.append(M)
        object.__setattr__(self, "M_s", tuple(tables))
        object.__setattr__(self, "M_W", tuple(float(m) for m in self.M_W))
        object.__setattr__(self, "rows", tuple(int(r) for r in self.rows))

    @property
    def depth(self):
        """Number of hidden layers ``K``."""
        return len(self.M_W) - 1

    def envelope(self, other):
        """Smallest constraint set containing both ``self`` and ``other``."""
        if self.rows != other.rows:
            raise ValueError("constraints belong to different architectures")
        return HypothesisConstraints(
            tuple(max(a, b) for a, b in zip(self.M_W, other.M_W)),
            tuple(np.maximum(a, b) for a, b in zip(self.M_s, other.M_s)),
            self.rows,
            self.mode,
        )

    def admits(self, net, rtol=1e-12):
        """Whether ``net`` lies in the class these constraints describe."""
        mine = constraints_from_network(net, self.mode)
        if mine.rows != self.rows:
            return False
        ok_w = all(a <= b * (1 + rtol) for a, b in zip(mine.M_W, self.M_W))
        ok_s = all(np.all(a <= b + rtol) for a, b in zip(mine.M_s, self.M_s))
        return ok_w and ok_s


def require_zero_bias(net):
    if net.has_bias:
        raise ValueError("parameter sensitivity is defined for zero-bias networks only")


def constraints_from_network(net, mode=CHEAP):
    """Tightest constraints that still contain ``net``."""
    require_zero_bias(net)
    mats = layer_mats(net)
    M_W, M_s, rows = [], [], []
    for k, W in enumerate(mats, start=1):
        M_W.append(row_group_norm(W))
        table = babel_table(W, mode, layer=k)
        if k <= net.depth:
            worst = table.worst_over_columns()
        else:
            worst = table.values[:, 0].copy()
        # enforce the monotone shape exactly (exact mode need not have it)
        worst = np.maximum.accumulate(worst[::-1])[::-1]
        worst[-1] = 0.0
        worst += 0.0  # drop negative zeros
        M_s.append(worst)
        rows.append(W.shape[0])
    return HypothesisConstraints(tuple(M_W), tuple(M_s), tuple(rows), mode)


def _layer_factor(constraints, n, s_n):
    # layer n (1-based); a fully sparse layer passes nothing through
    M = constraints.M_s[n - 1]
    if s_n >= M.shape[0]:
        return 0.0
    return constraints.M_W[n - 1] * math.sqrt(1.0 + M[s_n])


def zeta(constraints, s, k):
    """``prod_{n<=k} M_W[n] sqrt(1 + M_s[n][s^n])``; layer ``K+1`` uses ``s^K``."""
    K = constraints.depth
    if not 0 <= k <= K + 1:
        raise ValueError(f"zeta index {k} outside [0, {K + 1}]")
    if len(s) != K + 1:
        raise ValueError(f"sparsity vector needs {K + 1} entries, got {len(s)}")
    out = 1.0
    for n in range(1, k + 1):
        out *= _layer_factor(constraints, n, s[min(n, K)])
    return out


def hypothesis_distance(net_a, net_b, constraints):
    """``max_k sqrt(rows_k) / M_W[k] * ||W_a^k - W_b^k||_{2,inf}``."""
    mats_a, mats_b = layer_mats(net_a), layer_mats(net_b)
    if [M.shape for M in mats_a] != [M.shape for M in mats_b]:
        raise ValueError("networks have different architectures")
    dist = 0.0
    for Wa, Wb, M, rows in zip(mats_a, mats_b, constraints.M_W, constraints.rows):
        g = row_group_norm(Wa - Wb)
        if g == 0:
            continue
        dist = max(dist, math.inf if M == 0 else math.sqrt(rows) * g / M)
    return dist


def robust_global_lipschitz(constraints, nu, K=None):
    K = constraints.depth if K is None else K
    return (K + 1) * zeta(constraints, (0,) * (K + 1), K + 1) * (1.0 + nu)


def robust_scale(constraints, s, nu, K=None):
    K = constraints.depth if K is None else K
    return (K + 1) * zeta(constraints, s, K + 1) * (1.0 + nu)


def _check_input(net, x):
    require_zero_bias(net)
    x = np.asarray(x, dtype=np.float64)
    if np.linalg.norm(x) > 1.0 + CONSISTENCY_SLACK:
        raise ValueError("inputs must lie in the unit ball")
    return forward(net, x)


def _cosines(net, trace, constraints):
    """``<w_i, Phi^{k-1}(x)> / (M_W[k] zeta^{k-1}(0))`` for each hidden layer."""
    zero = (0,) * (net.depth + 1)
    out = []
    for k in range(1, net.depth + 1):
        denom = constraints.M_W[k - 1] * zeta(constraints, zero, k - 1)
        z = trace.pre[k - 1]
        if denom == 0:
            c = np.zeros_like(z)
        else:
            c = z / denom
        if np.any(np.abs(c) > 1.0 + CONSISTENCY_SLACK):
            raise ConsistencyError(
                f"layer {k}: normalized inner product {np.max(np.abs(c)):.17g} exceeds 1"
            )
        out.append(np.clip(c, -1.0, 1.0))
    return out


def angular_distances(net, x, constraints):
    """``beta^k_i = arccos(c_i) / pi`` per hidden layer."""
    trace = _check_input(net, x)
    return [np.arccos(c) / math.pi for c in _cosines(net, trace, constraints)]


def critical_angle(beta, s):
    """``s``-th largest angular distance; ``s = 0`` means no constraint."""
    if s == 0:
        return math.nan
    return float(np.sort(beta)[::-1][s - 1])


def _radius_terms(net, trace, constraints, nu):
    """Per layer, sorted descending: ``max{0, -cos(pi beta_i) - nu} / (k (1 + nu))``."""
    terms = []
    for k, c in enumerate(_cosines(net, trace, constraints), start=1):
        t = np.maximum(-c - nu, 0.0) / (k * (1.0 + nu))
        terms.append(-np.sort(-t))
    return terms


def _radius_from_terms(terms, inactive_counts, s):
    r = math.inf
    for k, t in enumerate(terms, start=1):
        s_k = s[k]
        if s_k == 0:
            continue
        if s_k > inactive_counts[k - 1]:
            return 0.0
        r = min(r, float(t[s_k - 1]))
    return r


def robust_radius(net, x, s, nu, constraints):
    """Largest weight perturbation keeping ``s^k`` neurons per layer inactive under input noise ``nu``.

    Layers with ``s^k = 0`` impose nothing, so the zero vector gives ``+inf``.
    """
    if s[0] != 0:
        raise ValueError("input sparsity s^0 must be 0")
    trace = _check_input(net, x)
    counts = [I.shape[0] for I in trace.inactive]
    for k in range(1, net.depth + 1):
        if not 0 <= s[k] <= trace.q[k - 1].shape[0]:
            raise ValueError(f"sparsity {s[k]} outside [0, {trace.q[k - 1].shape[0]}] at layer {k}")
    return _radius_from_terms(_radius_terms(net, trace, constraints, nu), counts, s)


def optimal_robust_sparsity(net, V, epsilon, nu, constraints):
    """Entrywise largest ``s`` whose robust radius is at least ``epsilon`` on all of ``V``.

    The radius couples layers only through a minimum, so each layer is
    solved on its own: the count of terms reaching ``epsilon``, minimized
    over the reference set.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    X = np.asarray(V.inputs if hasattr(V, "inputs") else V, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("reference set is empty")
    K = net.depth
    best = [None] * K
    for x in X:
        trace = _check_input(net, x)
        for k, t in enumerate(_radius_terms(net, trace, constraints, nu)):
            n = min(int(np.count_nonzero(t >= epsilon)), trace.inactive[k].shape[0])
            best[k] = n if best[k] is None else min(best[k], n)
    return (0,) + tuple(best)


@dataclass(frozen=True)
class RobustSensitivity:
    nu: float
    epsilon: float
    s_star: tuple
    r_par: float
    l_par: float
    L_rob: float
    L_global: float

    @property
    def ratio(self):
        return self.L_rob / self.L_global if self.L_global > 0 else 1.0


def robust_sparse_regularity(net, V, epsilon, nu, constraints=None):
    constraints = constraints if constraints is not None else constraints_from_network(net)
    s_star = optimal_robust_sparsity(net, V, epsilon, nu, constraints)
    X = np.asarray(V.inputs if hasattr(V, "inputs") else V, dtype=np.float64)
    r_par = min(robust_radius(net, x, s_star, nu, constraints) for x in X)
    L_rob = robust_scale(constraints, s_star, nu)
    return RobustSensitivity(
        nu=float(nu),
        epsilon=float(epsilon),
        s_star=s_star,
        r_par=r_par,
        l_par=L_rob,
        L_rob=L_rob,
        L_global=robust_global_lipschitz(constraints, nu),
    )


def auto_epsilon(n_reference, depth):
    """Radius threshold ``1 / (|V| (K + 1))``."""
    return 1.0 / (n_reference * (depth + 1))


def flatness_radius(net, S_T, s, nu, constraints=None):
    """Weight-perturbation radius under which no prediction on ``S_T`` flips under input noise ``nu``.

    Output drift is bounded by ``l_par * dist + zeta^{K+1}(s) * nu`` and the
    margin is 2-Lipschitz, so the admissible distance is
    ``(rho - 2 zeta nu) / (2 l_par)``, also capped by the robust radius.
    Returns 0 (with a warning) when ``nu`` exceeds some input radius at ``s``.
    """
    constraints = constraints if constraints is not None else constraints_from_network(net)
    X = np.asarray(S_T.inputs if hasattr(S_T, "inputs") else S_T, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("training set is empty")
    z = zeta(constraints, s, net.depth + 1)
    l_par = robust_scale(constraints, s, nu)
    best = math.inf
    for x in X:
        trace = _check_input(net, x)
        r_inp = compose(net, trace, s).r_cum
        if nu > r_inp:
            warnings.warn(f"nu={nu} exceeds the input radius {r_inp} at s={tuple(s)}; flatness radius is 0")
            return 0.0
        r_par = robust_radius(net, x, s, nu, constraints)
        slack = max(trace.margin - 2.0 * z * nu, 0.0)
        flat = math.inf if l_par == 0 and slack > 0 else (0.0 if slack == 0 else slack / (2.0 * l_par))
        best = min(best, r_par, flat)
    return best


@dataclass(frozen=True)
class BoundReport:
    term1: float
    term2: float
    ln_cover: float
    bucket_log_term: float
    m: int
    gamma: float
    nu: float
    alpha: float
    s: tuple
    constant: float = 1.0

    @property
    def total(self):
        return self.constant * (self.term1 + self.term2)


def log_covering_number(dims_rows_cols, m, K):
    """``sum_k n_k ln(1 + 4 sqrt(rows_k) m (K+1))`` with ``n_k`` the parameter count."""
    return float(sum(rows * cols * math.log1p(4.0 * math.sqrt(rows) * m * (K + 1)) for rows, cols in dims_rows_cols))


def generalization_bound(net, gamma, nu, alpha, m, s):
    """Both additive terms of the margin bound, with O(.) constants set to 1.

    ``bucket_log_term`` is the extra ``sum_k ln(2 + K ||W^k||_{2,inf})`` a
    union bound over integer-bucketed constraints would add inside the
    square root; it is reported but not folded into ``term1``.
    """
    require_zero_bias(net)
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    if not m >= 1:
        raise ValueError("m must be >= 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    K = net.depth
    if len(s) != K + 1 or s[0] != 0:
        raise ValueError(f"sparsity vector needs {K + 1} entries starting with 0")
    mats = layer_mats(net)
    shapes = [W.shape for W in mats]
    ln_n = log_covering_number(shapes, m, K)
    term1 = math.sqrt((ln_n + math.log(2.0 / alpha)) / m)
    prod = 1.0
    for k, W in enumerate(mats, start=1):
        s_out = s[k] if k <= K else s[K]
        s_in = s[k - 1] if k <= K else 0
        if s_out >= W.shape[0]:
            prod = 0.0
            break
        s_in = min(s_in, W.shape[1] - 1)
        mu = reduced_babel(W, s_out, s_in, CHEAP)
        prod *= row_group_norm(W) * math.sqrt(1.0 + mu)
    term2 = (1.0 + nu) / (gamma * m) * prod
    bucket = float(sum(math.log(2.0 + K * row_group_norm(W)) for W in mats))
    return BoundReport(term1, term2, ln_n, bucket, int(m), float(gamma), float(nu), float(alpha), tuple(s))
