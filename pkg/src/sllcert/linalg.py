"""Dense linear-algebra kernel shared by every other module.

Matrices and vectors are plain ``float64`` numpy arrays. Index sets are
sorted, duplicate-free ``intp`` arrays; ``index_set`` builds them.
"""

import numpy as np

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 1000
_SEED = 20230101


def as_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def as_vector(v, name="vector"):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def index_set(indices, universe):
    """Sorted, duplicate-free index array checked against ``universe``."""
    idx = np.unique(np.asarray(indices, dtype=np.intp).ravel())
    if idx.size and (idx[0] < 0 or idx[-1] >= universe):
        raise ValueError(f"index out of range for universe of size {universe}")
    return idx


def complement(idx, universe):
    mask = np.ones(universe, dtype=bool)
    mask[idx] = False
    return np.flatnonzero(mask)


def spectral_norm(M, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Largest singular value by power iteration on the smaller Gram matrix.

    The start vector comes from a fixed seed so repeated calls agree bit for bit.
    If the iteration has not settled after ``max_iter`` steps (nearly equal top
    singular values) the Gram matrix is handed to ``eigvalsh`` instead.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be > 0 and max_iter >= 1")
    M = as_matrix(M)
    if M.size == 0:
        return 0.0
    G = M @ M.T if M.shape[0] <= M.shape[1] else M.T @ M
    scale = np.abs(G).max()
    if scale == 0.0:
        return 0.0
    G = G / scale
    n = G.shape[0]
    if n == 1:
        return float(np.sqrt(G[0, 0] * scale))

    v = np.random.default_rng(_SEED).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    converged = False
    for _ in range(max_iter):
        w = G @ v
        lam = float(v @ w)
        # residual of the Rayleigh pair bounds the distance to an eigenvalue
        if np.linalg.norm(w - lam * v) <= tol * max(lam, tol):
            converged = True
            break
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector landed in the null space; restart from a basis vector
            v = np.zeros(n)
            v[np.argmax(np.diag(G))] = 1.0
            continue
        v = w / nw
    if not converged:
        # clustered top singular values: finish with a dense symmetric solve
        lam = float(np.linalg.eigvalsh(G)[-1])
    return float(np.sqrt(lam * scale))


def frobenius_norm(M):
    return float(np.linalg.norm(as_matrix(M)))


def row_group_norm(M):
    """Exact ``||M||_{2,inf}``: the largest row l2 norm."""
    M = as_matrix(M)
    if M.size == 0:
        raise ValueError("row_group_norm of an empty matrix")
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", M, M))))


def submatrix(M, rows, cols):
    M = as_matrix(M)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    for idx, n, what in ((rows, M.shape[0], "row"), (cols, M.shape[1], "column")):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError(f"{what} index out of range")
    return M[np.ix_(rows, cols)]


def _check_k(v, s):
    if s < 0 or s > v.shape[0]:
        raise ValueError(f"selection size {s} outside [0, {v.shape[0]}]")


def _order_desc(v):
    # stable sort on -v: larger first, lower index first among ties
    return np.argsort(-v, kind="stable")


def kth_largest(v, s):
    """The ``s``-th largest entry (1-based); ``s = 0`` gives ``+inf``."""
    v = np.asarray(v, dtype=np.float64)
    _check_k(v, s)
    if s == 0:
        return np.inf
    return float(v[_order_desc(v)[s - 1]])


def top_k_indices(v, s):
    """Indices of the ``s`` largest entries, ties broken by lowest index."""
    v = np.asarray(v, dtype=np.float64)
    _check_k(v, s)
    return np.sort(_order_desc(v)[:s])
