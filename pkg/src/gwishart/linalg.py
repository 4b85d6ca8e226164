"""Dense symmetric-matrix kernels.

Most kernels accept stacks of matrices with shape ``(..., p, p)`` so that
many independent draws or chains can be processed at once. Cliques and
node sets passed in from the outside are 1-based, as everywhere else in
the package.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .graph import Graph

SYMMETRY_RTOL = 1e-8


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix that must be positive definite is not."""

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


def symmetrize(a, name: str = "matrix") -> np.ndarray:
    """Return ``(a + a.T) / 2`` after checking that `a` is nearly symmetric."""
    a = np.array(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    at = np.swapaxes(a, -1, -2)
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    if np.abs(a - at).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (a + at)


def _failed_pivot(k: np.ndarray) -> int:
    # Unpivoted Cholesky run to locate the first non-positive pivot (1-based).
    p = k.shape[0]
    lower = np.zeros_like(k)
    for i in range(p):
        d = k[i, i] - lower[i, :i] @ lower[i, :i]
        if not d > 0:
            return i + 1
        lower[i, i] = np.sqrt(d)
        lower[i + 1:, i] = (k[i + 1:, i] - lower[i + 1:, :i] @ lower[i, :i]) / lower[i, i]
    return p


def chol_upper(k) -> np.ndarray:
    """Upper-triangular ``phi`` with positive diagonal and ``phi.T @ phi == k``.

    Raises
    ------
    NotPositiveDefiniteError
        If `k` is not positive definite; ``.pivot`` holds the 1-based index
        of the first failing pivot (for a single matrix).
    """
    k = np.asarray(k, dtype=float)
    try:
        lower = np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        if k.ndim == 2:
            piv = _failed_pivot(k)
            raise NotPositiveDefiniteError(
                f"matrix is not positive definite (pivot {piv} is not positive)", piv
            ) from None
        raise NotPositiveDefiniteError("a matrix in the stack is not positive definite") from None
    return np.swapaxes(lower, -1, -2)


def as_spd(a, name: str = "matrix") -> np.ndarray:
    """Symmetrize `a` and verify positive definiteness by Cholesky."""
    a = symmetrize(a, name)
    try:
        chol_upper(a)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(f"{name}: {exc}", exc.pivot) from None
    return a


def is_positive_definite(a) -> bool:
    try:
        np.linalg.cholesky(np.asarray(a, dtype=float))
    except np.linalg.LinAlgError:
        return False
    return True


def trace_inner(a, b) -> np.ndarray | float:
    """Trace inner product ``tr(a' b)``; batched over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-2:] != b.shape[-2:]:
        raise ValueError(f"dimension mismatch: {a.shape[-2:]} vs {b.shape[-2:]}")
    out = np.einsum("...ij,...ij->...", a, b)
    return float(out) if out.ndim == 0 else out


def _adjacency(g) -> np.ndarray:
    return g.adjacency if isinstance(g, Graph) else np.asarray(g, dtype=bool)


def complete_cholesky(phi, g) -> np.ndarray:
    """Fill the determined entries of an upper-triangular factor.

    For every non-edge ``(i, j)``, ``i < j``, sets
    ``phi[i, j] = -sum_{l < i} phi[l, i] * phi[l, j] / phi[i, i]``, working
    row by row, so that ``(phi.T @ phi)[i, j] == 0``. Diagonal and edge
    entries are left as given; anything below the diagonal is zeroed.

    `g` is a :class:`Graph` or a boolean adjacency array, which may carry
    leading batch axes matching `phi`.
    """
    phi = np.triu(np.array(phi, dtype=float))
    adj = _adjacency(g)
    p = phi.shape[-1]
    diag = np.diagonal(phi, axis1=-2, axis2=-1)
    if not np.all(diag > 0):
        raise NotPositiveDefiniteError("Cholesky factor has a non-positive diagonal entry")
    batched_graph = adj.ndim > 2
    for i in range(p - 1):
        if batched_graph:
            det = ~adj[..., i, i + 1:]
            if not det.any():
                continue
            vals = -np.einsum("...l,...lj->...j", phi[..., :i, i], phi[..., :i, i + 1:])
            vals /= phi[..., i, i][..., None]
            phi[..., i, i + 1:] = np.where(det, vals, phi[..., i, i + 1:])
        else:
            cols = i + 1 + np.flatnonzero(~adj[i, i + 1:])
            if cols.size == 0:
                continue
            vals = -np.einsum("...l,...lj->...j", phi[..., :i, i], phi[..., :i, cols])
            phi[..., i, cols] = vals / phi[..., i, i][..., None]
    return phi


def _nodes0(c: Sequence[int], p: int) -> np.ndarray:
    idx = np.asarray(sorted(int(v) for v in c), dtype=int) - 1
    if idx.size == 0 or idx[0] < 0 or idx[-1] >= p or np.unique(idx).size != idx.size:
        raise ValueError(f"invalid node set {tuple(c)} for dimension {p}")
    return idx


def _schur0(k: np.ndarray, c: np.ndarray) -> np.ndarray:
    # K_{C,R} K_R^{-1} K_{R,C} for 0-based index array c; batched.
    p = k.shape[-1]
    rest = np.setdiff1d(np.arange(p), c)
    if rest.size == 0:
        return np.zeros(k.shape[:-2] + (c.size, c.size))
    k_cr = k[..., c[:, None], rest]
    k_rr = k[..., rest[:, None], rest]
    return k_cr @ np.linalg.solve(k_rr, np.swapaxes(k_cr, -1, -2))


def schur_complement_b(k, c: Sequence[int]) -> np.ndarray:
    """``K[C, R] @ inv(K[R, R]) @ K[R, C]`` with ``R`` the complement of `c`.

    Returns the zero matrix when `c` covers every node.
    """
    k = np.asarray(k, dtype=float)
    try:
        return _schur0(k, _nodes0(c, k.shape[-1]))
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("complement block is singular") from None


def clique_transform(k, g: Graph, c: Sequence[int], a) -> np.ndarray:
    """Replace the ``c`` block of `k` by ``a + B_c(k)``, leaving all else untouched.

    Maps the cone of positive-definite matrices with the zero pattern of `g`
    into itself. `c` must be complete in `g`.
    """
    k = np.array(k, dtype=float)
    idx = _nodes0(c, g.p)
    sub = g.adjacency[np.ix_(idx, idx)]
    if not (sub | np.eye(idx.size, dtype=bool)).all():
        raise ValueError(f"nodes {tuple(c)} are not a clique of the graph")
    k[..., idx[:, None], idx] = np.asarray(a, dtype=float) + _schur0(k, idx)
    return k


def log_jacobian_k_to_phi(phi, g: Graph) -> float:
    """``sum_i nu_i * log(phi[i, i])`` with ``nu_i`` the count of higher-indexed neighbours."""
    nu = np.triu(g.adjacency, 1).sum(axis=1)
    return float(nu @ np.log(np.diagonal(np.asarray(phi, dtype=float))))


def log_unnorm_density(k, params) -> float:
    """Unnormalised G-Wishart log density ``(delta-2)/2 log|k| - <k, D>/2``.

    The graph-dependent normalising constant is deliberately left out.
    """
    k = np.asarray(k, dtype=float)
    sign, logdet = np.linalg.slogdet(k)
    if sign <= 0 or not is_positive_definite(k):
        raise NotPositiveDefiniteError("density evaluated at a non-positive-definite matrix")
    return 0.5 * (params.delta - 2.0) * logdet - 0.5 * trace_inner(k, params.d)


def free_entry_gradient(k, params, g: Graph) -> np.ndarray:
    """Analytic gradient of :func:`log_unnorm_density` in the free entries of `k`.

    Free entries are the diagonal and the upper-triangle edges of `g`,
    returned in the order ``diag first, then sorted edges``. An off-diagonal
    free entry moves both ``k[i, j]`` and ``k[j, i]``.
    """
    k = np.asarray(k, dtype=float)
    grad = 0.5 * (params.delta - 2.0) * np.linalg.inv(k) - 0.5 * np.asarray(params.d)
    out = list(np.diagonal(grad))
    out += [2.0 * grad[i - 1, j - 1] for i, j in g.sorted_edges()]
    return np.array(out)
