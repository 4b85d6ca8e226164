"""G-Wishart sampling.

Parameterisation used throughout: ``W(delta, D)`` has density proportional
to ``|K|^((delta-2)/2) exp(-<K, D>/2)``. On ``p x p`` matrices this is the
textbook Wishart with ``delta + p - 1`` degrees of freedom and scale
``inv(D)``; :func:`sample_wishart` relies on that bridge and nothing else
does.

Heavy routines accept ``size`` / stacked inputs and work on all draws at
once; the per-draw semantics are those of the unbatched call.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import multigammaln

from .graph import Graph, is_decomposable, maximal_cliques
from .linalg import _schur0, as_spd

log = logging.getLogger(__name__)

Engine = Literal["node-wise", "clique-ips"]


class CompletionError(ArithmeticError):
    """Completion did not converge within the sweep budget."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class GWishartParams:
    """Shape `delta` and rate matrix `d` of ``W_G(delta, d)``."""

    delta: float
    d: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        d = as_spd(self.d, "D")
        d.flags.writeable = False
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def p(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class CompletionSettings:
    engine: Engine = "node-wise"
    tol: float = 1e-8
    max_sweeps: int = 1000

    def __post_init__(self):
        if self.engine not in ("node-wise", "clique-ips"):
            raise ValueError(f"unknown completion engine {self.engine!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")


DEFAULT_SETTINGS = CompletionSettings()


def rng_stream(seed: int | None = None) -> np.random.Generator:
    """Seeded counter-based (Philox) random stream."""
    return np.random.Generator(np.random.Philox(seed))


def sample_wishart(params: GWishartParams, rng: np.random.Generator, size: int | None = None):
    """Draw from ``W(delta, D)`` on the full matrix space by Bartlett decomposition.

    Returns one ``(p, p)`` matrix, or a ``(size, p, p)`` stack.
    """
    p = params.p
    df = params.delta + p - 1
    if not df > p - 1:
        raise ValueError(f"improper Wishart: delta + p - 1 = {df} <= p - 1")
    n = 1 if size is None else int(size)
    scale_chol = np.linalg.cholesky(np.linalg.inv(params.d))
    bart = np.zeros((n, p, p))
    rows, cols = np.tril_indices(p, -1)
    bart[:, rows, cols] = rng.standard_normal((n, rows.size))
    idx = np.arange(p)
    bart[:, idx, idx] = np.sqrt(rng.chisquare(df - idx, size=(n, p)))
    la = scale_chol @ bart
    k = la @ np.swapaxes(la, -1, -2)
    return k[0] if size is None else k


def _reachability(adj: np.ndarray) -> np.ndarray:
    """Boolean transitive closure of ``adj | I``; batched over leading axes."""
    p = adj.shape[-1]
    reach = adj | np.eye(p, dtype=bool)
    steps = 1
    while steps < p:
        reach = np.matmul(reach.astype(np.uint8), reach.astype(np.uint8)) > 0
        steps *= 2
    return reach


def _nodewise(sigma: np.ndarray, adj: np.ndarray, tol: float, max_sweeps: int) -> np.ndarray:
    """Regression-based completion of the stack `sigma` (shape ``(n, p, p)``).

    `adj` is one ``(p, p)`` adjacency shared by the stack, or a stack of
    per-draw adjacencies; in the latter case the regressions are solved at
    full size with non-neighbours masked out.

    The working matrix starts block diagonal over connected components
    (entries across components are zero in the completion and stay zero
    under the updates) and lives on the unit-diagonal rescaling of `sigma`,
    so `tol` bounds the per-sweep change of a correlation-scale matrix.
    Draws drop out of the sweep loop individually once converged.
    """
    n, p, _ = sigma.shape
    shared = adj.ndim == 2
    scale = np.sqrt(np.diagonal(sigma, axis1=1, axis2=2))
    corr = sigma / scale[:, :, None] / scale[:, None, :]
    w = np.where(_reachability(adj), corr, 0.0)
    others = [np.delete(np.arange(p), j) for j in range(p)]
    if shared:
        masks = [adj[j, o] for j, o in enumerate(others)]
        nbrs = [o[m] for o, m in zip(others, masks)]
    else:
        masks = [adj[:, j, o] for j, o in enumerate(others)]
        eye = np.eye(p - 1, dtype=bool)

    def coefficients(j: int, idx) -> np.ndarray:
        # regression of node j on its neighbours, zero-padded to p - 1
        o = others[j]
        if shared:
            nb = nbrs[j]
            beta = np.zeros((len(w[idx]), p - 1))
            if nb.size:
                a = w[idx][:, nb[:, None], nb]
                beta[:, masks[j]] = np.linalg.solve(a, corr[idx][:, nb, j][..., None])[..., 0]
            return beta
        m = masks[j][idx]
        a = np.where(m[:, :, None] & m[:, None, :], w[idx][:, o[:, None], o], eye)
        rhs = np.where(m, corr[idx][:, o, j], 0.0)
        return np.linalg.solve(a, rhs[..., None])[..., 0]

    active = np.arange(n)
    if p > 1:
        for sweep in range(max_sweeps):
            change = np.zeros(active.size)
            for j in range(p):
                o = others[j]
                sub = w[active]
                new = np.einsum("nab,nb->na", sub[:, o[:, None], o], coefficients(j, active))
                change = np.maximum(change, np.abs(new - sub[:, o, j]).max(axis=1))
                sub[:, o, j] = new
                sub[:, j, o] = new
                w[active] = sub
            active = active[~(change < tol)]
            if active.size == 0:
                break
        else:
            worst = float(change.max())
            raise CompletionError(
                f"node-wise completion did not converge in {max_sweeps} sweeps for "
                f"{active.size} of {n} draws (last change {worst:.3e})",
                worst,
            )

    # precision recovered column by column from the regression coefficients,
    # which makes non-edges exactly zero
    every = slice(None)
    k = np.zeros_like(w)
    for j in range(p):
        o = others[j]
        beta = coefficients(j, every)
        kjj = 1.0 / (w[:, j, j] - np.einsum("na,na->n", w[:, o, j], beta))
        k[:, j, j] = kjj
        k[:, o, j] = -beta * kjj[:, None]
    k = 0.5 * (k + np.swapaxes(k, -1, -2))
    return k / scale[:, :, None] / scale[:, None, :]


def complete_stack(sigma: np.ndarray, adj: np.ndarray, tol: float = 1e-8, max_sweeps: int = 1000) -> np.ndarray:
    """Node-wise completion with a separate adjacency per stacked matrix."""
    return _nodewise(sigma, np.asarray(adj, dtype=bool), tol, max_sweeps)


def _clique_ips(
    targets: list[np.ndarray], cliques0: list[np.ndarray], n: int, p: int, tol: float, max_sweeps: int
) -> np.ndarray:
    """Cyclic clique updates ``K_C <- A_C + B_C(K)`` from the identity."""
    k = np.broadcast_to(np.eye(p), (n, p, p)).copy()
    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for c, a in zip(cliques0, targets):
            new = a + _schur0(k, c)
            change = max(change, float(np.abs(new - k[:, c[:, None], c]).max()))
            k[:, c[:, None], c] = new
        if change < tol:
            return k
    raise CompletionError(
        f"clique IPS did not converge in {max_sweeps} sweeps (last change {change:.3e})", change
    )


def _cliques0(g: Graph) -> list[np.ndarray]:
    return [np.asarray(c) - 1 for c in maximal_cliques(g)]


def gwishart_complete(sigma, g: Graph, settings: CompletionSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Positive-definite ``K`` with the zero pattern of `g` and ``inv(K)`` matching `sigma`.

    Matching holds on the diagonal and on every edge of `g`. `sigma` may be
    a single matrix or a stack. Both engines compute the same (unique)
    completion.
    """
    sigma = np.asarray(sigma, dtype=float)
    single = sigma.ndim == 2
    s = sigma[None] if single else sigma
    n, p, _ = s.shape
    if g.is_complete():
        k = np.linalg.inv(s)
    elif settings.engine == "node-wise":
        k = _nodewise(s, g.adjacency, settings.tol, settings.max_sweeps)
    else:
        cl = _cliques0(g)
        targets = [np.linalg.inv(s[:, c[:, None], c]) for c in cl]
        k = _clique_ips(targets, cl, n, p, settings.tol, settings.max_sweeps)
    return k[0] if single else k


def sample_gwishart(
    g: Graph,
    params: GWishartParams,
    settings: CompletionSettings = DEFAULT_SETTINGS,
    rng: np.random.Generator | None = None,
    size: int | None = None,
) -> np.ndarray:
    """Direct draw(s) from ``W_g(delta, D)``.

    A full-space Wishart draw ``K*`` is mapped to the unique matrix in the
    cone of `g` whose inverse agrees with ``inv(K*)`` on the diagonal and
    edges. On the complete graph the raw draw is returned as is.
    """
    if g.p != params.p:
        raise ValueError(f"graph has {g.p} nodes but D is {params.p}x{params.p}")
    rng = rng if rng is not None else rng_stream()
    k_full = sample_wishart(params, rng, size)
    if g.is_complete():
        return k_full
    return gwishart_complete(np.linalg.inv(k_full), g, settings)


def sample_gwishart_masked(adj: np.ndarray, params: GWishartParams, rng, tol: float = 1e-8,
                           max_sweeps: int = 1000) -> np.ndarray:
    """One direct draw per adjacency in the ``(n, p, p)`` stack `adj`."""
    k_full = sample_wishart(params, rng, adj.shape[0])
    return complete_stack(np.linalg.inv(k_full), adj, tol, max_sweeps)


def block_gibbs_step(k, g: Graph, params: GWishartParams, rng: np.random.Generator) -> np.ndarray:
    """One full sweep of the clique-wise block Gibbs sampler.

    Each maximal clique ``C`` in turn gets ``K_C <- A + B_C(K)`` with a fresh
    ``A ~ W(delta, D_C)``. `k` may be a stack of independent chain states.
    """
    k = np.array(k, dtype=float)
    single = k.ndim == 2
    if single:
        k = k[None]
    n = k.shape[0]
    for c in _cliques0(g):
        sub = GWishartParams(params.delta, params.d[np.ix_(c, c)])
        a = sample_wishart(sub, rng, n)
        k[:, c[:, None], c] = a + _schur0(k, c)
    return k[0] if single else k


def ips_fixed_point(g: Graph, s, settings: CompletionSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Clique IPS from the identity with targets ``inv(s_C)``.

    The limit ``K`` satisfies ``inv(K)_C == s_C`` on every maximal clique.
    """
    s = as_spd(s, "target")
    cl = _cliques0(g)
    targets = [np.linalg.inv(s[np.ix_(c, c)])[None] for c in cl]
    return _clique_ips(targets, cl, 1, g.p, settings.tol, settings.max_sweeps)[0]


def gwishart_mode(g: Graph, params: GWishartParams, settings: CompletionSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Maximiser of the unnormalised ``W_g(delta, D)`` density over the cone of `g`.

    Stationarity gives ``inv(K)_ij = D_ij / (delta - 2)`` on the diagonal and
    edges, so this is the IPS fixed point for the rescaled target.
    """
    if not params.delta > 2:
        raise ValueError(f"mode requires delta > 2, got {params.delta}")
    return ips_fixed_point(g, params.d / (params.delta - 2.0), settings)


def posterior_params(prior: GWishartParams, u, n: int) -> GWishartParams:
    """Conjugate update ``(delta, D) -> (delta + n, D + U)``."""
    if n < 0:
        raise ValueError("sample count must be non-negative")
    u = np.asarray(u, dtype=float)
    if u.shape != prior.d.shape:
        raise ValueError(f"scatter shape {u.shape} does not match D {prior.d.shape}")
    return GWishartParams(prior.delta + n, prior.d + u)


def log_ig_complete(delta: float, d) -> float:
    """log of the normalising constant of ``W(delta, d)`` on the full cone."""
    d = np.atleast_2d(np.asarray(d, dtype=float))
    k = d.shape[0]
    if k == 0:
        return 0.0
    a = 0.5 * (delta + k - 1)
    _, logdet = np.linalg.slogdet(d)
    return a * k * np.log(2.0) + multigammaln(a, k) - a * logdet


def _junction_separators(cliques: list[tuple[int, ...]]) -> list[tuple[int, ...]]:
    # Maximum-weight spanning tree of the clique intersection graph (Prim).
    sets = [set(c) for c in cliques]
    in_tree = [0]
    seps = []
    rest = list(range(1, len(sets)))
    while rest:
        best = max(
            ((len(sets[a] & sets[b]), a, b) for a in in_tree for b in rest),
            key=lambda t: t[0],
        )
        _, a, b = best
        seps.append(tuple(sorted(sets[a] & sets[b])))
        in_tree.append(b)
        rest.remove(b)
    return seps


def log_ig_decomposable(g: Graph, params: GWishartParams) -> float:
    """Exact log normalising constant of ``W_g(delta, D)`` for decomposable `g`.

    Product of complete-block constants over cliques divided by the same
    over separators.
    """
    if not is_decomposable(g):
        raise ValueError("graph is not decomposable; no closed form is available")
    if not params.delta > 2:
        raise ValueError(f"delta must exceed 2, got {params.delta}")
    cliques = maximal_cliques(g)
    total = 0.0
    for c in cliques:
        idx = np.asarray(c) - 1
        total += log_ig_complete(params.delta, params.d[np.ix_(idx, idx)])
    for s in _junction_separators(cliques):
        if s:
            idx = np.asarray(s) - 1
            total -= log_ig_complete(params.delta, params.d[np.ix_(idx, idx)])
    return float(total)


def iter_direct(g: Graph, params: GWishartParams, n: int, rng: np.random.Generator,
                settings: CompletionSettings = DEFAULT_SETTINGS, chunk: int = 100_000):
    """Yield `n` direct draws as successive ``(m, p, p)`` stacks."""
    done = 0
    while done < n:
        m = min(chunk, n - done)
        yield sample_gwishart(g, params, settings, rng, size=m)
        done += m


def iter_block_gibbs(g: Graph, params: GWishartParams, n: int, rng: np.random.Generator,
                     burnin: int = 0, chains: int = 1, k0=None):
    """Yield `n` post-burn-in block Gibbs states as ``(chains, p, p)`` stacks.

    `chains` independent chains run in lock-step from `k0` (default: the
    identity); each discards `burnin` sweeps, then every sweep is yielded
    until `n` states in total have been produced (the last stack may be
    trimmed).
    """
    k = np.broadcast_to(np.eye(g.p) if k0 is None else k0, (chains, g.p, g.p)).copy()
    for _ in range(burnin):
        k = block_gibbs_step(k, g, params, rng)
    done = 0
    while done < n:
        k = block_gibbs_step(k, g, params, rng)
        take = min(chains, n - done)
        yield k[:take]
        done += take


class RunningMoments:
    """Entrywise mean and variance accumulated over stacks of matrices."""

    def __init__(self):
        self.n = 0
        self._sum = 0.0
        self._sumsq = 0.0

    def update(self, stack: np.ndarray) -> None:
        self.n += stack.shape[0]
        self._sum = self._sum + stack.sum(axis=0)
        self._sumsq = self._sumsq + (stack**2).sum(axis=0)

    @property
    def mean(self) -> np.ndarray:
        return self._sum / self.n

    @property
    def var(self) -> np.ndarray:
        return (self._sumsq / self.n - self.mean**2) * self.n / max(self.n - 1, 1)
