"""Proximal maps of the atoms of the functional.

The data term and the first-order distance term have closed forms along
geodesics.  The second-order terms d2 and d11 have none; their proximal maps
are approximated by a subgradient method on the product manifold,

    x^(j) = exp(x^(j-1), -tau_j grad psi(x^(j-1))),   tau_j = tau0 / j,

keeping the best iterate by psi.  Euclidean, circle, sphere and SPD tuples
run through compiled kernels; other geometries use the numpy path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .differences import d2, d11, grad_d2, grad_d11
from .exceptions import DomainError, ValidationError
from .manifolds import Circle, Euclidean, Manifold, _as_float
from .sphere import Sphere
from .spd import SPD

PAIR_TOL = 1e-14


@dataclass(frozen=True)
class ProxSchedule:
    """Inner step schedule of the subgradient proximal maps.

    Parameters
    ----------
    tau0 : float
        Step seed; step j on psi is ``tau0 / j``.  psi carries the data term
        with weight 1/2, so ``tau0 = 1`` corresponds to the step seed
        ``lambda`` for the equivalent objective ``psi / lambda`` written in
        standard proximal form ``d^2 / (2 lambda) + w * d2``.  With it the
        first step of a Euclidean prox lands on the exact minimizer.
    max_inner_iters : int
        Number of subgradient steps.
    stop_tol : float
        Optional early exit once the Riemannian step length drops below it;
        0 runs all iterations.
    """

    tau0: float = 1.0
    max_inner_iters: int = 50
    stop_tol: float = 0.0

    def __post_init__(self):
        if not (self.tau0 > 0 and np.isfinite(self.tau0)):
            raise ValidationError("tau0 must be positive")
        if int(self.max_inner_iters) < 1:
            raise ValidationError("max_inner_iters must be a positive integer")
        if not self.stop_tol >= 0:
            raise ValidationError("stop_tol must be nonnegative")

    def step(self, j: int) -> float:
        return self.tau0 / j


def kernel_code(M: Manifold):
    """Integer code of the compiled geometry for M, or None."""
    if isinstance(M, Euclidean):
        return _kernels.EUCLIDEAN
    if isinstance(M, Circle):
        return _kernels.CIRCLE
    if isinstance(M, Sphere):
        return _kernels.SPHERE
    if isinstance(M, SPD):
        return _kernels.SPD
    return None


# -- closed forms -------------------------------------------------------------
def prox_data(M: Manifold, lam, f, x):
    """Minimizer of ``d(x, y)^2 / (2 lam) + d(y, f)^2 / 2`` over y.

    It lies on the geodesic from x to f at fraction ``lam / (1 + lam)``.
    """
    lam = _as_float(lam)
    if np.any(lam < 0):
        raise ValidationError("lambda must be nonnegative")
    return M.geodesic(x, f, lam / (1.0 + lam))


def prox_dist_pair(M: Manifold, mu, x1, x2):
    """Proximal map of ``mu * d(y1, y2)`` at (x1, x2).

    Both points move towards each other by ``min(mu, d/2)``; pairs closer
    than 1e-14 are returned unchanged.
    """
    x1, x2 = _as_float(x1), _as_float(x2)
    mu = _as_float(mu)
    d = M.dist(x1, x2)
    keep = ~(d > PAIR_TOL)
    frac = np.where(keep, 0.0, np.minimum(mu, 0.5 * d) / np.where(keep, 1.0, d))
    y1 = M.geodesic(x1, x2, frac)
    y2 = M.geodesic(x2, x1, frac)
    return (np.where(keep[..., None], x1, y1), np.where(keep[..., None], x2, y2))


# -- second order -------------------------------------------------------------
def objective_psi(M: Manifold, mu, g, x):
    """``sum_j d(x_j, g_j)^2 / 2 + mu * d2(x)`` (three points) or ``mu * d11(x)`` (four)."""
    g = [_as_float(a) for a in g]
    x = [_as_float(a) for a in x]
    if len(g) != len(x) or len(g) not in (3, 4):
        raise ValidationError("psi needs matching tuples of 3 or 4 points")
    data = sum(0.5 * M.dist(a, b) ** 2 for a, b in zip(x, g))
    reg = d2(M, *x) if len(x) == 3 else d11(M, *x)
    return data + _as_float(mu) * reg


def _tuple_grad(M, X):
    if X.shape[-2] == 3:
        return grad_d2(M, X[..., 0, :], X[..., 1, :], X[..., 2, :]).stack()
    return np.stack(grad_d11(M, *(X[..., j, :] for j in range(4))), axis=-2)


def _psi_stacked(M, mu, G, X):
    k = G.shape[-2]
    return objective_psi(M, mu, [G[..., j, :] for j in range(k)], [X[..., j, :] for j in range(k)])


def _prox_numpy(M, G, mu, tau0, iters, stop_tol):
    """Batched numpy subgradient method; raises DomainError on any tuple."""
    x = G.copy()
    best = G.copy()
    psi_best = _psi_stacked(M, mu, G, G)
    for j in range(1, iters + 1):
        grad = _tuple_grad(M, x)
        tau = tau0 / j
        step = -tau * (mu[..., None, None] * grad - M.log(x, G))
        x = M.exp(x, step)
        val = _psi_stacked(M, mu, G, x)
        better = val < psi_best
        psi_best = np.where(better, val, psi_best)
        best = np.where(better[..., None, None], x, best)
        if stop_tol > 0 and np.all(np.sqrt(np.sum(M.norm(x, step) ** 2, axis=-1)) <= stop_tol):
            break
    return best


def _prox_numpy_robust(M, G, mu, tau0, iters, stop_tol):
    try:
        return _prox_numpy(M, G, mu, tau0, iters, stop_tol), np.zeros(len(G), dtype=np.int64)
    except DomainError:
        pass
    # redo tuple by tuple so one bad tuple does not abort the rest
    out = G.copy()
    flags = np.zeros(len(G), dtype=np.int64)
    for b in range(len(G)):
        x = G[b].copy()
        best = G[b].copy()
        try:
            psi_best = _psi_stacked(M, mu[b], G[b], G[b])
            for j in range(1, iters + 1):
                tau = tau0 / j
                step = -tau * (mu[b] * _tuple_grad(M, x) - M.log(x, G[b]))
                x = M.exp(x, step)
                val = _psi_stacked(M, mu[b], G[b], x)
                if val < psi_best:
                    psi_best, best = val, x.copy()
                if stop_tol > 0 and np.sqrt(np.sum(M.norm(x, step) ** 2)) <= stop_tol:
                    break
        except DomainError:
            flags[b] = 1
        out[b] = best
    return out, flags


def prox_tuples(M: Manifold, mu, G, sched: ProxSchedule | None = None, backend="auto"):
    """Approximate proxes of ``mu_b * d2`` / ``mu_b * d11`` for a batch of tuples.

    Parameters
    ----------
    G : ndarray, shape (B, k, D)
        k = 3 for d2 triples, k = 4 for d11 quadruples.
    mu : float or ndarray, shape (B,)
    backend : {"auto", "kernel", "numpy"}

    Returns
    -------
    out : ndarray, shape (B, k, D)
        Best iterate by psi for every tuple (``psi(out) <= psi(G)``).
    flags : ndarray of int, shape (B,)
        1 where a geometry error aborted the inner loop early.
    """
    sched = sched or ProxSchedule()
    G = np.ascontiguousarray(_as_float(G))
    if G.ndim != 3 or G.shape[1] not in (3, 4) or G.shape[2] != M.ambient_size:
        raise ValidationError(f"tuple batch has shape {G.shape}")
    mu = np.ascontiguousarray(np.broadcast_to(_as_float(mu), (G.shape[0],)))
    tau0 = float(sched.tau0)
    iters = int(sched.max_inner_iters)
    if G.shape[0] == 0:
        return G.copy(), np.zeros(0, dtype=np.int64)
    code = kernel_code(M)
    if backend == "kernel" and code is None:
        raise ValidationError(f"no compiled kernel for {M!r}")
    if code is not None and backend != "numpy":
        return _kernels.prox_batch(code, G, mu, tau0, iters, float(sched.stop_tol))
    return _prox_numpy_robust(M, G, mu, tau0, iters, float(sched.stop_tol))


def _prox_single(M, mu, g, k, sched, backend, return_flag):
    pts = [_as_float(a) for a in g]
    if len(pts) != k:
        raise ValidationError(f"expected {k} points, got {len(pts)}")
    G = np.stack(np.broadcast_arrays(*pts), axis=-2)
    batch = G.shape[:-2]
    flatG = G.reshape((-1,) + G.shape[-2:])
    out, flags = prox_tuples(M, np.broadcast_to(mu, batch).reshape(-1), flatG, sched,
                             backend=backend)
    out = out.reshape(G.shape)
    res = tuple(out[..., j, :] for j in range(k))
    if return_flag:
        return res, flags.reshape(batch).astype(bool)
    return res


def prox_d2(M: Manifold, mu, g, sched: ProxSchedule | None = None, backend="auto",
            return_flag=False):
    """Approximate proximal map of ``mu * d2`` at the triple ``g``.

    Returns the triple minimizing psi among the subgradient iterates
    (including ``g`` itself).  With ``return_flag`` also returns whether a
    geometry error cut the inner loop short.
    """
    return _prox_single(M, mu, g, 3, sched, backend, return_flag)


def prox_d11(M: Manifold, mu, g, sched: ProxSchedule | None = None, backend="auto",
             return_flag=False):
    """Approximate proximal map of ``mu * d11`` at the quadruple ``g``."""
    return _prox_single(M, mu, g, 4, sched, backend, return_flag)
