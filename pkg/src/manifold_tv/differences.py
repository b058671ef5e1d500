"""Second-order differences on manifolds and their Riemannian gradients.

For points on a manifold, the absolute second difference is

    d2(x, y, z) = dist(midpoint(x, z), y),

the manifold analogue of ``|x - 2y + z| / 2``, and the mixed difference is

    d11(w, x, y, z) = dist(midpoint(w, y), midpoint(x, z)),

the analogue of ``|w - x + y - z| / 2`` when (w, x, y, z) run around a 2x2
block of pixels.  Gradients are assembled from the adjoint of the midpoint
differential, which each geometry provides in closed form through its Jacobi
weights.

All functions accept batches (leading axes broadcast).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifolds import DEGENERATE_TOL, Manifold, _as_float


@dataclass(frozen=True)
class GradTriple:
    """Gradient of d2 split into its three components.

    Attributes
    ----------
    gx, gy, gz : ndarray
        Tangent vectors at x, y and z respectively.
    """

    gx: np.ndarray
    gy: np.ndarray
    gz: np.ndarray

    def stack(self):
        return np.stack([self.gx, self.gy, self.gz], axis=-2)


def _ordered(x, z):
    # lexicographic order, so midpoints do not depend on the argument order
    x, z = np.broadcast_arrays(_as_float(x), _as_float(z))
    diff = x - z
    first = np.argmax(diff != 0, axis=-1)
    swap = np.take_along_axis(diff, first[..., None], axis=-1) > 0
    return np.where(swap, z, x), np.where(swap, x, z)


def _sym_midpoint(M, x, z):
    return M.midpoint(*_ordered(x, z))


def d2(M: Manifold, x, y, z):
    """Absolute second difference ``dist(midpoint(x, z), y)``.

    Exactly symmetric in (x, z).
    """
    return M.dist(_sym_midpoint(M, x, z), y)


def d11(M: Manifold, w, x, y, z):
    """Mixed second difference ``dist(midpoint(w, y), midpoint(x, z))``."""
    return M.dist(_sym_midpoint(M, w, y), _sym_midpoint(M, x, z))


def adjoint_midpoint_differential(M: Manifold, x, z, v):
    """Adjoint of ``D_x midpoint(., z)`` applied to v (a tangent at the midpoint).

    Equivalent to transporting v back to x, expanding it in the frame that
    diagonalizes the curvature operator along the geodesic, and scaling each
    coefficient by its Jacobi weight.  Linear in v.
    """
    return M.adjoint_midpoint_differential(x, z, v)


def _unit_towards(M, a, b, d, zero):
    # -log_a b / d, zero where the subgradient 0 is chosen
    v = M.log(a, b)
    return np.where(zero[..., None], 0.0, -v / np.where(zero, 1.0, d)[..., None])


def grad_d2(M: Manifold, x, y, z) -> GradTriple:
    """Gradient of d2 with respect to all three arguments.

    Where ``y`` coincides with the midpoint (distance at most 1e-12) d2 is
    not differentiable and the zero subgradient is returned.
    """
    x, y, z = _as_float(x), _as_float(y), _as_float(z)
    c = M.midpoint(x, z)
    d = M.dist(c, y)
    zero = ~(d > DEGENERATE_TOL)
    u = _unit_towards(M, c, y, d, zero)
    gy = _unit_towards(M, y, c, d, zero)
    gx = np.where(zero[..., None], 0.0, M.adjoint_midpoint_differential(x, z, u))
    gz = np.where(zero[..., None], 0.0, M.adjoint_midpoint_differential(z, x, u))
    return GradTriple(gx, gy, gz)


def grad_d11(M: Manifold, w, x, y, z):
    """Gradient of d11 as a tuple ``(gw, gx, gy, gz)``.

    The zero subgradient is returned where the two midpoints coincide.
    """
    w, x, y, z = (_as_float(a) for a in (w, x, y, z))
    c = M.midpoint(w, y)
    ct = M.midpoint(x, z)
    d = M.dist(c, ct)
    zero = ~(d > DEGENERATE_TOL)
    u = _unit_towards(M, c, ct, d, zero)
    ut = _unit_towards(M, ct, c, d, zero)

    def adj(a, b, v):
        return np.where(zero[..., None], 0.0, M.adjoint_midpoint_differential(a, b, v))

    return adj(w, y, u), adj(x, z, ut), adj(y, w, u), adj(z, x, ut)
