"""The unit sphere S^n embedded in R^{n+1}, and its Jacobi midpoint weights."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, ValidationError
from .manifolds import (
    CUT_LOCUS_TOL,
    DEGENERATE_TOL,
    Manifold,
    _as_float,
    _equal,
    complete_basis,
)


def _angle(x, y):
    """Geodesic angle and the component of y orthogonal to x."""
    c = np.sum(x * y, axis=-1)
    w = y - c[..., None] * x
    s = np.linalg.norm(w, axis=-1)
    return np.arctan2(s, c), w, s


class Sphere(Manifold):
    """S^n = {x in R^{n+1} : |x| = 1} with the round metric (curvature 1).

    Points are unit vectors; tangent vectors at x are ambient vectors
    orthogonal to x.  Distances use ``atan2(|y - <x,y>x|, <x,y>)``, which is
    the clamped ``arccos(<x,y>)`` computed without cancellation near 0 and pi.
    """

    kind = "sphere"
    injectivity_radius = math.pi
    hadamard = False

    def __init__(self, n: int = 2):
        if int(n) < 1:
            raise ValidationError("Sphere dimension must be positive")
        self.n = int(n)
        self.dim = self.n
        self.ambient_size = self.n + 1

    def __repr__(self):
        return f"Sphere({self.n})"

    def descriptor(self):
        return {"kind": "sphere", "n": self.n}

    def check_point(self, x, atol=1e-9):
        x = self.check_shape(x)
        err = np.abs(np.linalg.norm(x, axis=-1) - 1.0)
        if np.any(err > atol):
            raise ValidationError(
                f"{self!r}: point norm deviates from 1 by {float(np.max(err)):.3g}")
        return x

    def check_tangent(self, x, v, atol=1e-9):
        v = self.check_shape(v, "tangent vector")
        err = np.abs(np.sum(_as_float(x) * v, axis=-1))
        if np.any(err > atol * np.maximum(1.0, np.linalg.norm(v, axis=-1))):
            raise ValidationError(f"{self!r}: tangent vector is not orthogonal to its base")
        return v

    def dist(self, x, y):
        x, y = _as_float(x), _as_float(y)
        theta, _, _ = _angle(x, y)
        return np.where(_equal(x, y), 0.0, theta)

    def _log(self, x, y):
        theta, w, s = _angle(x, y)
        self._raise_cut(theta > math.pi - CUT_LOCUS_TOL, x, y)
        scale = np.where(s > 0, theta / np.where(s > 0, s, 1.0), 1.0)
        v = scale[..., None] * w
        return np.where(_equal(x, y)[..., None], 0.0, v), theta, w, s

    def log(self, x, y):
        return self._log(_as_float(x), _as_float(y))[0]

    def exp(self, x, v):
        x, v = _as_float(x), _as_float(v)
        nv = np.linalg.norm(v, axis=-1)[..., None]
        safe = np.where(nv > 0, nv, 1.0)
        y = np.cos(nv) * x + np.sin(nv) * v / safe
        y = y / np.linalg.norm(y, axis=-1, keepdims=True)
        return np.where(nv > 0, y, x)

    def midpoint(self, x, y):
        x, y = _as_float(x), _as_float(y)
        theta, _, _ = _angle(x, y)
        self._raise_cut(theta > math.pi - CUT_LOCUS_TOL, x, y)
        m = x + y
        m = m / np.linalg.norm(m, axis=-1, keepdims=True)
        return np.where(_equal(x, y)[..., None], x, m)

    def inner(self, x, u, v):
        return np.sum(_as_float(u) * _as_float(v), axis=-1)

    def transport(self, x, y, v):
        x, y, v = _as_float(x), _as_float(y), _as_float(v)
        _, theta, w, s = self._log(x, y)
        u = w / np.where(s > 0, s, 1.0)[..., None]
        a = np.sum(u * v, axis=-1)[..., None]
        th = theta[..., None]
        out = v + a * ((np.cos(th) - 1.0) * u - np.sin(th) * x)
        return np.where((s > 0)[..., None], out, v)

    def tangent_basis(self, x):
        x = _as_float(x)
        return complete_basis(x)[..., 1:, :]

    def adjoint_midpoint_differential(self, x, z, v):
        x, z, v = _as_float(x), _as_float(z), _as_float(v)
        c = self.midpoint(x, z)
        back = self.transport(c, x, v)
        direction, T, _, _ = self._log(x, z)
        flat = T <= DEGENERATE_TOL
        unit = direction / np.where(flat, 1.0, T)[..., None]
        a = np.sum(back * unit, axis=-1)[..., None]
        w = 0.5 / np.cos(0.5 * T)[..., None]
        out = 0.5 * a * unit + w * (back - a * unit)
        return np.where(flat[..., None], 0.5 * back, out)

    def midpoint_weights(self, x, z):
        frame, weights = sphere_midpoint_weights(x, z, _sphere=self)
        return frame.vectors, weights

    def random_point(self, rng, size=()):
        size = (size,) if isinstance(size, int) else tuple(size)
        x = rng.normal(size=size + (self.ambient_size,))
        return x / np.linalg.norm(x, axis=-1, keepdims=True)


@dataclass(frozen=True)
class SphereFrame:
    """Orthonormal frame at ``base`` diagonalizing the curvature operator.

    ``vectors[..., 0, :]`` points along the geodesic (eigenvalue 0); the
    remaining vectors span its orthogonal complement (eigenvalue 1).
    """

    base: np.ndarray
    vectors: np.ndarray
    eigenvalues: np.ndarray


def sphere_weight(T):
    """Jacobi weight sin(T/2) / sin(T) of the directions orthogonal to the geodesic."""
    T = _as_float(T)
    return 0.5 / np.cos(0.5 * T)


def sphere_midpoint_weights(x, z, _sphere=None):
    """Frame at x and weights with ``D_x c[xi_k] = w_k Xi_k(T/2)``.

    Parameters
    ----------
    x, z : ndarray, shape (..., n+1)
        Unit vectors with ``0 < d(x, z) < pi``.

    Returns
    -------
    frame : SphereFrame
    weights : ndarray, shape (..., n)
        ``1/2`` for the geodesic direction and ``sin(T/2)/sin(T)`` otherwise.
    """
    x, z = _as_float(x), _as_float(z)
    S = _sphere or Sphere(x.shape[-1] - 1)
    theta, w, s = _angle(x, z)
    if np.any(theta <= DEGENERATE_TOL) or np.any(theta >= math.pi - CUT_LOCUS_TOL):
        raise DomainError(
            "sphere_midpoint_weights: geodesic length must lie in (1e-12, pi - 1e-8)")
    first = w / s[..., None]
    if S.n == 2:
        vectors = np.stack([first, np.cross(x, first)], axis=-2)
    else:
        vectors = complete_basis(first, base=x)
    weights = np.empty(theta.shape + (S.n,))
    weights[..., 0] = 0.5
    weights[..., 1:] = sphere_weight(theta)[..., None]
    eig = np.ones(theta.shape + (S.n,))
    eig[..., 0] = 0.0
    return SphereFrame(base=x, vectors=vectors, eigenvalues=eig), weights
