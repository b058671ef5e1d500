"""Symmetric positive definite matrices P(r) with the affine-invariant metric.

Points are stored flat, as the r*r entries of the matrix in row-major order.
All matrix functions (square roots, Exp, Log, powers) go through the cyclic
Jacobi eigensolver in :mod:`manifold_tv._eig`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _eig
from .exceptions import DomainError, ValidationError
from .manifolds import DEGENERATE_TOL, Manifold, _as_float, _equal

SYMMETRY_TOL = 1e-9


def _t(A):
    return np.swapaxes(A, -1, -2)


def _sym(A):
    return 0.5 * (A + _t(A))


def _spectral(w, V, fn):
    return (V * fn(w)[..., None, :]) @ _t(V)


@dataclass(frozen=True)
class SymEigen:
    """Eigendecomposition ``A = Q diag(eigenvalues) Q^T`` with ascending eigenvalues."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _check_symmetric(A):
    A = _as_float(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValidationError(f"expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix has non-finite entries")
    defect = np.max(np.abs(A - _t(A))) if A.size else 0.0
    if defect > SYMMETRY_TOL:
        raise ValidationError(f"matrix is not symmetric (defect {defect:.3g})")
    return A


def sym_eig(A) -> SymEigen:
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Eigenvalues are ascending; each eigenvector's first nonzero component is
    positive.  Accepts batches of shape (..., r, r).
    """
    A = _check_symmetric(A)
    w, V = _eig.eigh(A, canonical=True)
    return SymEigen(w, V)


def matrix_exp(A):
    """Matrix exponential of symmetric matrices."""
    A = _check_symmetric(A)
    w, V = _eig.eigh(A, canonical=False)
    return _sym(_spectral(w, V, np.exp))


def matrix_log(A):
    """Principal matrix logarithm of SPD matrices."""
    A = _check_symmetric(A)
    w, V = _eig.eigh(A, canonical=False)
    if np.any(w <= 0):
        raise DomainError("matrix_log: input is not positive definite")
    return _sym(_spectral(w, V, np.log))


def matrix_power(A, p):
    A = _check_symmetric(A)
    w, V = _eig.eigh(A, canonical=False)
    if np.any(w <= 0):
        raise DomainError("matrix_power: input is not positive definite")
    return _sym(_spectral(w, V, lambda s: s ** p))


def spd_weight(a):
    """Jacobi weight sinh(a/4) / sinh(a/2) for ``a = T |lambda_i - lambda_j|``.

    Evaluated as the equivalent ``1 / (2 cosh(a/4))``, which is continuous at
    ``a = 0`` where it takes the flat value 1/2.
    """
    return 0.5 / np.cosh(0.25 * _as_float(a))


class SPD(Manifold):
    """The manifold P(r) of r x r symmetric positive definite matrices."""

    kind = "spd"
    hadamard = True

    def __init__(self, r: int = 3):
        if int(r) < 1:
            raise ValidationError("SPD size must be positive")
        self.r = int(r)
        self.dim = self.r * (self.r + 1) // 2
        self.ambient_size = self.r * self.r
        self.index = [(i, j) for i in range(self.r) for j in range(i, self.r)]

    def __repr__(self):
        return f"SPD({self.r})"

    def descriptor(self):
        return {"kind": "spd", "r": self.r}

    # -- layout -----------------------------------------------------------
    def mat(self, x):
        x = _as_float(x)
        return x.reshape(x.shape[:-1] + (self.r, self.r))

    @staticmethod
    def flat(A):
        return A.reshape(A.shape[:-2] + (-1,))

    def check_point(self, x, atol=1e-9):
        x = self.check_shape(x)
        X = self.mat(x)
        defect = np.max(np.abs(X - _t(X))) if X.size else 0.0
        if defect > atol:
            raise ValidationError(f"{self!r}: matrix is not symmetric (defect {defect:.3g})")
        w, _ = _eig.eigh(X, canonical=False)
        if np.any(w <= 0):
            raise ValidationError(
                f"{self!r}: matrix is not positive definite "
                f"(smallest eigenvalue {float(np.min(w)):.3g})")
        return x

    def check_tangent(self, x, v, atol=1e-9):
        v = self.check_shape(v, "tangent vector")
        Vm = self.mat(v)
        if np.max(np.abs(Vm - _t(Vm))) > atol * max(1.0, float(np.max(np.abs(Vm)))):
            raise ValidationError(f"{self!r}: tangent vector is not symmetric")
        return v

    # -- internals --------------------------------------------------------
    def _roots(self, X):
        w, V = _eig.eigh(X, canonical=False)
        if np.any(w <= 0):
            raise DomainError(f"{self!r}: point is not positive definite")
        s = np.sqrt(w)
        return _spectral(s, V, lambda a: a), _spectral(s, V, lambda a: 1.0 / a)

    def _whitened(self, x, y):
        X, Y = self.mat(x), self.mat(y)
        xs, xis = self._roots(X)
        return xs, xis, _sym(xis @ Y @ xis)

    # -- geometry ---------------------------------------------------------
    def dist(self, x, y):
        x, y = _as_float(x), _as_float(y)
        _, _, W = self._whitened(x, y)
        mu, _ = _eig.eigh(W, canonical=False)
        d = np.sqrt(np.sum(np.log(mu) ** 2, axis=-1))
        return np.where(_equal(x, y), 0.0, d)

    def log(self, x, y):
        x, y = _as_float(x), _as_float(y)
        xs, _, W = self._whitened(x, y)
        mu, Q = _eig.eigh(W, canonical=False)
        out = self.flat(_sym(xs @ _spectral(mu, Q, np.log) @ xs))
        return np.where(_equal(x, y)[..., None], 0.0, out)

    def exp(self, x, v):
        x, v = _as_float(x), _as_float(v)
        xs, xis = self._roots(self.mat(x))
        B = _sym(xis @ self.mat(v) @ xis)
        w, Q = _eig.eigh(B, canonical=False)
        out = self.flat(_sym(xs @ _spectral(w, Q, np.exp) @ xs))
        return np.where(np.all(v == 0, axis=-1)[..., None], x, out)

    def geodesic(self, x, y, t):
        x, y = _as_float(x), _as_float(y)
        t = _as_float(t)[..., None]
        xs, _, W = self._whitened(x, y)
        mu, Q = _eig.eigh(W, canonical=False)
        powered = (Q * (mu ** t)[..., None, :]) @ _t(Q)
        out = self.flat(_sym(xs @ powered @ xs))
        return np.where(_equal(x, y)[..., None], x, out)

    def midpoint(self, x, y):
        return self.geodesic(x, y, 0.5)

    def inner(self, x, u, v):
        _, xis = self._roots(self.mat(x))
        a = xis @ self.mat(u) @ xis
        b = xis @ self.mat(v) @ xis
        return np.sum(a * b, axis=(-1, -2))

    def transport(self, x, y, v):
        x, y, v = _as_float(x), _as_float(y), _as_float(v)
        xs, xis, W = self._whitened(x, y)
        mu, Q = _eig.eigh(W, canonical=False)
        E = _spectral(mu, Q, np.sqrt)
        out = self.flat(_sym(xs @ E @ xis @ self.mat(v) @ xis @ E @ xs))
        return np.where(_equal(x, y)[..., None], v, out)

    def _unit_basis(self):
        out = np.zeros((self.dim, self.r, self.r))
        for k, (i, j) in enumerate(self.index):
            if i == j:
                out[k, i, i] = 1.0
            else:
                out[k, i, j] = out[k, j, i] = 1.0 / math.sqrt(2.0)
        return out

    def tangent_basis(self, x):
        xs, _ = self._roots(self.mat(x))
        E = self._unit_basis()
        return self.flat(xs[..., None, :, :] @ E @ xs[..., None, :, :])

    def adjoint_midpoint_differential(self, x, z, v):
        x, z, v = _as_float(x), _as_float(z), _as_float(v)
        xs, xis, W = self._whitened(x, z)
        mu, Q = _eig.eigh(W, canonical=False)
        ell = np.log(mu)
        # transport back from W^{1/2} to I in the whitened chart, in the eigenbasis of W
        quarter = mu ** -0.25
        C = _t(Q) @ (xis @ self.mat(v) @ xis) @ Q
        C = C * quarter[..., :, None] * quarter[..., None, :]
        wts = spd_weight(np.abs(ell[..., :, None] - ell[..., None, :]))
        G = Q @ (C * wts) @ _t(Q)
        return self.flat(_sym(xs @ G @ xs))

    def midpoint_weights(self, x, z):
        frame, weights = spd_midpoint_weights(x, z, _spd=self)
        return frame.vectors, weights

    def random_point(self, rng, size=()):
        size = (size,) if isinstance(size, int) else tuple(size)
        A = rng.normal(scale=0.6, size=size + (self.r, self.r))
        return self.flat(matrix_exp(_sym(A)))


@dataclass(frozen=True)
class SPDFrame:
    """Orthonormal frame ``xi_ij`` at ``base`` diagonalizing the curvature operator.

    ``vectors[..., k, :]`` is the flat matrix for ``index[k] = (i, j)``,
    ``i <= j``, and ``eigenvalues[..., k] = -(lambda_i - lambda_j)^2 / 4``.
    """

    base: np.ndarray
    index: list
    vectors: np.ndarray
    eigenvalues: np.ndarray
    direction_eigenvalues: np.ndarray


def spd_midpoint_weights(x, z, _spd=None):
    """Frame at x and weights with ``D_x c[xi_ij] = w_ij Xi_ij(T/2)``.

    The frame is built in the whitened chart: ``b = x^{-1/2} v x^{-1/2}``
    for the unit direction ``v`` of the geodesic from x to z has eigenpairs
    ``(lambda_i, v_i)``; the frame matrices are ``x^{1/2} e_ij x^{1/2}`` with
    ``e_ii = v_i v_i^T`` and ``e_ij = (v_i v_j^T + v_j v_i^T)/sqrt(2)``.

    Returns
    -------
    frame : SPDFrame
    weights : ndarray, shape (..., r(r+1)/2)
        1/2 when ``lambda_i == lambda_j``, otherwise
        ``sinh(T|lambda_i - lambda_j|/4) / sinh(T|lambda_i - lambda_j|/2)``.
    """
    x, z = _as_float(x), _as_float(z)
    M = _spd or SPD(int(round(math.sqrt(x.shape[-1]))))
    xs, xis, W = M._whitened(x, z)
    mu, Q = _eig.eigh(W, canonical=True)
    ell = np.log(mu)
    T = np.sqrt(np.sum(ell ** 2, axis=-1))
    if np.any(T <= DEGENERATE_TOL):
        raise DomainError("spd_midpoint_weights: degenerate geodesic (x == z)")
    lam = ell / T[..., None]
    vecs, kappa, weights = [], [], []
    for i, j in M.index:
        vi, vj = Q[..., :, i], Q[..., :, j]
        outer = vi[..., :, None] * vj[..., None, :]
        e = outer if i == j else (outer + _t(outer)) / math.sqrt(2.0)
        vecs.append(M.flat(xs @ e @ xs))
        diff = np.abs(lam[..., i] - lam[..., j])
        kappa.append(-0.25 * diff ** 2)
        same = diff <= 1e-10 * np.maximum(1.0, np.abs(lam[..., i]) + np.abs(lam[..., j]))
        weights.append(np.where(same, 0.5, spd_weight(T * diff)))
    frame = SPDFrame(
        base=x,
        index=list(M.index),
        vectors=np.stack(vecs, axis=-2),
        eigenvalues=np.stack(kappa, axis=-1),
        direction_eigenvalues=lam,
    )
    return frame, np.stack(weights, axis=-1)
