"""Cyclic Jacobi eigensolver for small symmetric matrices (numba)."""

import math

import numba as nb
import numpy as np

MAX_SWEEPS = 50
OFF_TOL = 1e-13


@nb.njit(cache=True, nogil=True)
def jacobi_eigh(A, w, V):
    """Eigen-decompose the symmetric matrix ``A`` in place of ``w`` and ``V``.

    ``A`` is read-only; ``w`` receives the (unsorted) eigenvalues and the
    columns of ``V`` the eigenvectors.  Sweeps stop once the off-diagonal
    Frobenius mass drops below ``OFF_TOL * ||A||_F``.
    """
    r = A.shape[0]
    jacobi_eigh_ws(A, w, V, np.empty((r, r)))


@nb.njit(cache=True, nogil=True)
def jacobi_eigh_ws(A, w, V, a):
    """As :func:`jacobi_eigh` with caller-provided r x r scratch ``a``."""
    r = A.shape[0]
    fro = 0.0
    for i in range(r):
        for j in range(r):
            a[i, j] = 0.5 * (A[i, j] + A[j, i])
            fro += a[i, j] * a[i, j]
            V[i, j] = 1.0 if i == j else 0.0
    tol = OFF_TOL * math.sqrt(fro)
    for _ in range(MAX_SWEEPS):
        off = 0.0
        for i in range(r):
            for j in range(r):
                if i != j:
                    off += a[i, j] * a[i, j]
        if math.sqrt(off) <= tol:
            break
        for p in range(r - 1):
            for q in range(p + 1, r):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(r):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(r):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(r):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
    for i in range(r):
        w[i] = a[i, i]


@nb.njit(cache=True, nogil=True)
def canonicalize(w, V):
    """Sort eigenpairs ascending; make each vector's first nonzero entry positive."""
    r = w.shape[0]
    order = np.argsort(w)
    w2 = w[order].copy()
    V2 = V[:, order].copy()
    for j in range(r):
        scale = 0.0
        for i in range(r):
            scale = max(scale, abs(V2[i, j]))
        for i in range(r):
            if abs(V2[i, j]) > 1e-12 * scale:
                if V2[i, j] < 0.0:
                    for k in range(r):
                        V2[k, j] = -V2[k, j]
                break
    w[:] = w2
    V[:, :] = V2


@nb.njit(cache=True, nogil=True)
def batch_eigh(A, canonical):
    n, r = A.shape[0], A.shape[1]
    w = np.empty((n, r))
    V = np.empty((n, r, r))
    for k in range(n):
        jacobi_eigh(A[k], w[k], V[k])
        if canonical:
            canonicalize(w[k], V[k])
    return w, V


def eigh(A, canonical=True):
    """Batched symmetric eigendecomposition of arrays of shape (..., r, r)."""
    A = np.asarray(A, dtype=float)
    r = A.shape[-1]
    batch = A.shape[:-2]
    flat = np.ascontiguousarray(A.reshape((-1, r, r)))
    w, V = batch_eigh(flat, canonical)
    return w.reshape(batch + (r,)), V.reshape(batch + (r, r))
