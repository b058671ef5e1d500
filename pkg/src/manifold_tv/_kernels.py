"""Compiled inner loops of the subgradient proximal maps.

The per-tuple geometry is written as scalar numba functions on flat 1-D
arrays and dispatched on an integer manifold code, so everything is a
module-level function and the on-disk cache applies.  The formulas mirror
the numpy implementations in :mod:`manifold_tv.manifolds`,
:mod:`manifold_tv.sphere` and :mod:`manifold_tv.spd` operation by operation;
the test suite checks the two paths against each other.

Temporaries live in a caller-provided workspace ``ws`` of shape
(WS_ROWS, D); a function uses rows from the top and hands ``ws[k:]`` to its
callees.  SPD rows are viewed as r x r matrices (D = r * r) or r-vectors.

Geometry functions return an integer status: 0 on success, 1 when a pair is
on the cut locus, 2 when a matrix lost positive definiteness.
"""

import math

import numba as nb
import numpy as np

from ._eig import jacobi_eigh_ws

EUCLIDEAN = 0
CIRCLE = 1
SPHERE = 2
SPD = 3

CUT_LOCUS_TOL = 1e-8
DEGENERATE_TOL = 1e-12
# |x + z|^2 below which the pair counts as antipodal (angle > pi - CUT_LOCUS_TOL)
SPHERE_CUT_SUM2 = (2.0 * math.sin(0.5 * CUT_LOCUS_TOL)) ** 2

OK = 0
CUT = 1
NOT_SPD = 2

WS_ROWS = 40

_jit = nb.njit(cache=True, nogil=True)


@_jit
def workspace(D):
    return np.empty((WS_ROWS, D))


@_jit
def _equal(x, y):
    for i in range(x.shape[0]):
        if x[i] != y[i]:
            return False
    return True


@_jit
def _is_zero(v):
    for i in range(v.shape[0]):
        if v[i] != 0.0:
            return False
    return True


@_jit
def _dot(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


# -- circle -------------------------------------------------------------------
@_jit
def _wrap(a):
    if a >= -math.pi and a < math.pi:
        return a
    r = (a + math.pi) % (2.0 * math.pi)
    return r - math.pi


# -- sphere -------------------------------------------------------------------
@_jit
def _sph_angle(x, y, w):
    """Angle between x and y; w receives y - <x,y> x.  Returns (theta, |w|)."""
    c = _dot(x, y)
    s2 = 0.0
    for i in range(x.shape[0]):
        w[i] = y[i] - c * x[i]
        s2 += w[i] * w[i]
    s = math.sqrt(s2)
    return math.atan2(s, c), s


@_jit
def _sph_theta(x, y):
    c = _dot(x, y)
    s2 = 0.0
    for i in range(x.shape[0]):
        d = y[i] - c * x[i]
        s2 += d * d
    return math.atan2(math.sqrt(s2), c)


@_jit
def _sph_transport(x, y, v, out, w):
    n = x.shape[0]
    theta, s = _sph_angle(x, y, w)
    if theta > math.pi - CUT_LOCUS_TOL:
        return CUT
    if not (s > 0.0):
        for i in range(n):
            out[i] = v[i]
        return OK
    a = 0.0
    for i in range(n):
        a += w[i] / s * v[i]
    ct = math.cos(theta) - 1.0
    st = math.sin(theta)
    for i in range(n):
        out[i] = v[i] + a * (ct * (w[i] / s) - st * x[i])
    return OK


# -- SPD helpers (flat row-major r x r) -----------------------------------------
@_jit
def _mat(ws, k, r):
    return ws[k].reshape((r, r))


@_jit
def _mm(A, B, out):
    r = A.shape[0]
    for i in range(r):
        for j in range(r):
            s = 0.0
            for k in range(r):
                s += A[i, k] * B[k, j]
            out[i, j] = s


@_jit
def _sym_inplace(A):
    r = A.shape[0]
    for i in range(r):
        for j in range(i + 1, r):
            m = 0.5 * (A[i, j] + A[j, i])
            A[i, j] = m
            A[j, i] = m


@_jit
def _spectral(Q, f, out):
    # out = Q diag(f) Q^T
    r = Q.shape[0]
    for i in range(r):
        for j in range(r):
            s = 0.0
            for k in range(r):
                s += Q[i, k] * f[k] * Q[j, k]
            out[i, j] = s


@_jit
def _congruence(S, A, out, t):
    # out = sym(S A S); t is scratch
    _mm(S, A, t)
    _mm(t, S, out)
    _sym_inplace(out)


@_jit
def _roots(X, xs, xis, ws, r):
    """Square root and inverse square root of X; uses ws rows 0-4."""
    w = ws[0][:r]
    Q = _mat(ws, 1, r)
    f = ws[2][:r]
    g = ws[3][:r]
    jacobi_eigh_ws(X, w, Q, _mat(ws, 4, r))
    for k in range(r):
        if not (w[k] > 0.0):
            return NOT_SPD
        f[k] = math.sqrt(w[k])
        g[k] = 1.0 / f[k]
    _spectral(Q, f, xs)
    _spectral(Q, g, xis)
    return OK


@_jit
def _whitened(x, y, r, xs, xis, W, ws):
    """x^{1/2}, x^{-1/2} and x^{-1/2} y x^{-1/2}; uses ws rows 0-5."""
    st = _roots(x.reshape((r, r)), xs, xis, ws, r)
    if st != OK:
        return st
    _congruence(xis, y.reshape((r, r)), W, _mat(ws, 5, r))
    return OK


@_jit
def _whitened_eig(x, y, r, ws):
    """Whiten y at x and eigendecompose; xs, xis, W, mu, Q in ws rows 0-4 (uses 0-10)."""
    xs = _mat(ws, 0, r)
    xis = _mat(ws, 1, r)
    W = _mat(ws, 2, r)
    st = _whitened(x, y, r, xs, xis, W, ws[5:])
    if st != OK:
        return st
    mu = ws[3][:r]
    jacobi_eigh_ws(W, mu, _mat(ws, 4, r), _mat(ws, 5, r))
    for k in range(r):
        if not (mu[k] > 0.0):
            return NOT_SPD
    return OK


@_jit
def _spd_dist(x, y, r, ws):
    if _whitened_eig(x, y, r, ws) != OK:
        return np.nan
    mu = ws[3][:r]
    s = 0.0
    for k in range(r):
        lk = math.log(mu[k])
        s += lk * lk
    return math.sqrt(s)


@_jit
def _spd_geodesic(x, y, t, r, out, ws):
    """Point at fraction t (t = -1 encodes the logarithm)."""
    st = _whitened_eig(x, y, r, ws)
    if st != OK:
        return st
    mu = ws[3][:r]
    f = ws[11][:r]
    for k in range(r):
        f[k] = math.log(mu[k]) if t == -1.0 else mu[k] ** t
    P = _mat(ws, 12, r)
    _spectral(_mat(ws, 4, r), f, P)
    _congruence(_mat(ws, 0, r), P, out.reshape((r, r)), _mat(ws, 13, r))
    return OK


@_jit
def _spd_exp(x, v, r, out, ws):
    xs = _mat(ws, 0, r)
    xis = _mat(ws, 1, r)
    st = _roots(x.reshape((r, r)), xs, xis, ws[2:], r)
    if st != OK:
        return st
    B = _mat(ws, 2, r)
    _congruence(xis, v.reshape((r, r)), B, _mat(ws, 3, r))
    w = ws[3][:r]
    Q = _mat(ws, 4, r)
    jacobi_eigh_ws(B, w, Q, _mat(ws, 5, r))
    f = ws[6][:r]
    for k in range(r):
        f[k] = math.exp(w[k])
    E = _mat(ws, 7, r)
    _spectral(Q, f, E)
    _congruence(xs, E, out.reshape((r, r)), _mat(ws, 8, r))
    return OK


@_jit
def _spd_adjoint(x, z, v, r, out, ws):
    st = _whitened_eig(x, z, r, ws)
    if st != OK:
        return st
    xs = _mat(ws, 0, r)
    xis = _mat(ws, 1, r)
    mu = ws[3][:r]
    Q = _mat(ws, 4, r)
    ell = ws[11][:r]
    q = ws[12][:r]
    for k in range(r):
        ell[k] = math.log(mu[k])
        q[k] = mu[k] ** -0.25
    Vw = _mat(ws, 13, r)
    T1 = _mat(ws, 14, r)
    C = _mat(ws, 15, r)
    _congruence(xis, v.reshape((r, r)), Vw, T1)
    # C = Q^T Vw Q, then scale by the transport and the Jacobi weights
    for i in range(r):
        for j in range(r):
            s = 0.0
            for k in range(r):
                s += Q[k, i] * Vw[k, j]
            T1[i, j] = s
    _mm(T1, Q, C)
    for i in range(r):
        for j in range(r):
            C[i, j] *= q[i] * q[j] * (0.5 / math.cosh(0.25 * abs(ell[i] - ell[j])))
    _mm(Q, C, T1)
    G = Vw
    for i in range(r):
        for j in range(r):
            s = 0.0
            for k in range(r):
                s += T1[i, k] * Q[j, k]
            G[i, j] = s
    _congruence(xs, G, out.reshape((r, r)), C)
    return OK


@_jit
def _spd_inner(x, u, v, r, ws):
    xs = _mat(ws, 0, r)
    xis = _mat(ws, 1, r)
    if _roots(x.reshape((r, r)), xs, xis, ws[2:], r) != OK:
        return np.nan
    a = _mat(ws, 2, r)
    b = _mat(ws, 3, r)
    t = _mat(ws, 4, r)
    _mm(xis, u.reshape((r, r)), t)
    _mm(t, xis, a)
    _mm(xis, v.reshape((r, r)), t)
    _mm(t, xis, b)
    s = 0.0
    for i in range(r):
        for j in range(r):
            s += a[i, j] * b[i, j]
    return s


@_jit
def _spd_size(D):
    return int(round(math.sqrt(D)))


# -- dispatch ---------------------------------------------------------------
@_jit
def m_dist(kind, x, y, ws):
    if _equal(x, y):
        return 0.0
    if kind == EUCLIDEAN:
        s = 0.0
        for i in range(x.shape[0]):
            d = y[i] - x[i]
            s += d * d
        return math.sqrt(s)
    if kind == CIRCLE:
        return abs(_wrap(y[0] - x[0]))
    if kind == SPHERE:
        return _sph_theta(x, y)
    return _spd_dist(x, y, _spd_size(x.shape[0]), ws)


@_jit
def m_log(kind, x, y, out, ws):
    if _equal(x, y):
        out[:] = 0.0
        return OK
    if kind == EUCLIDEAN:
        for i in range(x.shape[0]):
            out[i] = y[i] - x[i]
        return OK
    if kind == CIRCLE:
        d = _wrap(y[0] - x[0])
        if abs(d) > math.pi - CUT_LOCUS_TOL:
            return CUT
        out[0] = d
        return OK
    if kind == SPHERE:
        theta, s = _sph_angle(x, y, out)
        if theta > math.pi - CUT_LOCUS_TOL:
            return CUT
        scale = theta / s if s > 0.0 else 1.0
        for i in range(x.shape[0]):
            out[i] *= scale
        return OK
    return _spd_geodesic(x, y, -1.0, _spd_size(x.shape[0]), out, ws)


@_jit
def m_exp(kind, x, v, out, ws):
    if _is_zero(v):
        out[:] = x
        return OK
    if kind == EUCLIDEAN:
        for i in range(x.shape[0]):
            out[i] = x[i] + v[i]
        return OK
    if kind == CIRCLE:
        out[0] = _wrap(x[0] + v[0])
        return OK
    if kind == SPHERE:
        nv = math.sqrt(_dot(v, v))
        c = math.cos(nv)
        s = math.sin(nv)
        n2 = 0.0
        for i in range(x.shape[0]):
            out[i] = c * x[i] + s * v[i] / nv
            n2 += out[i] * out[i]
        nrm = math.sqrt(n2)
        for i in range(x.shape[0]):
            out[i] /= nrm
        return OK
    return _spd_exp(x, v, _spd_size(x.shape[0]), out, ws)


@_jit
def m_midpoint(kind, x, y, out, ws):
    if kind == EUCLIDEAN:
        for i in range(x.shape[0]):
            out[i] = 0.5 * (x[i] + y[i])
        return OK
    if kind == CIRCLE:
        d = _wrap(y[0] - x[0])
        if abs(d) > math.pi - CUT_LOCUS_TOL:
            return CUT
        out[0] = x[0] if _equal(x, y) else _wrap(x[0] + 0.5 * d)
        return OK
    if kind == SPHERE:
        if _equal(x, y):
            out[:] = x
            return OK
        n2 = 0.0
        for i in range(x.shape[0]):
            out[i] = x[i] + y[i]
            n2 += out[i] * out[i]
        if n2 < SPHERE_CUT_SUM2:
            return CUT
        nrm = math.sqrt(n2)
        for i in range(x.shape[0]):
            out[i] /= nrm
        return OK
    if _equal(x, y):
        out[:] = x
        return OK
    return _spd_geodesic(x, y, 0.5, _spd_size(x.shape[0]), out, ws)


@_jit
def m_inner(kind, x, u, v, ws):
    if kind == SPD:
        return _spd_inner(x, u, v, _spd_size(x.shape[0]), ws)
    return _dot(u, v)


@_jit
def m_adjoint(kind, x, z, v, out, ws):
    """Adjoint of the midpoint differential in its first argument, applied to v."""
    if kind == EUCLIDEAN:
        for i in range(x.shape[0]):
            out[i] = 0.5 * v[i]
        return OK
    if kind == CIRCLE:
        if abs(_wrap(z[0] - x[0])) > math.pi - CUT_LOCUS_TOL:
            return CUT
        out[0] = 0.5 * v[0]
        return OK
    if kind == SPHERE:
        # At the midpoint c the geodesic runs along z - x, and |x + z| is
        # 2 cos(T/2).  The component of v along the geodesic comes back to x
        # scaled by 1/2, the normal part is transported unchanged and scaled
        # by the Jacobi weight 1/|x + z|.
        n = x.shape[0]
        p = _dot(x, z)
        e2 = 0.0
        s2 = 0.0
        for i in range(n):
            e2 += (z[i] - x[i]) ** 2
            s2 += (z[i] + x[i]) ** 2
        if s2 < SPHERE_CUT_SUM2:
            return CUT
        if not (e2 > 0.0):
            for i in range(n):
                out[i] = 0.5 * v[i]
            return OK
        ne = math.sqrt(e2)
        a = 0.0
        for i in range(n):
            a += v[i] * (z[i] - x[i])
        a /= ne
        ex2 = 0.0
        for i in range(n):
            ex2 += (z[i] - p * x[i]) ** 2
        ex = math.sqrt(ex2)
        wt = 1.0 / math.sqrt(s2)
        for i in range(n):
            e_x = (z[i] - p * x[i]) / ex if ex > 0.0 else 0.0
            out[i] = 0.5 * a * e_x + wt * (v[i] - a * (z[i] - x[i]) / ne)
        return OK
    return _spd_adjoint(x, z, v, _spd_size(x.shape[0]), out, ws)


# -- gradients and objectives ---------------------------------------------------
@_jit
def grad_d2(kind, x, y, z, g, ws):
    """Write the gradient of d2 at (x, y, z) into g (3, D); returns status."""
    return _grad_d2_value(kind, x, y, z, g, ws)[0]


@_jit
def _grad_d2_value(kind, x, y, z, g, ws):
    # (status, d2); d2 is nan when the midpoint is undefined
    D = x.shape[0]
    c = ws[0]
    u = ws[1]
    rest = ws[2:]
    st = m_midpoint(kind, x, z, c, rest)
    if st != OK:
        return st, np.nan
    d = m_dist(kind, c, y, rest)
    if not (d > DEGENERATE_TOL):
        g[:, :] = 0.0
        return OK, d
    st = m_log(kind, c, y, u, rest)
    if st != OK:
        return st, d
    for i in range(D):
        u[i] = -u[i] / d
    st = m_log(kind, y, c, g[1], rest)
    if st != OK:
        return st, d
    for i in range(D):
        g[1, i] = -g[1, i] / d
    st = m_adjoint(kind, x, z, u, g[0], rest)
    if st != OK:
        return st, d
    return m_adjoint(kind, z, x, u, g[2], rest), d


@_jit
def grad_d11(kind, w, x, y, z, g, ws):
    """Gradient of d11 at (w, x, y, z) into g (4, D)."""
    return _grad_d11_value(kind, w, x, y, z, g, ws)[0]


@_jit
def _grad_d11_value(kind, w, x, y, z, g, ws):
    D = x.shape[0]
    c = ws[0]
    ct = ws[1]
    u = ws[2]
    ut = ws[3]
    rest = ws[4:]
    st = m_midpoint(kind, w, y, c, rest)
    if st != OK:
        return st, np.nan
    st = m_midpoint(kind, x, z, ct, rest)
    if st != OK:
        return st, np.nan
    d = m_dist(kind, c, ct, rest)
    if not (d > DEGENERATE_TOL):
        g[:, :] = 0.0
        return OK, d
    st = m_log(kind, c, ct, u, rest)
    if st != OK:
        return st, d
    st = m_log(kind, ct, c, ut, rest)
    if st != OK:
        return st, d
    for i in range(D):
        u[i] = -u[i] / d
        ut[i] = -ut[i] / d
    st = m_adjoint(kind, w, y, u, g[0], rest)
    if st != OK:
        return st, d
    st = m_adjoint(kind, y, w, u, g[2], rest)
    if st != OK:
        return st, d
    st = m_adjoint(kind, x, z, ut, g[1], rest)
    if st != OK:
        return st, d
    return m_adjoint(kind, z, x, ut, g[3], rest), d


@_jit
def d2_value(kind, x, y, z, ws):
    c = ws[0]
    if m_midpoint(kind, x, z, c, ws[1:]) != OK:
        return np.nan
    return m_dist(kind, c, y, ws[1:])


@_jit
def d11_value(kind, w, x, y, z, ws):
    c = ws[0]
    ct = ws[1]
    if m_midpoint(kind, w, y, c, ws[2:]) != OK or m_midpoint(kind, x, z, ct, ws[2:]) != OK:
        return np.nan
    return m_dist(kind, c, ct, ws[2:])


@_jit
def psi(kind, g, x, mu, ws):
    k = g.shape[0]
    s = 0.0
    for j in range(k):
        d = m_dist(kind, x[j], g[j], ws)
        s += 0.5 * d * d
    if mu == 0.0:
        return s
    if k == 3:
        return s + mu * d2_value(kind, x[0], x[1], x[2], ws)
    return s + mu * d11_value(kind, x[0], x[1], x[2], x[3], ws)


# -- fused evaluation ------------------------------------------------------------
# The subgradient loop needs psi and its gradient at every iterate.  Both
# share the midpoints, the difference value and the logarithms towards the
# data, so they are computed together: ``dirn`` receives
# ``mu * grad d - log_x g`` and the return value is (psi, status).  psi stays
# valid when only the gradient failed, so that iterate still competes for
# the best one before the loop aborts.
@_jit
def _evaluate(kind, g, x, mu, dirn, ws):
    k, D = g.shape
    grad = ws[:k]
    rest = ws[k:]
    data = 0.0
    st_log = OK
    for j in range(k):
        st = m_log(kind, x[j], g[j], dirn[j], rest)
        if st == OK:
            data += 0.5 * _dot(dirn[j], dirn[j])
        else:
            st_log = st
            d = m_dist(kind, x[j], g[j], rest)
            data += 0.5 * d * d
        for i in range(D):
            dirn[j, i] = -dirn[j, i]
    if mu == 0.0:
        return data, st_log
    if k == 3:
        st, d = _grad_d2_value(kind, x[0], x[1], x[2], grad, rest)
    else:
        st, d = _grad_d11_value(kind, x[0], x[1], x[2], x[3], grad, rest)
    if st == OK:
        for j in range(k):
            for i in range(D):
                dirn[j, i] += mu * grad[j, i]
    return data + mu * d, max(st, st_log)


# SPD path: the square roots of each x_j are computed once per iterate and
# reused by the logarithms, the midpoints, the adjoints and the exponential
# step; the whitened eigenpairs behind each midpoint also feed its adjoint.
# Scratch ``Mx`` has SPD_MATS r x r slots (0 .. 2k-1 hold the roots) and ``Vx``
# SPD_VECS r-vectors.
SPD_MATS = 32
SPD_VECS = 8


@_jit
def _eig_pos(A, w, Q, a):
    jacobi_eigh_ws(A, w, Q, a)
    for k in range(w.shape[0]):
        if not (w[k] > 0.0):
            return NOT_SPD
    return OK


@_jit
def _c_roots(X, s, si, w, Q, a, f):
    st = _eig_pos(X, w, Q, a)
    if st != OK:
        return st
    for k in range(w.shape[0]):
        f[k] = math.sqrt(w[k])
    _spectral(Q, f, s)
    for k in range(w.shape[0]):
        f[k] = 1.0 / f[k]
    _spectral(Q, f, si)
    return OK


@_jit
def _c_whiten(si, Y, mu, Q, W, a, t):
    _congruence(si, Y, W, t)
    return _eig_pos(W, mu, Q, a)


@_jit
def _c_lift(s, Q, f, out, t1, t2):
    # out = s Q diag(f) Q^T s
    _spectral(Q, f, t1)
    _congruence(s, t1, out, t2)


@_jit
def _c_adjoint(s, si, mu, Q, v, out, Vw, T1, C, ell, q):
    r = mu.shape[0]
    for k in range(r):
        ell[k] = math.log(mu[k])
        q[k] = mu[k] ** -0.25
    _congruence(si, v, Vw, T1)
    for i in range(r):
        for j in range(r):
            acc = 0.0
            for k in range(r):
                acc += Q[k, i] * Vw[k, j]
            T1[i, j] = acc
    _mm(T1, Q, C)
    for i in range(r):
        for j in range(r):
            C[i, j] *= q[i] * q[j] * (0.5 / math.cosh(0.25 * abs(ell[i] - ell[j])))
    _mm(Q, C, T1)
    for i in range(r):
        for j in range(r):
            acc = 0.0
            for k in range(r):
                acc += T1[i, k] * Q[j, k]
            Vw[i, j] = acc
    _congruence(s, Vw, out, C)


@_jit
def _c_log_values(w, f):
    # f = log(w); returns sqrt(sum f^2)
    acc = 0.0
    for k in range(w.shape[0]):
        f[k] = math.log(w[k])
        acc += f[k] * f[k]
    return math.sqrt(acc)


@_jit
def _c_midpoint(s, si, Y, mu, Q, out, W, a, t1, t2, f):
    # whitened eigenpairs of Y at the base are kept in (mu, Q) for the adjoint
    st = _c_whiten(si, Y, mu, Q, W, a, t1)
    if st != OK:
        return st
    for k in range(mu.shape[0]):
        f[k] = math.sqrt(mu[k])
    _c_lift(s, Q, f, out, t1, t2)
    return OK


@_jit
def _c_add_adjoint(s, si, mu, Q, v, scale, dst, Mx, Vx):
    # dst += scale * adjoint(v)
    G = Mx[-1]
    _c_adjoint(s, si, mu, Q, v, G, Mx[-2], Mx[-3], Mx[-4], Vx[-1], Vx[-2])
    r = mu.shape[0]
    for i in range(r):
        for j in range(r):
            dst[i, j] += scale * G[i, j]


@_jit
def _spd_evaluate(g, x, mu, dirn, Mx, Vx):
    k, D = g.shape
    r = Mx.shape[1]
    A = Mx[8]
    Q = Mx[9]
    W = Mx[10]
    t1 = Mx[11]
    t2 = Mx[12]
    w = Vx[0]
    f = Vx[1]
    data = 0.0
    for j in range(k):
        st = _c_roots(x[j].reshape((r, r)), Mx[2 * j], Mx[2 * j + 1], w, Q, A, f)
        if st != OK:
            return np.nan, st
        if _equal(x[j], g[j]):
            dirn[j, :] = 0.0
            continue
        st = _c_whiten(Mx[2 * j + 1], g[j].reshape((r, r)), w, Q, W, A, t1)
        if st != OK:
            return np.nan, st
        d = _c_log_values(w, f)
        data += 0.5 * d * d
        L = dirn[j].reshape((r, r))
        _c_lift(Mx[2 * j], Q, f, L, t1, t2)
        for i in range(D):
            dirn[j, i] = -dirn[j, i]
    if mu == 0.0:
        return data, OK
    mu_a = Vx[2]
    Q_a = Mx[13]
    c = Mx[14]
    cs = Mx[15]
    cis = Mx[16]
    U = Mx[17]
    if k == 3:
        # c = mid(x0, x2), d = dist(c, x1)
        st = _c_midpoint(Mx[0], Mx[1], x[2].reshape((r, r)), mu_a, Q_a, c, W, A, t1, t2, f)
        if st != OK:
            return np.nan, st
        st = _c_roots(c, cs, cis, w, Q, A, f)
        if st != OK:
            return np.nan, st
        st = _c_whiten(cis, x[1].reshape((r, r)), w, Q, W, A, t1)
        if st != OK:
            return np.nan, st
        d = _c_log_values(w, f)
        val = data + mu * d
        if not (d > DEGENERATE_TOL):
            return val, OK
        _c_lift(cs, Q, f, U, t1, t2)
        scale = -1.0 / d
        # middle point: -log_{x1} c / d
        st = _c_whiten(Mx[3], c, w, Q, W, A, t1)
        if st != OK:
            return val, st
        _c_log_values(w, f)
        G = Mx[18]
        _c_lift(Mx[2], Q, f, G, t1, t2)
        dy = dirn[1].reshape((r, r))
        for i in range(r):
            for jj in range(r):
                dy[i, jj] += mu * scale * G[i, jj]
        # outer points: adjoints of the midpoint differential applied to u
        _c_add_adjoint(Mx[0], Mx[1], mu_a, Q_a, U, mu * scale, dirn[0].reshape((r, r)), Mx, Vx)
        st = _c_whiten(Mx[5], x[0].reshape((r, r)), w, Q, W, A, t1)
        if st != OK:
            return val, st
        _c_add_adjoint(Mx[4], Mx[5], w, Q, U, mu * scale, dirn[2].reshape((r, r)), Mx, Vx)
        return val, OK
    # d11: c = mid(x0, x2), ct = mid(x1, x3), d = dist(c, ct)
    mu_b = Vx[3]
    Q_b = Mx[19]
    ct = Mx[20]
    cts = Mx[21]
    ctis = Mx[22]
    Ut = Mx[23]
    st = _c_midpoint(Mx[0], Mx[1], x[2].reshape((r, r)), mu_a, Q_a, c, W, A, t1, t2, f)
    if st != OK:
        return np.nan, st
    st = _c_midpoint(Mx[2], Mx[3], x[3].reshape((r, r)), mu_b, Q_b, ct, W, A, t1, t2, f)
    if st != OK:
        return np.nan, st
    st = _c_roots(c, cs, cis, w, Q, A, f)
    if st != OK:
        return np.nan, st
    st = _c_whiten(cis, ct, w, Q, W, A, t1)
    if st != OK:
        return np.nan, st
    d = _c_log_values(w, f)
    val = data + mu * d
    if not (d > DEGENERATE_TOL):
        return val, OK
    _c_lift(cs, Q, f, U, t1, t2)
    st = _c_roots(ct, cts, ctis, w, Q, A, f)
    if st != OK:
        return val, st
    st = _c_whiten(ctis, c, w, Q, W, A, t1)
    if st != OK:
        return val, st
    _c_log_values(w, f)
    _c_lift(cts, Q, f, Ut, t1, t2)
    scale = -mu / d
    _c_add_adjoint(Mx[0], Mx[1], mu_a, Q_a, U, scale, dirn[0].reshape((r, r)), Mx, Vx)
    _c_add_adjoint(Mx[2], Mx[3], mu_b, Q_b, Ut, scale, dirn[1].reshape((r, r)), Mx, Vx)
    st = _c_whiten(Mx[5], x[0].reshape((r, r)), w, Q, W, A, t1)
    if st != OK:
        return val, st
    _c_add_adjoint(Mx[4], Mx[5], w, Q, U, scale, dirn[2].reshape((r, r)), Mx, Vx)
    st = _c_whiten(Mx[7], x[1].reshape((r, r)), w, Q, W, A, t1)
    if st != OK:
        return val, st
    _c_add_adjoint(Mx[6], Mx[7], w, Q, Ut, scale, dirn[3].reshape((r, r)), Mx, Vx)
    return val, OK


@_jit
def _spd_exp_cached(s, si, v, out, Mx, Vx):
    # exp at a point whose roots (s, si) are known
    r = s.shape[0]
    B = Mx[10]
    _congruence(si, v, B, Mx[11])
    w = Vx[0]
    Q = Mx[9]
    jacobi_eigh_ws(B, w, Q, Mx[8])
    f = Vx[1]
    for k in range(r):
        f[k] = math.exp(w[k])
    _c_lift(s, Q, f, out, Mx[11], Mx[12])
    return OK


@_jit
def _subgradient_prox(kind, g, mu, tau0, iters, stop_tol, best, x, xn, dirn, ws, Mx, Vx):
    """Subgradient descent for psi started at g; writes the best iterate.

    ``x``, ``xn`` and ``dirn`` are (k, D) scratch, ``Mx`` and ``Vx`` the SPD
    scratch.  Returns 0 when all iterations completed, 1 when a geometry
    error aborted the loop (``best`` then holds the best iterate so far).
    """
    k, D = g.shape
    r = Mx.shape[1]
    step = ws[0]
    rest = ws[1:]
    x[:, :] = g
    best[:, :] = g
    if kind == SPD:
        psi_best, st = _spd_evaluate(g, x, mu, dirn, Mx, Vx)
    else:
        psi_best, st = _evaluate(kind, g, x, mu, dirn, rest)
    if psi_best != psi_best:
        return 1
    for it in range(1, iters + 1):
        if st != OK:
            return 1
        tau = tau0 / it
        gnorm2 = 0.0
        for j in range(k):
            for i in range(D):
                step[i] = -tau * dirn[j, i]
            if stop_tol > 0.0:
                gnorm2 += m_inner(kind, x[j], step, step, rest)
            if _is_zero(step):
                xn[j, :] = x[j]
            elif kind == SPD:
                _spd_exp_cached(Mx[2 * j], Mx[2 * j + 1], step.reshape((r, r)),
                                xn[j].reshape((r, r)), Mx, Vx)
            else:
                st = m_exp(kind, x[j], step, xn[j], rest)
                if st != OK:
                    return 1
        x[:, :] = xn
        if kind == SPD:
            val, st = _spd_evaluate(g, x, mu, dirn, Mx, Vx)
        else:
            val, st = _evaluate(kind, g, x, mu, dirn, rest)
        if val != val:
            return 1
        if val < psi_best:
            psi_best = val
            best[:, :] = x
        if stop_tol > 0.0 and math.sqrt(gnorm2) <= stop_tol:
            break
    return 0


@_jit
def prox_batch(kind, G, mu, tau0, iters, stop_tol):
    """Approximate proxes of mu_b * d2 (k = 3) or mu_b * d11 (k = 4) for a batch.

    ``G`` has shape (B, k, D).  Returns the outputs and per-tuple abort flags.
    """
    B, k, D = G.shape
    out = np.empty_like(G)
    flags = np.zeros(B, dtype=np.int64)
    x = np.empty((k, D))
    xn = np.empty((k, D))
    dirn = np.empty((k, D))
    ws = workspace(D)
    r = _spd_size(D) if kind == SPD else 1
    Mx = np.empty((SPD_MATS, r, r))
    Vx = np.empty((SPD_VECS, r))
    for b in range(B):
        flags[b] = _subgradient_prox(kind, G[b], mu[b], tau0, iters, stop_tol, out[b],
                                     x, xn, dirn, ws, Mx, Vx)
    return out, flags


@_jit
def batch_psi(kind, G, X, mu):
    B = G.shape[0]
    out = np.empty(B)
    ws = workspace(G.shape[2])
    for b in range(B):
        out[b] = psi(kind, G[b], X[b], mu[b], ws)
    return out


@_jit
def batch_d2(kind, X, Y, Z):
    B = X.shape[0]
    out = np.empty(B)
    ws = workspace(X.shape[1])
    for b in range(B):
        out[b] = d2_value(kind, X[b], Y[b], Z[b], ws)
    return out


@_jit
def batch_d11(kind, W, X, Y, Z):
    B = X.shape[0]
    out = np.empty(B)
    ws = workspace(X.shape[1])
    for b in range(B):
        out[b] = d11_value(kind, W[b], X[b], Y[b], Z[b], ws)
    return out


@_jit
def batch_grad(kind, G):
    """Gradients of d2 / d11 for tuples G (B, k, D) with per-tuple status."""
    B, k, D = G.shape
    out = np.zeros((B, k, D))
    status = np.zeros(B, dtype=np.int64)
    ws = workspace(D)
    for b in range(B):
        if k == 3:
            status[b] = grad_d2(kind, G[b, 0], G[b, 1], G[b, 2], out[b], ws)
        else:
            status[b] = grad_d11(kind, G[b, 0], G[b, 1], G[b, 2], G[b, 3], out[b], ws)
    return out, status


@_jit
def batch_geometry(kind, X, Y, V):
    """dist, log, exp, midpoint and adjoint for rows of X, Y, V (test helper)."""
    B, D = X.shape
    dist = np.empty(B)
    lg = np.empty((B, D))
    ex = np.empty((B, D))
    mid = np.empty((B, D))
    adj = np.empty((B, D))
    status = np.zeros(B, dtype=np.int64)
    ws = workspace(D)
    for b in range(B):
        dist[b] = m_dist(kind, X[b], Y[b], ws)
        st = m_log(kind, X[b], Y[b], lg[b], ws)
        st = max(st, m_exp(kind, X[b], V[b], ex[b], ws))
        st = max(st, m_midpoint(kind, X[b], Y[b], mid[b], ws))
        st = max(st, m_adjoint(kind, X[b], Y[b], V[b], adj[b], ws))
        status[b] = st
    return dist, lg, ex, mid, adj, status
