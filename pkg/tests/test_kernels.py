"""The compiled kernels must agree with the numpy reference geometry."""

import math

import numpy as np
import pytest

from manifold_tv import Circle, Euclidean, Sphere, SPD, d2, d11, objective_psi
from manifold_tv import _kernels as K
from manifold_tv.differences import adjoint_midpoint_differential, grad_d2, grad_d11
from manifold_tv.proximal import kernel_code

from conftest import GEOMETRIES, near_pair, spread_points

B = 25


@pytest.mark.parametrize("name", list(GEOMETRIES))
def test_geometry_matches_numpy(name, rng):
    M = GEOMETRIES[name]
    code = kernel_code(M)
    x, y = near_pair(M, rng, n=(B,), scale=1.0)
    v = M.random_tangent(rng, x)
    dist, lg, ex, mid, _, status = K.batch_geometry(code, x, y, v)
    assert np.all(status == K.OK)
    np.testing.assert_allclose(dist, M.dist(x, y), atol=1e-12)
    np.testing.assert_allclose(lg, M.log(x, y), atol=1e-10)
    np.testing.assert_allclose(ex, M.exp(x, v), atol=1e-10)
    np.testing.assert_allclose(mid, M.midpoint(x, y), atol=1e-10)
    c = M.midpoint(x, y)
    w = M.random_tangent(rng, c)
    adj = K.batch_geometry(code, x, y, w)[4]
    np.testing.assert_allclose(adj, adjoint_midpoint_differential(M, x, y, w), atol=1e-10)


@pytest.mark.parametrize("name", list(GEOMETRIES))
def test_values_and_gradients_match_numpy(name, rng):
    M = GEOMETRIES[name]
    code = kernel_code(M)
    p3 = spread_points(M, rng, 3, n=(B,))
    p4 = spread_points(M, rng, 4, n=(B,))
    G3, G4 = np.stack(p3, axis=1), np.stack(p4, axis=1)
    # kernels are compiled for C-contiguous rows, as the solver passes them
    np.testing.assert_allclose(K.batch_d2(code, *p3), d2(M, *p3), atol=1e-11)
    np.testing.assert_allclose(K.batch_d11(code, *p4), d11(M, *p4), atol=1e-11)
    g3, s3 = K.batch_grad(code, G3)
    g4, s4 = K.batch_grad(code, G4)
    assert np.all(s3 == K.OK) and np.all(s4 == K.OK)
    np.testing.assert_allclose(g3, grad_d2(M, G3[:, 0], G3[:, 1], G3[:, 2]).stack(), atol=1e-9)
    np.testing.assert_allclose(g4, np.stack(grad_d11(M, *(G4[:, j] for j in range(4))), axis=1),
                               atol=1e-9)
    X = np.stack(spread_points(M, rng, 3, n=(B,)), axis=1)
    mu = rng.uniform(0.1, 2.0, size=B)
    ref = objective_psi(M, mu, [G3[:, j] for j in range(3)], [X[:, j] for j in range(3)])
    np.testing.assert_allclose(K.batch_psi(code, G3, X, mu), ref, atol=1e-10)


def test_status_codes():
    S2 = Sphere(2)
    n = np.array([[0, 0, 1.0]])
    _, _, _, _, _, status = K.batch_geometry(K.SPHERE, n, -n, np.zeros((1, 3)))
    assert status[0] == K.CUT
    g, status = K.batch_grad(K.CIRCLE, np.array([[[0.0], [1.0], [-math.pi]]]))
    assert status[0] == K.CUT
    P2 = SPD(2)
    bad = P2.flat(np.diag([1.0, -1.0]))[None]
    good = P2.flat(np.eye(2))[None]
    assert K.batch_geometry(K.SPD, good, bad, np.zeros((1, 4)))[5][0] == K.NOT_SPD
    assert np.isnan(K.batch_d2(K.SPHERE, n, n, -n))[0]
    assert S2.dist(n, -n)[0] == pytest.approx(math.pi)


def test_kernel_codes():
    assert kernel_code(Euclidean(2)) == K.EUCLIDEAN
    assert kernel_code(Circle()) == K.CIRCLE
    assert kernel_code(Sphere(3)) == K.SPHERE
    assert kernel_code(SPD(3)) == K.SPD
