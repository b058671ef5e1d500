"""Synthetic test data, noise models and the mean error."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cppa import ManifoldImage
from .exceptions import ValidationError
from .spd import SPD, _sym
from .sphere import Sphere
from . import _eig

NOISE_MODELS = ("gaussian", "rician")
EIG_FLOOR = 1e-6


def gen_lemniscate(count: int = 512) -> ManifoldImage:
    """Lemniscate of Bernoulli wrapped onto S^2 around the north pole.

    The planar curve ``a sqrt(2) / (sin^2 t + 1) * (cos t, cos t sin t)``
    with ``a = pi / (2 sqrt 2)`` is placed in the tangent plane at
    p = (0, 0, 1) (axes e1, e2) and mapped through ``exp_p``.  With this
    ``a`` the two extremal points are antipodal on the equator.  Samples
    ``t_i = 2 pi i / (count - 1)``, so the first and last points coincide.
    """
    count = int(count)
    if count < 2:
        raise ValidationError("lemniscate needs at least 2 samples")
    a = math.pi / (2.0 * math.sqrt(2.0))
    t = 2.0 * math.pi * np.arange(count) / (count - 1)
    scale = a * math.sqrt(2.0) / (np.sin(t) ** 2 + 1.0)
    v = np.stack([scale * np.cos(t), scale * np.cos(t) * np.sin(t), np.zeros(count)], axis=-1)
    S = Sphere(2)
    p = np.array([0.0, 0.0, 1.0])
    pts = S.exp(np.broadcast_to(p, v.shape), v)
    # sin(2 pi) is not exactly zero; close the curve exactly
    pts[-1] = pts[0]
    return ManifoldImage(S, pts[:, None, :])


def _rot_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    z, o = np.zeros_like(theta), np.ones_like(theta)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1),
                     np.stack([z, z, o], -1)], -2)


def _rot_y(theta):
    c, s = np.cos(theta), np.sin(theta)
    z, o = np.zeros_like(theta), np.ones_like(theta)
    return np.stack([np.stack([c, z, -s], -1), np.stack([z, o, z], -1),
                     np.stack([s, z, c], -1)], -2)


def gen_s2_field(n: int = 64) -> ManifoldImage:
    """S^2-valued field ``G(t, s) = R_{t+s} S_{t-s} e3`` on an n x n grid.

    ``t`` runs over [0, 5 pi] down the rows, ``s`` over [0, 2 pi] along the
    columns; R rotates about the z axis and S about the y axis.
    """
    n = int(n)
    if n < 2:
        raise ValidationError("field size must be at least 2")
    t = np.linspace(0.0, 5.0 * math.pi, n)
    s = np.linspace(0.0, 2.0 * math.pi, n)
    T, Sg = np.meshgrid(t, s, indexing="ij")
    e3 = np.array([0.0, 0.0, 1.0])
    pts = (_rot_z(T + Sg) @ (_rot_y(T - Sg) @ e3)[..., None])[..., 0]
    pts = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    return ManifoldImage(Sphere(2), pts)


def _plane_rotation(i, j, theta):
    theta = np.asarray(theta, dtype=float)
    R = np.broadcast_to(np.eye(3), theta.shape + (3, 3)).copy()
    c, s = np.cos(theta), np.sin(theta)
    R[..., i, i] = c
    R[..., j, j] = c
    R[..., i, j] = -s
    R[..., j, i] = s
    return R


def gen_spd_image(n: int = 25) -> ManifoldImage:
    """Artificial P(3)-valued image with jumps along both center lines and the diagonal.

    ``G(s, t) = A diag(1 + [s+t > 1], 1 + s + t + 1.5 [s > 1/2],
    4 - s - t + 1.5 [t > 1/2]) A^T`` with
    ``A = R_23(pi s) R_12(|2 pi s - pi|) R_12(|pi (t - s - floor(t - s)) - pi|)``,
    where ``R_ij`` rotates in the (x_i, x_j) plane.  ``s`` runs along the
    columns and ``t`` down the rows, both over [0, 1].
    """
    n = int(n)
    if n < 2:
        raise ValidationError("image size must be at least 2")
    grid = np.linspace(0.0, 1.0, n)
    T, Sg = np.meshgrid(grid, grid, indexing="ij")
    d = np.stack([1.0 + (Sg + T > 1.0),
                  1.0 + Sg + T + 1.5 * (Sg > 0.5),
                  4.0 - Sg - T + 1.5 * (T > 0.5)], axis=-1)
    frac = T - Sg - np.floor(T - Sg)
    A = (_plane_rotation(1, 2, math.pi * Sg)
         @ _plane_rotation(0, 1, np.abs(2 * math.pi * Sg - math.pi))
         @ _plane_rotation(0, 1, np.abs(math.pi * frac - math.pi)))
    G = _sym((A * d[..., None, :]) @ np.swapaxes(A, -1, -2))
    return ManifoldImage(SPD(3), G.reshape(n, n, 9))


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model: ``gaussian`` tangent noise or ``rician`` entrywise SPD noise."""

    model: str
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.model not in NOISE_MODELS:
            raise ValidationError(f"unknown noise model {self.model!r}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValidationError("sigma must be finite and nonnegative")


def add_noise(image: ManifoldImage, spec: NoiseSpec) -> ManifoldImage:
    """Corrupt every pixel of ``image`` according to ``spec``.

    ``gaussian``: i.i.d. N(0, sigma^2) coefficients in an orthonormal basis
    of the tangent space, followed by the exponential map.

    ``rician`` (SPD only): each entry a of the upper triangle becomes
    ``sign(a) * |(a + n1, n2)|`` with n1, n2 ~ N(0, sigma^2), which is
    Rician distributed in magnitude.  The matrix is mirrored to stay
    symmetric and its eigenvalues are clamped at 1e-6.
    """
    M = image.manifold
    rng = np.random.default_rng(spec.seed)
    X = image.data
    if spec.model == "gaussian":
        if spec.sigma == 0:
            return image.copy()
        v = M.random_tangent(rng, X, scale=spec.sigma)
        return ManifoldImage(M, M.exp(X, v))
    if not isinstance(M, SPD):
        raise ValidationError("rician noise needs an SPD-valued image")
    if spec.sigma == 0:
        return image.copy()
    r = M.r
    A = M.mat(X)
    iu = np.triu_indices(r)
    a = A[..., iu[0], iu[1]]
    n1 = rng.normal(scale=spec.sigma, size=a.shape)
    n2 = rng.normal(scale=spec.sigma, size=a.shape)
    mag = np.hypot(a + n1, n2)
    vals = np.where(a < 0, -mag, mag)
    B = np.zeros_like(A)
    B[..., iu[0], iu[1]] = vals
    B[..., iu[1], iu[0]] = vals
    w, V = _eig.eigh(B, canonical=False)
    w = np.maximum(w, EIG_FLOOR)
    out = _sym((V * w[..., None, :]) @ np.swapaxes(V, -1, -2))
    return ManifoldImage(M, M.flat(out))


def mean_error(x: ManifoldImage, y: ManifoldImage) -> float:
    """Mean geodesic distance between corresponding pixels."""
    if x.manifold != y.manifold or x.data.shape != y.data.shape:
        raise ValidationError("mean_error needs images of equal shape and manifold")
    return float(np.mean(x.manifold.dist(x.data, y.data)))


def geodesic_anisotropy(M: SPD, X):
    """Geodesic anisotropy ``sqrt(sum (log l_i - mean log l)^2)`` of SPD pixels."""
    w, _ = _eig.eigh(M.mat(X), canonical=False)
    ell = np.log(w)
    return np.sqrt(np.sum((ell - ell.mean(axis=-1, keepdims=True)) ** 2, axis=-1))
