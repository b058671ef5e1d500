"""Manifold interface and the flat / circle / product geometries.

Every manifold works on numpy arrays whose last axis holds the *ambient*
coordinates of a point (or tangent vector); all leading axes are batch axes
and broadcast.  Scalar results (distances, inner products) drop the last
axis.  Sphere and SPD geometries live in :mod:`manifold_tv.sphere` and
:mod:`manifold_tv.spd`.

Operations that need a unique minimizing geodesic (``log``, ``geodesic``,
``midpoint``, ``transport``) raise :class:`DomainError` when the inputs are
numerically on each other's cut locus.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import DomainError, ValidationError

#: Points closer than this to the cut locus are rejected.
CUT_LOCUS_TOL = 1e-8
#: Geodesic lengths below this count as zero when a direction is needed.
DEGENERATE_TOL = 1e-12


def _as_float(x):
    return np.asarray(x, dtype=float)


def _equal(x, y):
    """Mask of points that are bitwise identical (last axis reduced)."""
    return np.all(x == y, axis=-1)


def _first_index(mask):
    idx = np.argwhere(np.atleast_1d(mask))
    return tuple(int(i) for i in idx[0]) if len(idx) else None


def complete_basis(first, base=None):
    """Complete unit vectors to orthonormal bases by Gram-Schmidt.

    Parameters
    ----------
    first : ndarray, shape (..., D)
        Unit vectors, used as the first basis element.
    base : ndarray, shape (..., D), optional
        A unit vector orthogonal to ``first`` to be excluded from the span
        (the base point of a sphere).

    Returns
    -------
    ndarray, shape (..., k, D)
        ``first`` followed by completions seeded with the canonical axes in
        increasing order; ``k = D`` or ``D - 1`` when ``base`` is given.
    """
    first = _as_float(first)
    D = first.shape[-1]
    batch = first.shape[:-1]
    k = D if base is None else D - 1
    out = np.zeros(batch + (k, D))
    out[..., 0, :] = first
    count = np.ones(batch, dtype=int)
    for axis in range(D):
        if np.all(count == k):
            break
        cand = np.zeros(batch + (D,))
        cand[..., axis] = 1.0
        for _ in range(2):
            if base is not None:
                cand = cand - np.sum(cand * base, axis=-1, keepdims=True) * base
            cand = cand - np.einsum("...k,...kd->...d",
                                    np.einsum("...kd,...d->...k", out, cand), out)
        nrm = np.linalg.norm(cand, axis=-1)
        take = (count < k) & (nrm > 1e-3)
        if not np.any(take):
            continue
        unit = cand / np.where(take, nrm, 1.0)[..., None]
        slot = np.minimum(count, k - 1)
        onehot = (np.arange(k) == slot[..., None]) & take[..., None]
        out = np.where(onehot[..., None], unit[..., None, :], out)
        count = count + take
    return out


class Manifold:
    """Common interface of all geometries.

    Subclasses implement ``dist``, ``exp``, ``log``, ``inner``,
    ``transport``, ``tangent_basis``, ``check_point`` and
    ``adjoint_midpoint_differential``; the remaining operations have generic
    definitions in terms of those.
    """

    kind = "abstract"
    #: intrinsic dimension
    dim = 0
    #: number of reals per point in the flat ambient layout
    ambient_size = 0
    #: injectivity radius (inf for Hadamard manifolds)
    injectivity_radius = math.inf
    #: True for nonpositively curved, simply connected geometries
    hadamard = True

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return isinstance(other, Manifold) and self.descriptor() == other.descriptor()

    def __hash__(self):
        return hash(repr(self))

    def descriptor(self) -> dict:
        raise NotImplementedError

    # -- validation -----------------------------------------------------
    def check_shape(self, x, what="point"):
        x = _as_float(x)
        if x.ndim == 0 or x.shape[-1] != self.ambient_size:
            raise ValidationError(
                f"{self!r}: {what} must have trailing size {self.ambient_size}, "
                f"got shape {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise ValidationError(f"{self!r}: {what} has non-finite entries")
        return x

    def check_point(self, x, atol=1e-9):
        return self.check_shape(x)

    def check_tangent(self, x, v, atol=1e-9):
        return self.check_shape(v, "tangent vector")

    def is_point(self, x, atol=1e-9) -> bool:
        try:
            self.check_point(x, atol)
        except ValidationError:
            return False
        return True

    # -- geometry -------------------------------------------------------
    def dist(self, x, y):
        raise NotImplementedError

    def exp(self, x, v):
        raise NotImplementedError

    def log(self, x, y):
        raise NotImplementedError

    def inner(self, x, u, v):
        raise NotImplementedError

    def norm(self, x, v):
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def transport(self, x, y, v):
        raise NotImplementedError

    def geodesic(self, x, y, t):
        """Point at fraction ``t`` of the minimizing geodesic from x to y."""
        x, y = _as_float(x), _as_float(y)
        t = _as_float(t)
        out = self.exp(x, t[..., None] * self.log(x, y) if t.ndim else t * self.log(x, y))
        return np.where(_equal(x, y)[..., None], x, out)

    def midpoint(self, x, y):
        return self.geodesic(x, y, 0.5)

    def zero_tangent(self, x):
        return np.zeros_like(_as_float(x))

    def tangent_basis(self, x):
        """Orthonormal basis of the tangent space, shape (..., dim, ambient)."""
        raise NotImplementedError

    def adjoint_midpoint_differential(self, x, z, v):
        """Adjoint of the differential of ``x -> midpoint(x, z)`` applied to v.

        ``v`` is a tangent vector at ``midpoint(x, z)``; the result lives at x
        and equals ``sum_k w_k <v, Xi_k(T/2)> xi_k`` for the diagonalizing
        frame ``xi_k`` and Jacobi weights ``w_k``.  For ``x == z`` the flat
        limit (all weights 1/2) is used.
        """
        raise NotImplementedError

    def midpoint_weights(self, x, z):
        """Diagonalizing frame at x and Jacobi midpoint weights.

        Returns ``(frame, weights)`` with ``frame`` of shape
        (..., dim, ambient), ``frame[..., 0, :]`` the unit direction towards z
        (for rank-one curvature structure), and ``weights`` (..., dim) such
        that ``D_x c[frame_k] = weights_k * transport(x, c, frame_k)``.
        """
        raise NotImplementedError

    # -- sampling -------------------------------------------------------
    def random_point(self, rng, size=()):
        raise NotImplementedError

    def random_tangent(self, rng, x, scale=1.0):
        """Gaussian tangent vector with i.i.d. N(0, scale^2) frame coefficients."""
        x = _as_float(x)
        basis = self.tangent_basis(x)
        coef = rng.normal(scale=scale, size=x.shape[:-1] + (self.dim,))
        return np.einsum("...k,...kd->...d", coef, basis)

    # -- helpers --------------------------------------------------------
    def _raise_cut(self, mask, x, y):
        if np.any(mask):
            mask = np.asarray(mask)
            xi = np.broadcast_to(x, np.broadcast_shapes(x.shape, y.shape))
            yi = np.broadcast_to(y, xi.shape)
            idx = _first_index(mask) if mask.ndim else None
            pair = (xi[idx], yi[idx]) if idx is not None else (xi, yi)
            raise DomainError(
                f"{self!r}: points are on each other's cut locus "
                f"(x={np.array2string(pair[0], precision=6)}, "
                f"y={np.array2string(pair[1], precision=6)})",
                pairs=pair,
                index=idx,
            )


class Euclidean(Manifold):
    """Flat space R^m with the standard inner product."""

    kind = "euclidean"

    def __init__(self, m: int = 1):
        if int(m) < 1:
            raise ValidationError("Euclidean dimension must be positive")
        self.m = int(m)
        self.dim = self.m
        self.ambient_size = self.m

    def __repr__(self):
        return f"Euclidean({self.m})"

    def descriptor(self):
        return {"kind": "euclidean", "m": self.m}

    def dist(self, x, y):
        return np.linalg.norm(_as_float(y) - _as_float(x), axis=-1)

    def exp(self, x, v):
        return _as_float(x) + _as_float(v)

    def log(self, x, y):
        return _as_float(y) - _as_float(x)

    def geodesic(self, x, y, t):
        x, y = _as_float(x), _as_float(y)
        t = _as_float(t)
        t = t[..., None] if t.ndim else t
        return x + t * (y - x)

    def midpoint(self, x, y):
        return 0.5 * (_as_float(x) + _as_float(y))

    def inner(self, x, u, v):
        return np.sum(_as_float(u) * _as_float(v), axis=-1)

    def transport(self, x, y, v):
        return np.broadcast_to(_as_float(v), np.broadcast_shapes(
            np.shape(x), np.shape(y), np.shape(v))).copy()

    def tangent_basis(self, x):
        x = _as_float(x)
        return np.broadcast_to(np.eye(self.m), x.shape[:-1] + (self.m, self.m)).copy()

    def adjoint_midpoint_differential(self, x, z, v):
        return 0.5 * _as_float(v)

    def midpoint_weights(self, x, z):
        x, z = _as_float(x), _as_float(z)
        T = self.dist(x, z)
        if np.any(T <= DEGENERATE_TOL):
            raise DomainError("midpoint_weights: degenerate geodesic (x == z)")
        frame = complete_basis((z - x) / T[..., None])
        return frame, np.full(frame.shape[:-1], 0.5)

    def random_point(self, rng, size=()):
        size = (size,) if isinstance(size, int) else tuple(size)
        return rng.normal(size=size + (self.m,))


def wrap_angle(a):
    """Map angles to [-pi, pi); values already in range are returned untouched."""
    a = _as_float(a)
    inside = (a >= -math.pi) & (a < math.pi)
    return np.where(inside, a, np.mod(a + math.pi, 2 * math.pi) - math.pi)


class Circle(Manifold):
    """The circle S^1 stored as one angle in [-pi, pi)."""

    kind = "circle"
    dim = 1
    ambient_size = 1
    injectivity_radius = math.pi
    hadamard = False

    def __repr__(self):
        return "Circle()"

    def descriptor(self):
        return {"kind": "circle"}

    def check_point(self, x, atol=1e-9):
        x = self.check_shape(x)
        if np.any((x < -math.pi) | (x >= math.pi)):
            raise ValidationError("Circle: angles must lie in [-pi, pi)")
        return x

    def _diff(self, x, y):
        return wrap_angle(_as_float(y) - _as_float(x))

    def dist(self, x, y):
        return np.abs(self._diff(x, y))[..., 0]

    def exp(self, x, v):
        return wrap_angle(_as_float(x) + _as_float(v))

    def log(self, x, y):
        d = self._diff(x, y)
        self._raise_cut(np.abs(d[..., 0]) > math.pi - CUT_LOCUS_TOL, _as_float(x), _as_float(y))
        return d

    def geodesic(self, x, y, t):
        x = _as_float(x)
        t = _as_float(t)
        t = t[..., None] if t.ndim else t
        return wrap_angle(x + t * self.log(x, y))

    def inner(self, x, u, v):
        return np.sum(_as_float(u) * _as_float(v), axis=-1)

    def transport(self, x, y, v):
        self.log(x, y)
        return np.broadcast_to(_as_float(v), np.broadcast_shapes(
            np.shape(x), np.shape(y), np.shape(v))).copy()

    def tangent_basis(self, x):
        x = _as_float(x)
        return np.ones(x.shape[:-1] + (1, 1))

    def adjoint_midpoint_differential(self, x, z, v):
        self.log(x, z)
        return 0.5 * _as_float(v)

    def midpoint_weights(self, x, z):
        d = self.log(x, z)
        if np.any(np.abs(d) <= DEGENERATE_TOL):
            raise DomainError("midpoint_weights: degenerate geodesic (x == z)")
        return np.sign(d)[..., None, :], np.full(d.shape, 0.5)

    def random_point(self, rng, size=()):
        size = (size,) if isinstance(size, int) else tuple(size)
        return rng.uniform(-math.pi, math.pi, size=size + (1,))


class Product(Manifold):
    """Cartesian product with the unweighted l2 combination of factor metrics.

    Points are the concatenation of the factors' ambient coordinates.
    """

    kind = "product"

    def __init__(self, factors):
        factors = list(factors)
        if not factors:
            raise ValidationError("Product needs at least one factor")
        self.factors = factors
        self.dim = sum(f.dim for f in factors)
        self.ambient_size = sum(f.ambient_size for f in factors)
        self.injectivity_radius = min(f.injectivity_radius for f in factors)
        self.hadamard = all(f.hadamard for f in factors)
        offs = np.cumsum([0] + [f.ambient_size for f in factors])
        self._slices = [slice(int(a), int(b)) for a, b in zip(offs[:-1], offs[1:])]

    def __repr__(self):
        return "Product(" + ", ".join(repr(f) for f in self.factors) + ")"

    def descriptor(self):
        return {"kind": "product", "factors": [f.descriptor() for f in self.factors]}

    def split(self, x):
        x = _as_float(x)
        return [x[..., s] for s in self._slices]

    def _map(self, fn, *arrays):
        parts = [self.split(a) for a in arrays]
        return [fn(f, *(p[i] for p in parts)) for i, f in enumerate(self.factors)]

    def check_point(self, x, atol=1e-9):
        x = self.check_shape(x)
        for f, p in zip(self.factors, self.split(x)):
            f.check_point(p, atol)
        return x

    def check_tangent(self, x, v, atol=1e-9):
        v = self.check_shape(v, "tangent vector")
        for f, px, pv in zip(self.factors, self.split(x), self.split(v)):
            f.check_tangent(px, pv, atol)
        return v

    def dist(self, x, y):
        ds = self._map(lambda f, a, b: f.dist(a, b) ** 2, x, y)
        return np.sqrt(sum(ds))

    def exp(self, x, v):
        return np.concatenate(self._map(lambda f, a, b: f.exp(a, b), x, v), axis=-1)

    def log(self, x, y):
        return np.concatenate(self._map(lambda f, a, b: f.log(a, b), x, y), axis=-1)

    def geodesic(self, x, y, t):
        return np.concatenate(self._map(lambda f, a, b: f.geodesic(a, b, t), x, y), axis=-1)

    def midpoint(self, x, y):
        return np.concatenate(self._map(lambda f, a, b: f.midpoint(a, b), x, y), axis=-1)

    def inner(self, x, u, v):
        return sum(self._map(lambda f, a, b, c: f.inner(a, b, c), x, u, v))

    def transport(self, x, y, v):
        return np.concatenate(
            self._map(lambda f, a, b, c: f.transport(a, b, c), x, y, v), axis=-1)

    def tangent_basis(self, x):
        x = _as_float(x)
        out = np.zeros(x.shape[:-1] + (self.dim, self.ambient_size))
        row = 0
        for f, s, p in zip(self.factors, self._slices, self.split(x)):
            out[..., row:row + f.dim, s] = f.tangent_basis(p)
            row += f.dim
        return out

    def adjoint_midpoint_differential(self, x, z, v):
        return np.concatenate(self._map(
            lambda f, a, b, c: f.adjoint_midpoint_differential(a, b, c), x, z, v), axis=-1)

    def midpoint_weights(self, x, z):
        x = _as_float(x)
        frame = np.zeros(x.shape[:-1] + (self.dim, self.ambient_size))
        weights = []
        row = 0
        for f, s, a, b in zip(self.factors, self._slices, self.split(x), self.split(z)):
            fr, w = f.midpoint_weights(a, b)
            frame[..., row:row + f.dim, s] = fr
            weights.append(w)
            row += f.dim
        return frame, np.concatenate(weights, axis=-1)

    def random_point(self, rng, size=()):
        return np.concatenate([f.random_point(rng, size) for f in self.factors], axis=-1)


def manifold_from_descriptor(desc) -> Manifold:
    """Build a manifold from its JSON descriptor (see ``Manifold.descriptor``)."""
    from .spd import SPD
    from .sphere import Sphere

    if not isinstance(desc, dict) or "kind" not in desc:
        raise ValidationError(f"invalid manifold descriptor: {desc!r}")
    kind = desc["kind"]
    try:
        if kind == "euclidean":
            return Euclidean(int(desc["m"]))
        if kind == "circle":
            return Circle()
        if kind == "sphere":
            return Sphere(int(desc["n"]))
        if kind == "spd":
            return SPD(int(desc["r"]))
        if kind == "product":
            return Product([manifold_from_descriptor(d) for d in desc["factors"]])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"invalid manifold descriptor {desc!r}: {exc}") from exc
    raise ValidationError(f"unknown manifold kind {kind!r}")


def parse_manifold(text: str) -> Manifold:
    """Parse short names such as ``S2``, ``S1``, ``SPD3``, ``R3`` or ``S1xR2``."""
    from .spd import SPD
    from .sphere import Sphere

    parts = [p.strip() for p in text.replace("×", "x").split("x") if p.strip()]
    out = []
    for p in parts:
        u = p.upper()
        if u in ("S1", "CIRCLE"):
            out.append(Circle())
        elif u.startswith("SPD") or u.startswith("P"):
            out.append(SPD(int(u.lstrip("SPD") or 3)))
        elif u.startswith("S"):
            out.append(Sphere(int(u[1:])))
        elif u.startswith("R"):
            out.append(Euclidean(int(u[1:] or 1)))
        else:
            raise ValidationError(f"unknown manifold name {p!r}")
    if not out:
        raise ValidationError("empty manifold name")
    return out[0] if len(out) == 1 else Product(out)
