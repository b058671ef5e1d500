"""First- and second-order TV functional and the inexact cyclic proximal point solver.

For an N x M image u (M = 1 for signals) with data f the functional is

    E(u) = 1/2 sum d(f_ij, u_ij)^2
           + alpha1 sum d(u_ij, u_i+1,j) + alpha2 sum d(u_ij, u_i,j+1)
           + beta1 sum d2(u_i-1,j, u_ij, u_i+1,j)
           + beta2 sum d2(u_i,j-1, u_ij, u_i,j+1)
           + beta3 sum d11(2x2 blocks).

Index i runs down the rows (vertical direction, axis 0), j along the columns.
The solver splits E into sub-functionals whose atoms touch disjoint pixels
and applies their proximal maps cyclically with step ``lambda0 / k``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .differences import d2 as _d2, d11 as _d11
from .exceptions import DomainError, ValidationError
from .manifolds import Manifold, _as_float
from .proximal import ProxSchedule, kernel_code, prox_data, prox_dist_pair, prox_tuples


@dataclass
class ManifoldImage:
    """An N x M grid of points on ``manifold``; ``data`` has shape (N, M, ambient)."""

    manifold: Manifold
    data: np.ndarray

    def __post_init__(self):
        self.data = _as_float(self.data)
        if self.data.ndim == 2:
            self.data = self.data[:, None, :]
        if self.data.ndim != 3 or self.data.shape[-1] != self.manifold.ambient_size:
            raise ValidationError(
                f"image data for {self.manifold!r} must have shape (N, M, "
                f"{self.manifold.ambient_size}), got {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValidationError("image must have at least one pixel")

    @property
    def shape(self):
        return self.data.shape[:2]

    def validate(self, atol=1e-9):
        self.manifold.check_point(self.data, atol)
        return self

    def copy(self):
        return ManifoldImage(self.manifold, self.data.copy())

    def with_data(self, data):
        return ManifoldImage(self.manifold, data)


@dataclass(frozen=True)
class FunctionalParams:
    """Regularization weights (alpha1, alpha2) and (beta1, beta2, beta3)."""

    alpha: tuple = (0.0, 0.0)
    beta: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.alpha))
        b = tuple(float(v) for v in np.atleast_1d(self.beta))
        if len(a) == 1:
            a = a * 2
        if len(b) == 1:
            b = b * 3
        if len(a) != 2 or len(b) != 3:
            raise ValidationError("alpha needs 1 or 2 values, beta 1 or 3 values")
        if not all(v >= 0 and math.isfinite(v) for v in a + b):
            raise ValidationError("regularization weights must be finite and nonnegative")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    def weight(self, key: str) -> float:
        if key == "data":
            return 1.0
        table = {"alpha1": self.alpha[0], "alpha2": self.alpha[1],
                 "beta1": self.beta[0], "beta2": self.beta[1], "beta3": self.beta[2]}
        return table[key]


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the cyclic proximal point run.

    ``cycles=None`` picks 1000 for signals and 400 for images.  ``seed`` is
    recorded for provenance; the solver itself draws no random numbers.
    """

    lambda0: float = math.pi / 2
    cycles: int | None = None
    prox_schedule: ProxSchedule = field(default_factory=ProxSchedule)
    seed: int = 0

    def __post_init__(self):
        if not (self.lambda0 > 0 and math.isfinite(self.lambda0)):
            raise ValidationError("lambda0 must be positive")
        if self.cycles is not None and int(self.cycles) < 1:
            raise ValidationError("cycles must be a positive integer")

    def resolved_cycles(self, M: int) -> int:
        if self.cycles is not None:
            return int(self.cycles)
        return 1000 if M == 1 else 400


@dataclass(frozen=True)
class SplitGroup:
    """One sub-functional: an atom type applied to index-disjoint pixel tuples.

    ``tuples`` holds flat pixel indices ``i * M + j``, one row per tuple.
    """

    name: str
    atom: str          # data | pair | d2 | d11
    weight_key: str    # data | alpha1 | alpha2 | beta1 | beta2 | beta3
    offset: tuple
    tuples: np.ndarray


@dataclass(frozen=True)
class SplitPlan:
    N: int
    M: int
    groups: tuple

    def __len__(self):
        return len(self.groups)

    def coords(self, flat_index):
        return divmod(int(flat_index), self.M)


def _pairs(N, M, axis, nu):
    i, j = np.meshgrid(np.arange(N), np.arange(M), indexing="ij")
    if axis == 0:
        sel = (i % 2 == nu) & (i + 1 < N)
        a = (i * M + j)[sel]
        return np.stack([a, a + M], axis=1)
    sel = (j % 2 == nu) & (j + 1 < M)
    a = (i * M + j)[sel]
    return np.stack([a, a + 1], axis=1)


def _triples(N, M, axis, nu):
    i, j = np.meshgrid(np.arange(N), np.arange(M), indexing="ij")
    step = M if axis == 0 else 1
    pos = i if axis == 0 else j
    size = N if axis == 0 else M
    sel = (pos % 3 == nu) & (pos + 2 < size)
    a = (i * M + j)[sel]
    return np.stack([a, a + step, a + 2 * step], axis=1)


def _quads(N, M, nu3, nu4):
    i, j = np.meshgrid(np.arange(N), np.arange(M), indexing="ij")
    sel = (i % 2 == nu3) & (j % 2 == nu4) & (i + 1 < N) & (j + 1 < M)
    a = (i * M + j)[sel]
    # diagonal pairs (w, y) and (x, z) make d11 a mixed difference
    return np.stack([a, a + M, a + M + 1, a + 1], axis=1)


def build_split(N: int, M: int) -> SplitPlan:
    """Splitting of the functional into 15 (images) or 6 (signals) sub-functionals.

    Order: data term; vertical then horizontal first differences (even/odd
    offset); vertical then horizontal second differences (offset mod 3);
    mixed differences (row offset + 2 * column offset).  Within each group
    no pixel appears twice.
    """
    N, M = int(N), int(M)
    if N < 1 or M < 1:
        raise ValidationError("image dimensions must be positive")
    groups = [SplitGroup("data", "data", "data", (), np.arange(N * M).reshape(-1, 1))]
    axes = [(0, "vertical", "1")] + ([(1, "horizontal", "2")] if M > 1 else [])
    for axis, label, idx in axes:
        for nu in range(2):
            groups.append(SplitGroup(f"tv1-{label}-{nu}", "pair", "alpha" + idx, (nu,),
                                     _pairs(N, M, axis, nu)))
    for axis, label, idx in axes:
        for nu in range(3):
            groups.append(SplitGroup(f"tv2-{label}-{nu}", "d2", "beta" + idx, (nu,),
                                     _triples(N, M, axis, nu)))
    if M > 1:
        for nu4 in range(2):
            for nu3 in range(2):
                groups.append(SplitGroup(f"tv2-mixed-{nu3}{nu4}", "d11", "beta3",
                                         (nu3, nu4), _quads(N, M, nu3, nu4)))
    for g in groups:
        flat = g.tuples.ravel()
        assert len(np.unique(flat)) == len(flat), f"group {g.name} is not disjoint"
    return SplitPlan(N, M, tuple(groups))


def _check_pair(u: ManifoldImage, f: ManifoldImage):
    if u.manifold != f.manifold:
        raise ValidationError(f"manifold mismatch: {u.manifold!r} vs {f.manifold!r}")
    if u.data.shape != f.data.shape:
        raise ValidationError(f"shape mismatch: {u.data.shape} vs {f.data.shape}")


def _sum_d2(M, X, Y, Z):
    code = kernel_code(M)
    if X.shape[0] == 0:
        return 0.0
    if code is not None:
        vals = _kernels.batch_d2(code, *(np.ascontiguousarray(a) for a in (X, Y, Z)))
        if np.any(np.isnan(vals)):
            raise DomainError("second difference evaluated on the cut locus")
        return float(np.sum(vals))
    return float(np.sum(_d2(M, X, Y, Z)))


def _sum_d11(M, W, X, Y, Z):
    code = kernel_code(M)
    if X.shape[0] == 0:
        return 0.0
    if code is not None:
        vals = _kernels.batch_d11(code, *(np.ascontiguousarray(a) for a in (W, X, Y, Z)))
        if np.any(np.isnan(vals)):
            raise DomainError("mixed difference evaluated on the cut locus")
        return float(np.sum(vals))
    return float(np.sum(_d11(M, W, X, Y, Z)))


def functional_value(Mf: Manifold, u: ManifoldImage, f: ManifoldImage,
                     p: FunctionalParams) -> float:
    """Value of the first- plus second-order TV functional at u."""
    _check_pair(u, f)
    U = u.data
    N, M = u.shape
    D = U.shape[-1]
    val = 0.5 * float(np.sum(Mf.dist(U, f.data) ** 2))
    a1, a2 = p.alpha
    b1, b2, b3 = p.beta
    if a1 and N > 1:
        val += a1 * float(np.sum(Mf.dist(U[:-1], U[1:])))
    if b1 and N > 2:
        val += b1 * _sum_d2(Mf, U[:-2].reshape(-1, D), U[1:-1].reshape(-1, D),
                            U[2:].reshape(-1, D))
    if M > 1:
        if a2:
            val += a2 * float(np.sum(Mf.dist(U[:, :-1], U[:, 1:])))
        if b2 and M > 2:
            val += b2 * _sum_d2(Mf, U[:, :-2].reshape(-1, D), U[:, 1:-1].reshape(-1, D),
                                U[:, 2:].reshape(-1, D))
        if b3 and N > 1:
            val += b3 * _sum_d11(Mf, U[:-1, :-1].reshape(-1, D), U[1:, :-1].reshape(-1, D),
                                 U[1:, 1:].reshape(-1, D), U[:-1, 1:].reshape(-1, D))
    return val


@dataclass
class Diagnostics:
    """Per-run record of the solver.

    Attributes
    ----------
    functional : list of float
        Functional value after every full cycle.
    elapsed : list of float
        Wall-clock seconds since the start, after every cycle.
    lambdas : list of float
        Proximal parameter of every cycle.
    prox_applications : int
        Sub-functional proximal maps applied to the whole image (groups with
        zero weight count as identity maps).
    inner_aborts : int
        Subgradient loops cut short by a geometry error.
    inner_iterations : int
        Inner iteration budget per subgradient prox.
    """

    initial_functional: float = float("nan")
    functional: list = field(default_factory=list)
    elapsed: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    prox_applications: int = 0
    inner_aborts: int = 0
    inner_iterations: int = 0
    groups: int = 0
    seed: int = 0

    def to_csv(self) -> str:
        rows = ["cycle,functional,elapsed"]
        rows += [f"{k + 1},{e!r},{t:.6f}" for k, (e, t) in
                 enumerate(zip(self.functional, self.elapsed))]
        return "\n".join(rows) + "\n"


def _domain_context(err, plan, group, tuples, cycle):
    idx = err.index
    pixels = None
    if idx is not None and len(idx) >= 1 and idx[0] < len(tuples):
        pixels = [plan.coords(p) for p in tuples[idx[0]]]
    where = " ".join(f"({i},{j})" for i, j in pixels) if pixels else "unknown"
    out = DomainError(f"{err} in group {group.name} at cycle {cycle}, pixels {where}",
                      pairs=err.pairs, index=pixels, cycle=cycle)
    return out


def cppa_run(Mf: Manifold, f: ManifoldImage, p: FunctionalParams, cfg: SolverConfig | None = None,
             callback: Callable | None = None, record_functional: bool = True):
    """Minimize the functional by the inexact cyclic proximal point algorithm.

    Parameters
    ----------
    Mf : Manifold
    f : ManifoldImage
        Data; also the starting point.
    p : FunctionalParams
    cfg : SolverConfig, optional
    callback : callable, optional
        Called as ``callback(cycle, functional, elapsed)`` after every cycle.
    record_functional : bool
        Evaluate the functional after every cycle (NaN is recorded otherwise).

    Returns
    -------
    (ManifoldImage, Diagnostics)
    """
    cfg = cfg or SolverConfig()
    if f.manifold != Mf:
        raise ValidationError(f"image lives on {f.manifold!r}, solver got {Mf!r}")
    N, M = f.shape
    D = Mf.ambient_size
    plan = build_split(N, M)
    F = f.data.reshape(-1, D)
    u = F.copy()
    sched = cfg.prox_schedule
    cycles = cfg.resolved_cycles(M)
    diag = Diagnostics(inner_iterations=int(sched.max_inner_iters), groups=len(plan),
                       seed=int(cfg.seed))
    if record_functional:
        diag.initial_functional = functional_value(Mf, f, f, p)
    start = time.perf_counter()
    for k in range(1, cycles + 1):
        lam = cfg.lambda0 / k
        for g in plan.groups:
            diag.prox_applications += 1
            w = p.weight(g.weight_key)
            if g.atom != "data" and (w == 0.0 or len(g.tuples) == 0):
                continue
            try:
                if g.atom == "data":
                    u = prox_data(Mf, lam, F, u)
                elif g.atom == "pair":
                    a, b = g.tuples[:, 0], g.tuples[:, 1]
                    u[a], u[b] = prox_dist_pair(Mf, lam * w, u[a], u[b])
                else:
                    out, flags = prox_tuples(Mf, lam * w, u[g.tuples], sched)
                    u[g.tuples] = out
                    diag.inner_aborts += int(np.sum(flags))
            except DomainError as err:
                raise _domain_context(err, plan, g, g.tuples, k) from err
        value = float("nan")
        if record_functional:
            value = functional_value(Mf, ManifoldImage(Mf, u.reshape(f.data.shape)), f, p)
        elapsed = time.perf_counter() - start
        diag.functional.append(value)
        diag.elapsed.append(elapsed)
        diag.lambdas.append(lam)
        if callback is not None:
            callback(k, value, elapsed)
    return ManifoldImage(Mf, u.reshape(f.data.shape)), diag


@dataclass
class GridSearchResult:
    alpha: float
    beta: float
    error: float
    table: list

    def __iter__(self):
        return iter((self.alpha, self.beta))


def grid_search(Mf: Manifold, f_noisy: ManifoldImage, f_clean: ManifoldImage, alphas, betas,
                cfg: SolverConfig | None = None) -> GridSearchResult:
    """Pick (alpha, beta) minimizing the mean error to ``f_clean``.

    Each grid value is used for all directions: ``alpha1 = alpha2 = alpha``
    and ``beta1 = beta2 = beta3 = beta``.  Ties go to the first pair in
    row-major (alpha, beta) order.
    """
    from .datagen import mean_error

    alphas, betas = list(alphas), list(betas)
    if not alphas or not betas:
        raise ValidationError("grids must be non-empty")
    _check_pair(f_noisy, f_clean)
    table = []
    best = None
    for a in alphas:
        for b in betas:
            out, _ = cppa_run(Mf, f_noisy, FunctionalParams(a, b), cfg, record_functional=False)
            err = mean_error(out, f_clean)
            table.append((float(a), float(b), err))
            if best is None or err < best[2]:
                best = table[-1]
    return GridSearchResult(best[0], best[1], best[2], table)
