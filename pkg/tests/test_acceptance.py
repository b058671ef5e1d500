"""Acceptance criteria, each at its stated tolerance.

Every test appends one ``criterion N [PASS|FAIL] ...`` line that is echoed
in the pytest terminal summary, then asserts.  Criteria 1-4 are full
reproduction runs and take most of the suite's wall time.
"""

import math

import numpy as np
import pytest

from manifold_tv import (
    SPD, Euclidean, FunctionalParams, ManifoldImage, NoiseSpec, SolverConfig, add_noise,
    cppa_run, d2, d11, gen_lemniscate, gen_s2_field, gen_spd_image, grad_d2, grad_d11,
    mean_error, prox_d2, prox_d11, prox_data, prox_dist_pair,
)

import conftest
from conftest import GEOMETRIES, spread_points
from oracles import grid_argmin, psi_d2, psi_d11

LEMNISCATE_SEEDS = range(1, 11)
FIELD_SEEDS = range(1, 6)
LEMNISCATE = {"tv1": ((0.21, 0.0), 4.08e-2), "tv2": ((0.0, 10.0), 3.66e-2),
              "tv12": ((0.16, 12.4), 3.27e-2)}
S2_FIELD = {"tv1": ((3.5e-2, 0.0), 0.1879), "tv2": ((0.0, 8.6), 0.1394)}
SPD_IMAGE = {"tv1": (0.1, 0.0), "tv12": (0.035, 0.02)}


def report(number, title, ok, detail):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def denoise(clean, noise, params):
    noisy = add_noise(clean, noise)
    out, diag = cppa_run(clean.manifold, noisy, FunctionalParams(*params), SolverConfig(),
                         record_functional=False)
    return mean_error(out, clean), mean_error(noisy, clean), diag


# -- 1 and 2: lemniscate -------------------------------------------------------
@pytest.fixture(scope="session")
def lemniscate_errors():
    clean = gen_lemniscate(512)
    errs = {k: [] for k in LEMNISCATE}
    for seed in LEMNISCATE_SEEDS:
        noise = NoiseSpec("gaussian", math.pi / 30, seed)
        for key, (params, _) in LEMNISCATE.items():
            errs[key].append(denoise(clean, noise, params)[0])
    return {k: np.array(v) for k, v in errs.items()}


@pytest.mark.slow
def test_criterion_1_lemniscate_reproduction(lemniscate_errors):
    parts, ok = [], True
    for key, (_, ref) in LEMNISCATE.items():
        mean = lemniscate_errors[key].mean()
        good = abs(mean - ref) <= 0.2 * ref
        ok &= good
        parts.append(f"{key} mean E={mean:.4g} vs {ref:.4g} ({mean / ref - 1:+.1%})")
    report(1, "lemniscate mean E within 20% of reference values", ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_2_lemniscate_ordering(lemniscate_errors):
    e = lemniscate_errors
    hits = int(np.sum((e["tv12"] < e["tv2"]) & (e["tv2"] < e["tv1"])))
    report(2, "E(combined) < E(TV2) < E(TV1) on >= 8 of 10 seeds", hits >= 8,
           f"ordering holds on {hits}/10 seeds")


# -- 3: S2 vector field ----------------------------------------------------------------
@pytest.mark.slow
def test_criterion_3_s2_field():
    clean = gen_s2_field(64)
    errs = {k: [] for k in S2_FIELD}
    noisy = []
    for seed in FIELD_SEEDS:
        noise = NoiseSpec("gaussian", 4 * math.pi / 45, seed)
        for key, (params, _) in S2_FIELD.items():
            e, e0, _ = denoise(clean, noise, params)
            errs[key].append(e)
        noisy.append(e0)
    errs = {k: np.array(v) for k, v in errs.items()}
    parts, ok = [f"noisy mean E={np.mean(noisy):.4g}"], True
    for key, (_, ref) in S2_FIELD.items():
        mean = errs[key].mean()
        good = abs(mean - ref) <= 0.2 * ref
        ok &= good
        parts.append(f"{key} mean E={mean:.4g} vs {ref:.4g} ({mean / ref - 1:+.1%})")
    wins = int(np.sum(errs["tv2"] < errs["tv1"]))
    ok &= wins == len(FIELD_SEEDS)
    parts.append(f"TV2 beats TV1 on {wins}/{len(FIELD_SEEDS)} seeds")
    report(3, "S2 field within 20% and TV2 < TV1 on every seed", ok, "; ".join(parts))


# -- 4: SPD image ------------------------------------------------------------------------
@pytest.mark.slow
def test_criterion_4_spd_image():
    clean = gen_spd_image(25)
    tv1, tv12, noisy = [], [], []
    for seed in FIELD_SEEDS:
        noise = NoiseSpec("rician", 0.03, seed)
        e1, e0, _ = denoise(clean, noise, SPD_IMAGE["tv1"])
        e12, _, _ = denoise(clean, noise, SPD_IMAGE["tv12"])
        tv1.append(e1)
        tv12.append(e12)
        noisy.append(e0)
    tv1, tv12, noisy = map(np.array, (tv1, tv12, noisy))
    wins = int(np.sum(tv12 <= tv1))
    reduce1 = 1 - tv1.mean() / noisy.mean()
    reduce12 = 1 - tv12.mean() / noisy.mean()
    ok = wins >= 4 and reduce1 >= 0.2 and reduce12 >= 0.2
    report(4, "SPD combined <= TV1 on >= 4/5 seeds, both cut E by >= 20%", ok,
           f"combined <= TV1 on {wins}/5; noisy E={noisy.mean():.4g}, "
           f"TV1 E={tv1.mean():.4g} ({reduce1:+.1%} reduction), "
           f"combined E={tv12.mean():.4g} ({reduce12:+.1%} reduction)")


# -- 5: gradients ---------------------------------------------------------------------------
def _directional_errors(M, fn, grads, pts, rng, h=1e-6):
    n = pts[0].shape[0]
    etas = [M.random_tangent(rng, p) for p in pts]

    def pairing(etas):
        return sum(M.inner(p, g, e) for p, g, e in zip(pts, grads, etas))

    gnorm = np.sqrt(sum(M.inner(p, g, g) for p, g in zip(pts, grads)))
    for _ in range(50):
        enorm = np.sqrt(sum(M.inner(p, e, e) for p, e in zip(pts, etas)))
        weak = np.abs(pairing(etas)) <= 0.05 * gnorm * enorm
        if not weak.any():
            break
        fresh = [M.random_tangent(rng, p) for p in pts]
        etas = [np.where(weak[:, None], f, e) for f, e in zip(fresh, etas)]
    analytic = pairing(etas)
    plus = fn(*[M.exp(p, h * e) for p, e in zip(pts, etas)])
    minus = fn(*[M.exp(p, -h * e) for p, e in zip(pts, etas)])
    assert n == len(analytic)
    return np.abs((plus - minus) / (2 * h) - analytic) / np.abs(analytic)


def test_criterion_5_gradient_suite():
    rng = np.random.default_rng(5)
    worst, ok = [], True
    for name, M in GEOMETRIES.items():
        pts3 = spread_points(M, rng, 3, n=(200,), scale=0.5)
        pts4 = spread_points(M, rng, 4, n=(200,), scale=0.5)
        g3 = grad_d2(M, *pts3)
        g4 = grad_d11(M, *pts4)
        e3 = _directional_errors(M, lambda *a: d2(M, *a), [g3.gx, g3.gy, g3.gz], pts3, rng)
        e4 = _directional_errors(M, lambda *a: d11(M, *a), list(g4), pts4, rng)
        err = max(e3.max(), e4.max())
        ok &= err < 1e-4
        worst.append(f"{name} {err:.1e}")
    report(5, "d2/d11 gradients vs central differences, 200 tuples each, rel < 1e-4", ok,
           "max rel error " + ", ".join(worst))


# -- 6: Jacobi weights ---------------------------------------------------------------------
def test_criterion_6_jacobi_weights():
    rng = np.random.default_rng(6)
    worst, ok = [], True
    h = 1e-6
    for name, M in GEOMETRIES.items():
        err = 0.0
        for _ in range(100):
            x, z = spread_points(M, rng, 2, scale=0.7)
            frame, w = M.midpoint_weights(x, z)
            V = getattr(frame, "vectors", frame)
            c = M.midpoint(x, z)
            for k in range(M.dim):
                dc = (M.midpoint(M.exp(x, h * V[k]), z) - M.midpoint(M.exp(x, -h * V[k]), z))
                expected = w[k] * M.transport(x, c, V[k])
                err = max(err, float(M.norm(c, dc / (2 * h) - expected) / M.norm(c, expected)))
            if isinstance(M, Euclidean):
                ok &= bool(np.all(w == 0.5))
        ok &= err < 1e-5
        worst.append(f"{name} {err:.1e}")
    report(6, "midpoint Jacobian vs Jacobi weights, 100 pairs each, rel < 1e-5", ok,
           "max rel error " + ", ".join(worst) + "; Euclidean weights all 1/2")


# -- 7: proximal oracles --------------------------------------------------------------------
def test_criterion_7_prox_oracles():
    E1 = Euclidean(1)
    arg_err, obj_err = 0.0, 0.0

    for x, f, lam in [(0.0, 4.0, 1.0), (1.5, -2.0, 0.3), (-0.7, 0.2, 4.0)]:
        def fd(y):
            return (y - x) ** 2 / (2 * lam) + 0.5 * (y - f) ** 2
        arg, val = grid_argmin(fd, [x], levels=((6.0, 1e-3), (0.01, 1e-5)))
        out = prox_data(E1, lam, [f], [x])[0]
        arg_err = max(arg_err, abs(out - arg[0]))
        obj_err = max(obj_err, fd(out) - val)

    for x1, x2, mu in [(0.0, 4.0, 1.0), (0.0, 4.0, 5.0), (-1.3, 0.7, 0.4)]:
        def fp(a, b):
            return 0.5 * (a - x1) ** 2 + 0.5 * (b - x2) ** 2 + mu * np.abs(a - b)
        arg, val = grid_argmin(fp, [x1, x2], levels=((3.0, 0.01), (0.05, 5e-4)))
        a, b = prox_dist_pair(E1, mu, [x1], [x2])
        arg_err = max(arg_err, np.abs(np.array([a[0], b[0]]) - arg).max())
        obj_err = max(obj_err, fp(a[0], b[0]) - val)

    for g, mu in [((0.0, 1.0, 0.0), 0.1), ((0.3, -0.2, 0.9), 0.2), ((0.0, 2.0, 1.0), 0.4)]:
        fn = psi_d2(g, mu)
        arg, val = grid_argmin(fn, g)
        out = np.array([v[0] for v in prox_d2(E1, mu, [[v] for v in g])])
        arg_err = max(arg_err, np.abs(out - arg).max())
        obj_err = max(obj_err, fn(*out) - val)

    for g, mu in [((0.0, 1.0, 2.0, 3.0), 0.1), ((0.5, -0.5, 0.2, 1.0), 0.3)]:
        fn = psi_d11(g, mu)
        arg, val = grid_argmin(fn, g)
        out = np.array([v[0] for v in prox_d11(E1, mu, [[v] for v in g])])
        arg_err = max(arg_err, np.abs(out - arg).max())
        obj_err = max(obj_err, fn(*out) - val)

    rng = np.random.default_rng(7)
    P3 = SPD(3)
    slack = -np.inf
    for _ in range(20):
        lam = rng.uniform(0.05, 5.0)
        x, f = P3.random_point(rng), P3.random_point(rng)
        p = prox_data(P3, lam, f, x)
        ys = P3.random_point(rng, 100)
        lhs = 0.5 * P3.dist(p, f) ** 2 - 0.5 * P3.dist(ys, f) ** 2
        rhs = (P3.dist(x, ys) ** 2 - P3.dist(p, ys) ** 2) / (2 * lam)
        slack = max(slack, float(np.max(lhs - rhs)))
        x1, x2 = P3.random_point(rng), P3.random_point(rng)
        q1, q2 = prox_dist_pair(P3, lam, x1, x2)
        y1, y2 = P3.random_point(rng, 100), P3.random_point(rng, 100)
        lhs = P3.dist(q1, q2) - P3.dist(y1, y2)
        rhs = (P3.dist(x1, y1) ** 2 + P3.dist(x2, y2) ** 2
               - P3.dist(q1, y1) ** 2 - P3.dist(q2, y2) ** 2) / (2 * lam)
        slack = max(slack, float(np.max(lhs - rhs)))

    ok = arg_err <= 1e-3 and obj_err <= 1e-4 and slack <= 1e-8
    report(7, "prox maps vs grid oracles (1e-3 arg, 1e-4 obj); proximal inequality on P(3)",
           ok, f"max arg error {arg_err:.1e}, max objective excess {obj_err:.1e}, "
               f"max inequality violation {slack:.1e}")


# -- 8: geometry ------------------------------------------------------------------------------
def test_criterion_8_geometry():
    rng = np.random.default_rng(8)
    rt, iso = 0.0, 0.0
    for M in GEOMETRIES.values():
        x, y = spread_points(M, rng, 2, n=(200,), scale=1.0)
        v = M.log(x, y)
        rt = max(rt, float(np.max(M.dist(M.exp(x, v), y))))
        v = M.random_tangent(rng, x, scale=0.8)
        # stay inside the injectivity radius, where log inverts exp
        nv = M.norm(x, v)[:, None]
        v = np.where(nv > 2.5, v * 2.5 / np.maximum(nv, 1e-300), v)
        rt = max(rt, float(np.max(np.abs(M.log(x, M.exp(x, v)) - v))))
        u = M.random_tangent(rng, x)
        iso = max(iso, float(np.max(np.abs(M.norm(y, M.transport(x, y, u)) - M.norm(x, u)))))

    P3 = SPD(3)
    cong = 0.0
    for _ in range(50):
        x, y, z = P3.random_point(rng, 3)
        g = rng.normal(size=(3, 3)) + 2 * np.eye(3)

        def act(p):
            return P3.flat(g @ P3.mat(p) @ g.T)
        d = P3.dist(x, z)
        cong = max(cong, abs(P3.dist(act(x), act(z)) - d) / d)
        c, cg = act(P3.midpoint(x, z)), P3.midpoint(act(x), act(z))
        cong = max(cong, float(np.linalg.norm(cg - c) / np.linalg.norm(c)))
        v = d2(P3, x, y, z)
        cong = max(cong, abs(d2(P3, act(x), act(y), act(z)) - v) / v)

    red = 0.0
    for m in (1, 2, 3, 5):
        E = Euclidean(m)
        w, x, y, z = rng.normal(size=(4, 200, m))
        red = max(red, float(np.max(np.abs(d2(E, x, y, z)
                                           - 0.5 * np.linalg.norm(x - 2 * y + z, axis=-1)))))
        red = max(red, float(np.max(np.abs(d11(E, w, x, y, z)
                                           - 0.5 * np.linalg.norm(w - x + y - z, axis=-1)))))
    ok = rt < 1e-10 and iso < 1e-9 and cong < 1e-8 and red < 1e-12
    report(8, "round trips < 1e-10, transport < 1e-9, congruence < 1e-8, reductions < 1e-12",
           ok, f"round trip {rt:.1e}, isometry {iso:.1e}, congruence {cong:.1e}, "
               f"Euclidean reduction {red:.1e}")


# -- 9: solver sanity -------------------------------------------------------------------------
def test_criterion_9_cppa_sanity():
    rng = np.random.default_rng(9)
    exact = True
    for M in (GEOMETRIES["S2"], GEOMETRIES["P3"], Euclidean(2)):
        f = ManifoldImage(M, np.tile(M.random_point(rng), (6, 5, 1)))
        out, diag = cppa_run(M, f, FunctionalParams(0.5, 1.0))
        exact &= np.array_equal(out.data, f.data) and all(v == 0.0 for v in diag.functional)
    E1 = Euclidean(1)
    _, ds = cppa_run(E1, ManifoldImage(E1, np.zeros((9, 1, 1))), FunctionalParams(0.1, 0.1),
                     record_functional=False)
    _, di = cppa_run(E1, ManifoldImage(E1, np.zeros((5, 5, 1))), FunctionalParams(0.1, 0.1),
                     record_functional=False)
    counts = (ds.prox_applications, di.prox_applications)
    ok = exact and counts == (6000, 6000)
    report(9, "constant image fixed point and equal prox counts", ok,
           f"fixed point bit-exact={exact}, prox applications 1D={counts[0]} 2D={counts[1]}")
