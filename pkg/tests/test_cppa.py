import math

import numpy as np
import pytest

from manifold_tv import (
    SPD, DomainError, Euclidean, FunctionalParams, ManifoldImage, NoiseSpec, SolverConfig,
    Sphere, ValidationError, add_noise, build_split, cppa_run, functional_value,
    gen_lemniscate, grid_search,
)

from oracles import grid_argmin, psi_d2

E1 = Euclidean(1)


def signal(values, M=E1):
    return ManifoldImage(M, np.asarray(values, dtype=float).reshape(-1, 1, M.ambient_size))


# -- functional ---------------------------------------------------------------------
def test_functional_examples():
    f = signal([0.0, 1.0, 0.0])
    assert functional_value(E1, f, f, FunctionalParams(0.0, (1.0, 0.0, 0.0))) == 1.0
    img = ManifoldImage(E1, np.array([[0.0, 1.0], [1.0, 0.0]])[..., None])
    assert functional_value(E1, img, img, FunctionalParams(1.0, 0.0)) == 4.0
    const = ManifoldImage(Sphere(2), np.tile([0, 0, 1.0], (4, 5, 1)))
    assert functional_value(Sphere(2), const, const, FunctionalParams(1.0, 1.0)) == 0.0


def test_functional_terms_and_axes():
    # vertical is axis 0
    img = ManifoldImage(E1, np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])[..., None])
    assert functional_value(E1, img, img, FunctionalParams((1.0, 0.0), 0.0)) == 3.0
    assert functional_value(E1, img, img, FunctionalParams((0.0, 1.0), 0.0)) == 0.0
    quad = ManifoldImage(E1, np.array([[0.0, 1.0], [1.0, 0.0]])[..., None])
    assert functional_value(E1, quad, quad, FunctionalParams(0.0, (0, 0, 1.0))) == 1.0
    zero = quad.with_data(np.zeros_like(quad.data))
    assert functional_value(E1, zero, quad, FunctionalParams()) == 1.0


def test_functional_shape_mismatch():
    with pytest.raises(ValidationError):
        functional_value(E1, signal([0.0, 1.0]), signal([0.0, 1.0, 2.0]), FunctionalParams())


def test_params_validation():
    p = FunctionalParams(0.5, 2.0)
    assert p.alpha == (0.5, 0.5) and p.beta == (2.0, 2.0, 2.0)
    with pytest.raises(ValidationError):
        FunctionalParams(-1.0, 0.0)
    with pytest.raises(ValidationError):
        FunctionalParams(0.0, (1.0, 2.0))
    with pytest.raises(ValidationError):
        SolverConfig(lambda0=0.0)
    assert SolverConfig().resolved_cycles(1) == 1000
    assert SolverConfig().resolved_cycles(7) == 400


# -- splitting --------------------------------------------------------------------------
def test_split_signal_has_six_groups():
    plan = build_split(512, 1)
    assert len(plan) == 6
    assert [g.atom for g in plan.groups] == ["data", "pair", "pair", "d2", "d2", "d2"]


def test_split_image_has_fifteen_groups():
    plan = build_split(6, 7)
    assert len(plan) == 15
    atoms = [g.atom for g in plan.groups]
    assert atoms.count("pair") == 4 and atoms.count("d2") == 6 and atoms.count("d11") == 4


def test_split_two_by_two_quad():
    plan = build_split(2, 2)
    d11 = [g for g in plan.groups if g.atom == "d11"]
    assert d11[0].offset == (0, 0)
    assert len(d11[0].tuples) == 1
    pix = {plan.coords(p) for p in d11[0].tuples[0]}
    assert pix == {(0, 0), (1, 0), (0, 1), (1, 1)}
    # diagonal pairs sit at positions (0, 2) and (1, 3)
    assert [plan.coords(p) for p in d11[0].tuples[0]] == [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert all(len(g.tuples) == 0 for g in d11[1:])


def test_split_three_sample_signal():
    plan = build_split(3, 1)
    d2 = [g for g in plan.groups if g.atom == "d2"]
    assert [len(g.tuples) for g in d2] == [1, 0, 0]
    np.testing.assert_array_equal(d2[0].tuples, [[0, 1, 2]])


@pytest.mark.parametrize("N,M", [(1, 1), (2, 3), (5, 5), (7, 4), (10, 1), (64, 64)])
def test_split_disjoint_and_complete(N, M):
    plan = build_split(N, M)
    counts = {"pair": 0, "d2": 0, "d11": 0}
    for g in plan.groups:
        flat = g.tuples.ravel()
        assert len(np.unique(flat)) == len(flat)
        if g.atom in counts:
            counts[g.atom] += len(g.tuples)
    # every atom of the functional appears exactly once
    assert counts["pair"] == (N - 1) * M + N * (M - 1)
    assert counts["d2"] == max(N - 2, 0) * M + (N * max(M - 2, 0) if M > 1 else 0)
    assert counts["d11"] == ((N - 1) * (M - 1) if M > 1 else 0)


def test_split_rejects_empty():
    with pytest.raises(ValidationError):
        build_split(0, 3)


# -- solver --------------------------------------------------------------------------
@pytest.mark.parametrize("M", [Sphere(2), SPD(2), Euclidean(2)], ids=["S2", "P2", "R2"])
def test_constant_image_is_fixed_point(M, rng):
    c = M.random_point(rng)
    f = ManifoldImage(M, np.tile(c, (5, 4, 1)))
    u, diag = cppa_run(M, f, FunctionalParams(0.3, 0.7), SolverConfig(cycles=20))
    np.testing.assert_array_equal(u.data, f.data)
    assert all(v == 0.0 for v in diag.functional)


def test_zero_weights_return_input(rng):
    M = Sphere(2)
    f = ManifoldImage(M, M.random_point(rng, (6, 5)))
    u, _ = cppa_run(M, f, FunctionalParams(0.0, 0.0), SolverConfig(cycles=30))
    np.testing.assert_array_equal(u.data, f.data)


def test_three_sample_signal_reaches_minimum():
    f = signal([0.0, 1.0, 0.0])
    p = FunctionalParams(0.0, (1.0, 0.0, 0.0))
    u, diag = cppa_run(E1, f, p, SolverConfig(cycles=200))
    _, best = grid_argmin(psi_d2((0.0, 1.0, 0.0), 1.0), (0.0, 1.0, 0.0),
                          levels=((1.5, 0.01), (0.02, 1e-3)))
    value = functional_value(E1, u, f, p)
    assert value < 1.0
    assert best == pytest.approx(1 / 3, abs=1e-4)
    assert abs(value - best) <= 0.05 * best
    np.testing.assert_allclose(u.data.ravel(), 1 / 3, atol=1e-3)


def noisy_signal(seed=3):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 3, 40)
    return signal(np.sin(t) + 0.1 * rng.normal(size=40))


@pytest.mark.parametrize("M", [E1, SPD(2)], ids=["R1", "P2"])
def test_iterates_converge(M):
    if M is E1:
        f = noisy_signal()
    else:
        base = ManifoldImage(M, np.tile(M.flat(np.eye(2)), (6, 6, 1)))
        f = add_noise(base, NoiseSpec("gaussian", 0.3, 1))
    p = FunctionalParams(0.1, 0.5)
    steps = []

    def track(k, value, elapsed):
        steps.append(value)

    u, diag = cppa_run(M, f, p, SolverConfig(cycles=300), callback=track)
    F = np.array(diag.functional)
    assert steps == diag.functional
    assert F[-1] < diag.initial_functional
    # increments of the functional die out and the tail stays below cycle 10
    assert np.max(np.abs(np.diff(F[-50:]))) < 1e-3 * abs(F[-1])
    assert F[-1] <= F[9]


@pytest.mark.xfail(strict=True, reason="cyclic proximal point steps are not monotone in the "
                                       "full functional; see the decisions ledger")
def test_functional_non_increasing_after_ten_cycles():
    f = signal([0.0, 1.0, 0.0])
    _, diag = cppa_run(E1, f, FunctionalParams(0.0, (1.0, 0.0, 0.0)), SolverConfig(cycles=200))
    assert np.max(np.diff(diag.functional[9:])) <= 1e-9


def test_run_is_deterministic(rng):
    M = Sphere(2)
    f = add_noise(ManifoldImage(M, np.tile([0, 0, 1.0], (6, 6, 1))), NoiseSpec("gaussian", 0.2, 5))
    cfg = SolverConfig(cycles=15)
    a, da = cppa_run(M, f, FunctionalParams(0.1, 0.3), cfg)
    b, db = cppa_run(M, f, FunctionalParams(0.1, 0.3), cfg)
    np.testing.assert_array_equal(a.data, b.data)
    assert da.functional == db.functional


def test_prox_application_counts():
    sig = ManifoldImage(E1, np.zeros((8, 1, 1)))
    img = ManifoldImage(E1, np.zeros((4, 4, 1)))
    _, ds = cppa_run(E1, sig, FunctionalParams(0.1, 0.1), record_functional=False)
    _, di = cppa_run(E1, img, FunctionalParams(0.1, 0.1), record_functional=False)
    assert ds.prox_applications == 1000 * 6 == 6000
    assert di.prox_applications == 400 * 15 == 6000
    assert (ds.groups, di.groups) == (6, 15)
    assert len(ds.lambdas) == 1000
    assert ds.lambdas[0] == pytest.approx(math.pi / 2) and ds.lambdas[9] == pytest.approx(
        math.pi / 20)


def test_domain_error_reports_pixels_and_cycle():
    M = Sphere(2)
    data = np.array([[[0, 0, 1.0]], [[0, 0, -1.0]], [[0, 0, 1.0]]])
    f = ManifoldImage(M, data)
    with pytest.raises(DomainError) as info:
        cppa_run(M, f, FunctionalParams(1.0, 0.0), SolverConfig(cycles=3))
    err = info.value
    assert err.cycle == 1
    assert err.index == [(0, 0), (1, 0)]
    assert "cycle 1" in str(err) and "tv1-vertical-0" in str(err)


def test_manifold_mismatch_rejected():
    f = signal([0.0, 1.0])
    with pytest.raises(ValidationError):
        cppa_run(Sphere(2), f, FunctionalParams())


def test_diagnostics_csv():
    _, diag = cppa_run(E1, signal([0.0, 1.0, 0.0]), FunctionalParams(0.0, 1.0),
                       SolverConfig(cycles=3))
    rows = diag.to_csv().strip().split("\n")
    assert rows[0] == "cycle,functional,elapsed"
    assert len(rows) == 4 and rows[1].startswith("1,")


# -- grid search ---------------------------------------------------------------------
def test_grid_search_singleton():
    f = noisy_signal()
    res = grid_search(E1, f, f, [0.2], [0.5], SolverConfig(cycles=5))
    assert (res.alpha, res.beta) == (0.2, 0.5)
    assert len(res.table) == 1


def test_grid_search_picks_second_order_on_lemniscate():
    clean = gen_lemniscate(512)
    noisy = add_noise(clean, NoiseSpec("gaussian", math.pi / 30, 1))
    res = grid_search(clean.manifold, noisy, clean, [0.0], [0.0, 10.0])
    assert tuple(res) == (0.0, 10.0)
    assert all(res.error <= e for _, _, e in res.table)


def test_grid_search_rejects_empty_grid():
    f = noisy_signal()
    with pytest.raises(ValidationError):
        grid_search(E1, f, f, [], [1.0])
