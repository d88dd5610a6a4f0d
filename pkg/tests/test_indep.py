from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from periodic_clt.exceptions import (
    GapTooShort,
    IncompatibleSchedule,
    IndexOutOfRange,
    WindowTooShort,
)
from periodic_clt.indep import (
    CylinderSchedule,
    GlobalIndependentSet,
    LocalIndependentSet,
    build_global_indep,
    build_local_indep,
    check_spanning,
    maximal_separated,
    phi_apply,
    sample_uniform,
    specify_two,
    weighted_measure,
)
from periodic_clt.systems import (
    PeriodicPoint,
    SymbolicSystem,
    bowen_separation,
    enumerate_periodic,
    shift_point,
    spec_parameters,
)

Q = Fraction(1, 4)


def greedy_oracle(system, cands, n, t):
    kept = []
    for p in cands:
        if all(bowen_separation(system, p, q, n) > t for q in kept):
            kept.append(p)
    return kept


def words(points):
    return ["".join(map(str, p.word)) for p in points]


def test_maximal_separated_example(full2):
    E = maximal_separated(full2, enumerate_periodic(full2, 4), 2, Fraction(1, 2))
    assert words(E) == ["0000", "0100", "1000", "1100"]


def test_maximal_separated_trivial(full2):
    P = enumerate_periodic(full2, 5)
    assert maximal_separated(full2, P, 3, 1) == [P[0]]
    assert maximal_separated(full2, P[3:4], 3, Q) == [P[3]]


@pytest.mark.parametrize("n,t", [(1, Fraction(1, 2)), (2, Fraction(1, 8)), (3, Fraction(3, 16)), (2, Fraction(1))])
def test_maximal_separated_matches_pairwise_greedy(golden, n, t):
    P = enumerate_periodic(golden, 9)
    rng = np.random.default_rng(n)
    order = [P[i] for i in rng.permutation(len(P))]
    assert maximal_separated(golden, order, n, t) == greedy_oracle(golden, order, n, t)


def test_check_spanning_examples(full2):
    P4 = enumerate_periodic(full2, 4)
    assert check_spanning(full2, P4, P4, 2, Q) == (True, None)
    E = maximal_separated(full2, P4, 2, Fraction(1, 2))
    assert check_spanning(full2, E, enumerate_periodic(full2, 8), 2, Fraction(3, 4))[0]
    ok, witness = check_spanning(full2, [PeriodicPoint((0, 0, 0, 0))], P4, 2, Q)
    assert not ok and witness.word == (0, 0, 0, 1)


def test_check_spanning_witness_is_uncovered(full2):
    ok, w = check_spanning(full2, [PeriodicPoint((0, 0, 0, 0))], [PeriodicPoint((1, 1, 0, 0))], 2, Q)
    assert not ok and w.word == (1, 1, 0, 0)
    assert bowen_separation(full2, w, PeriodicPoint((0, 0, 0, 0)), 2) >= Q


def test_global_example(full2):
    s = build_global_indep(full2, Q, k=2, n=2, M=2)
    E = [tuple(r) for r in s.E_.tolist()]
    assert E == [(0, 0, 0, 0), (0, 1, 0, 0), (1, 0, 0, 0), (1, 1, 0, 0)]
    p = s.phi_apply([E.index((0, 1, 0, 0)), E.index((1, 1, 0, 0))])
    assert str(p) == "01001100"
    assert bowen_separation(full2, p, PeriodicPoint((0, 1, 0, 0)), 2) == Fraction(1, 8)
    assert s.phi_apply([0, 0]).word == (0,) * 8
    assert all(s.report_.values())


def test_global_gap_too_short(golden):
    with pytest.raises(GapTooShort):
        build_global_indep(golden, Fraction(1, 8), k=2, n=3, M=3)


def test_global_e_is_greedy_over_lex_order(golden):
    eps = Fraction(1, 8)
    s = build_global_indep(golden, eps, k=2, n=4)
    P = enumerate_periodic(golden, 4 + s.M_)
    assert [p.word for p in s.E_points] == [p.word for p in greedy_oracle(golden, P, 4, 2 * eps)]


@pytest.mark.parametrize("system_name,eps,k,n,extra", [
    ("full", Fraction(1, 4), 3, 2, 0),
    ("full", Fraction(1, 8), 2, 3, 1),
    ("golden", Fraction(1, 8), 2, 4, 0),
    ("golden", Fraction(1, 4), 3, 2, 2),
])
def test_global_brute_force(system_name, eps, k, n, extra):
    system = SymbolicSystem.full_shift(2) if system_name == "full" else SymbolicSystem.golden_mean()
    M = spec_parameters(system, eps).M_of_eps + extra
    s = build_global_indep(system, eps, k=k, n=n, M=M)
    E = s.E_points
    for p in E:
        for q in E:
            if p != q:
                assert bowen_separation(system, p, q, n) > 2 * eps
    K = k * (n + M)
    targets = enumerate_periodic(system, K)
    assert check_spanning(system, E, targets, n, 3 * eps)[0]
    X, W = s.materialize()
    images = {tuple(w) for w in W.tolist()}
    assert len(images) == len(E) ** k
    for x, w in zip(X[:: max(1, len(X) // 200)], W[:: max(1, len(X) // 200)]):
        p = PeriodicPoint(tuple(w))
        assert system.is_admissible(p.word, cyclic=True)
        for i in range(k):
            assert bowen_separation(system, shift_point(p, i * (n + M)), E[x[i]], n) < eps


def test_phi_index_errors(full2):
    s = build_global_indep(full2, Q, k=2, n=2)
    with pytest.raises(IndexOutOfRange):
        phi_apply(s, [0, 4])
    with pytest.raises(ValueError):
        phi_apply(s, [0])


def test_k_one_is_identity_on_E(full2):
    s = build_global_indep(full2, Q, k=1, n=3)
    for i, e in enumerate(s.E_points):
        assert phi_apply(s, [i]) == e


def test_large_set_uses_sub_box(full2):
    s = GlobalIndependentSet(epsilon=Fraction(1, 8), k=6, n=6, validation_budget=4096).fit(full2)
    assert len(s.E_) == 2 ** 7
    assert all(s.report_.values())


def test_sklearn_params(full2):
    s = GlobalIndependentSet(epsilon="1/8", k=3, n=4)
    assert s.get_params()["k"] == 3
    s.set_params(k=2).fit(full2)
    assert s.total_period == 2 * (4 + 3)


def test_sampling_reproducible(full2):
    s = build_global_indep(full2, Q, k=3, n=2)
    X1, W1 = sample_uniform(s, 42, 3)
    X2, W2 = sample_uniform(s, 42, 3)
    assert np.array_equal(X1, X2) and np.array_equal(W1, W2)
    X3, _ = sample_uniform(s, 42, 3, path=(1,))
    assert not np.array_equal(X1, X3)


def test_sampling_singleton(full2):
    s = build_global_indep(full2, Fraction(1), k=3, n=1, M=0)
    assert s.sizes_ == [1, 1, 1]
    _, W = sample_uniform(s, 0, 5)
    assert (W == W[0]).all()


def test_sampling_frequencies(golden):
    s = build_global_indep(golden, Fraction(1, 8), k=3, n=4)
    X, _ = sample_uniform(s, 7, 100_000)
    size = s.sizes_[0]
    p = 1 / size
    se = np.sqrt(p * (1 - p) / len(X))
    for i in range(3):
        freq = np.bincount(X[:, i], minlength=size) / len(X)
        assert np.abs(freq - p).max() < 4 * se


def test_specify_two_example(full2):
    p = specify_two(full2, PeriodicPoint((0,)), 2, PeriodicPoint((1,)), 3, 2, 2, Q)
    assert str(p) == "000011111"
    assert bowen_separation(full2, p, PeriodicPoint((0,)), 2) < Q
    assert bowen_separation(full2, shift_point(p, 4), PeriodicPoint((1,)), 3) < Q


def test_specify_two_symmetric(golden):
    x = PeriodicPoint((0, 1, 0))
    p = specify_two(golden, x, 4, x, 4, 5, 5, Fraction(1, 8))
    assert p.word[:9] == p.word[9:]


def test_specify_two_gap_too_short(golden):
    with pytest.raises(GapTooShort):
        specify_two(golden, PeriodicPoint((0,)), 4, PeriodicPoint((0,)), 4, 3, 4, Fraction(1, 8))


def test_local_example_depth_a(golden):
    sched = CylinderSchedule(2, 4, ((0, 0), (0, 0)))
    s = build_local_indep(golden, sched, Q, 8)
    brute = {w for w in product((0, 1), repeat=8)
             if golden.is_admissible(w, cyclic=True) and w[:2] == (0, 0) and w[4:6] == (0, 0)}
    X, W = s.materialize()
    assert {tuple(w) for w in W.tolist()} == brute


def test_local_shallow_cylinders_rejected(golden):
    with pytest.raises(IncompatibleSchedule):
        build_local_indep(golden, CylinderSchedule(2, 4, ((0,), (0,))), Q, 8)


def test_local_incompatible(golden):
    with pytest.raises(IncompatibleSchedule):
        build_local_indep(golden, CylinderSchedule(2, 1, ((1,), (1,))), Fraction(1, 2), 2)


def test_local_window_too_short(golden):
    with pytest.raises(WindowTooShort):
        build_local_indep(golden, CylinderSchedule(2, 2, ((0, 0), (0, 0))), Fraction(1, 8), 4)


def test_local_k_one(golden):
    sched = CylinderSchedule(1, 6, ((0,),))
    s = build_local_indep(golden, sched, Fraction(1, 8))
    X, W = s.materialize()
    assert np.array_equal(W, s.member_matrix())


def test_local_offset_keeps_image(golden):
    sched = CylinderSchedule(3, 3, ((0, 1), (0, 0), (1, 0)))
    a = LocalIndependentSet(Q, sched, 12).fit(golden)
    b = LocalIndependentSet(Q, sched, 12, candidate_offset=5).fit(golden)
    assert a.sizes_ == b.sizes_
    assert {w.tobytes() for w in a.materialize()[1]} == {w.tobytes() for w in b.materialize()[1]}


def test_weighted_measure_small(full2):
    s = build_global_indep(full2, Q, k=2, n=2, M=2)
    wm = weighted_measure(s)
    assert sum(wm.weights) == 1
    assert all(w > 0 for w in wm.weights)
    # direct definition over all pairs
    support = [PeriodicPoint(tuple(r)) for r in wm.support.tolist()]
    E = s.E_points
    X, P = s.materialize()
    Qsets = []
    for x in X:
        Qsets.append([j for j, q in enumerate(support)
                      if all(bowen_separation(full2, shift_point(q, i * 4), E[x[i]], 2) < 3 * Q
                             for i in range(2))])
    direct = [Fraction(0)] * len(support)
    for qs in Qsets:
        for j in qs:
            direct[j] += Fraction(1, len(X) * len(qs))
    assert direct == wm.weights
    assert [list(q) for q in wm.Q] == Qsets


def test_weighted_measure_k_one(full2):
    s = build_global_indep(full2, Q, k=1, n=2)
    wm = weighted_measure(s)
    assert wm.support.shape[1] == 4
    assert sum(wm.weights) == 1


def test_manifest(golden):
    m = build_global_indep(golden, Fraction(1, 8), k=2, n=4).manifest()
    assert m["size_E"] == len(m["E"]) and all(m["validation"].values())
