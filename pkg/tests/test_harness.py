from fractions import Fraction
from itertools import product
from math import log, sqrt

import numpy as np
import pytest

from periodic_clt.exceptions import ConfigError, GapTooShort, IncompatibleSchedule
from periodic_clt.harness import (
    ExperimentPlan,
    MixturePlan,
    WildStep,
    check_wildly_oscillating,
    cylinder_family,
    cylinder_frequency,
    mme_table,
    orbit_discrepancy,
    parry,
    run_birkhoff_concentration,
    run_global_clt,
    run_local_clt,
    run_mixture_clt,
    run_mme_convergence,
    run_weighted_clt,
)
from periodic_clt.indep import CylinderSchedule
from periodic_clt.observables import GeometricWeight, LocallyConstant, SymbolIndicator
from periodic_clt.systems import PeriodicPoint, SymbolicSystem, count_periodic, enumerate_periodic

GOLDEN = (1 + sqrt(5)) / 2


def _plan(system, **kw):
    base = dict(epsilons=["1/4"], ks=[2], ns=[2], observable=SymbolIndicator([0]))
    base.update(kw)
    return ExperimentPlan(system=system, **base)


# ----------------------------------------------------------------------
# plans
# ----------------------------------------------------------------------
def test_plan_lengths_checked(full2):
    with pytest.raises(ConfigError):
        _plan(full2, ks=[2, 3])
    with pytest.raises(ConfigError):
        _plan(full2, observable=[SymbolIndicator([0])] * 2)


def test_plan_fills_minimal_gap(full2):
    plan = _plan(full2, epsilons=["1/8", "1/4"], ks=[2, 2], ns=[4, 2])
    assert plan.Ms == [3, 2]


def test_plan_from_dict(golden):
    data = {
        "system": golden.to_dict(),
        "epsilons": ["1/4", "1/4"],
        "ks": [2, 3],
        "ns": [2, 2],
        "observable": {"variant": "symbol_indicator", "word": [0], "offset": "-1/2"},
        "sample_count": 500,
        "seed": 3,
    }
    plan = ExperimentPlan.from_dict(data)
    assert plan.system == golden
    assert plan.epsilons == [Fraction(1, 4)] * 2
    assert plan.summary()["ks"] == [2, 3]
    with pytest.raises(ConfigError):
        ExperimentPlan.from_dict({**data, "bogus": 1})


# ----------------------------------------------------------------------
# CLT runners
# ----------------------------------------------------------------------
def test_global_clt_exact_small(full2):
    (res,) = run_global_clt(_plan(full2))
    assert res.mode == "exact"
    assert res.sample_count == 16
    assert res.set_summary["validation"]["injective"]
    assert 0 <= res.ks.ks_statistic <= 1
    # per-block sums of 1_[0] over the lexmin representatives 00, 01, 10, 11
    assert res.conditions.block_variance == pytest.approx(0.5)


def test_global_clt_constant_is_degenerate(full2):
    h = LocallyConstant(1, {"0": 2, "1": 2})
    (res,) = run_global_clt(_plan(full2, observable=h))
    assert res.degenerate and res.ks is None and res.s_l == 0


def test_global_clt_gap_too_short(full2):
    with pytest.raises(GapTooShort):
        run_global_clt(_plan(full2, epsilons=["1/8"], ns=[4], Ms=[2]))


def test_global_clt_monte_carlo_independent_of_workers(full2):
    kw = dict(epsilons=["1/8"], ks=[8], ns=[4], sample_count=3000, exact_limit=16,
              observable=SymbolIndicator([0], "-1/2"))
    a = run_global_clt(_plan(full2, workers=1, **kw))[0]
    b = run_global_clt(_plan(full2, workers=3, **kw))[0]
    assert a.mode == "monte-carlo"
    assert a.to_dict() == b.to_dict()


def test_global_clt_gap_bound(full2):
    plan = _plan(full2, epsilons=["1/8"] * 2, ks=[4, 8], ns=[8, 9], sample_count=4000,
                 observable=SymbolIndicator([0], "-1/2"))
    for res in run_global_clt(plan):
        assert res.conditions.gap_ratio <= res.extras["gap_bound"]


def test_lindeberg_zero_when_guaranteed(full2):
    plan = _plan(full2, epsilons=["1/8"], ks=[64], ns=[12], sample_count=4000,
                 observable=SymbolIndicator([0], "-1/2"))
    (res,) = run_global_clt(plan)
    for eta, zero in res.extras["lindeberg_zero_guaranteed"].items():
        if zero:
            assert res.conditions.lindeberg_ratio[float(eta)] == 0.0


def test_weighted_clt_small(full2):
    (res,) = run_weighted_clt(_plan(full2))
    assert res.extras["weights_sum"] == "1"
    assert res.extras["mean_shift"] <= res.extras["mean_shift_bound"] + 1e-12
    assert res.extras["support_size"] == 256
    assert res.extras["hypothesis_ratio"] == pytest.approx((2 * 2 * 1) ** 2 / res.s_l ** 2)


def test_weighted_clt_k_one(full2):
    (res,) = run_weighted_clt(_plan(full2, ks=[1]))
    assert res.extras["support_size"] == count_periodic(full2, 4)
    assert res.extras["weights_sum"] == "1"


def _local_plan(system, ks, n=2, **kw):
    sched = [CylinderSchedule.repeated(k, n, (0,)) for k in ks]
    return ExperimentPlan(system=system, epsilons=["1/8"] * len(ks), ks=ks, ns=[n] * len(ks),
                          Ms=[0] * len(ks), schedules=sched, **kw)


def test_local_clt_golden_mean_trend():
    # metric base 1/4 makes a(1/8) = 1, so depth-1 pins are allowed
    system = SymbolicSystem.golden_mean(metric_base="1/4")
    mu0 = parry(system).cylinder((0,))
    h = SymbolIndicator([0], offset=-mu0)
    plan = _local_plan(system, [16, 256], observable=h, sample_count=20000)
    res = run_local_clt(plan)
    assert res[-1].ks.ks_statistic < 0.08
    assert res[-1].conditions.gap_ratio == 0.0
    assert res[-1].conditions.oscillation_ratio_j1 == 0.0


def test_local_clt_k_one_reports_negligibility():
    system = SymbolicSystem.golden_mean(metric_base="1/4")
    plan = _local_plan(system, [1], n=6, observable=SymbolIndicator([1]), sample_count=100)
    (res,) = run_local_clt(plan)
    assert max(res.conditions.negligibility.values()) == 1.0


def test_local_clt_incompatible(golden):
    sched = [CylinderSchedule(2, 2, ((1, 1), (0, 0)))]
    plan = ExperimentPlan(system=golden, epsilons=["1/4"], ks=[2], ns=[2], Ms=[0],
                          schedules=sched, observable=SymbolIndicator([0]))
    with pytest.raises(IncompatibleSchedule):
        run_local_clt(plan)


# ----------------------------------------------------------------------
# measure of maximal entropy
# ----------------------------------------------------------------------
def test_parry_full_shift(full2):
    mu = parry(full2)
    assert mu.perron_root_ == pytest.approx(2)
    for w in [(0,), (1, 0), (0, 1, 1, 0)]:
        assert mu.cylinder(w) == pytest.approx(2.0 ** -len(w))


def test_parry_golden_mean(golden):
    mu = parry(golden)
    assert mu.perron_root_ == pytest.approx(GOLDEN, rel=1e-12)
    assert mu.cylinder((0,)) == pytest.approx(GOLDEN ** 2 / (1 + GOLDEN ** 2), rel=1e-10)
    assert mu.cylinder((1, 1)) == 0
    assert mu.symbol_marginals().sum() == pytest.approx(1)
    A = golden.A.astype(float)
    assert np.allclose(A @ mu.right_, mu.perron_root_ * mu.right_, rtol=1e-10)


def test_parry_cylinders_are_consistent(golden):
    mu = parry(golden)
    for w in cylinder_family(golden, 3):
        ext = sum(mu.cylinder(w + (s,)) for s in range(2))
        assert ext == pytest.approx(mu.cylinder(w), abs=1e-12)


def test_parry_entropy_against_traces(golden):
    mu = parry(golden)
    for n in (10, 30, 60):
        est = log(count_periodic(golden, n)) / n
        assert abs(est - mu.entropy_) <= 1.0 / n


def test_cylinder_frequency_examples(golden, full2):
    assert cylinder_frequency(golden, 4, (0,)) == Fraction(5, 7)
    assert cylinder_frequency(full2, 5, (0, 1)) == Fraction(1, 4)
    assert cylinder_frequency(golden, 3, (0, 1, 0)) == Fraction(1, 4)
    assert cylinder_frequency(golden, 3, (1, 1, 0)) == 0


@pytest.mark.parametrize("n", [3, 5, 7])
def test_cylinder_frequency_brute_force(golden, n):
    pts = enumerate_periodic(golden, n)
    for w in cylinder_family(golden, 3):
        if len(w) <= n:
            hits = sum(p.word[: len(w)] == w for p in pts)
            assert cylinder_frequency(golden, n, w) == Fraction(hits, len(pts))


def test_mme_table_golden(golden):
    rows = mme_table(golden, range(20, 41))
    assert all(r["discrepancy"] < 0.01 for r in rows)
    assert mme_table(golden, [4])[0]["frequency"] == "5/7"


def test_mme_full_shift_exact(full2):
    for n in (3, 6):
        for w in cylinder_family(full2, 3):
            if len(w) <= n:
                assert cylinder_frequency(full2, n, w) == Fraction(1, 2 ** len(w))


def test_mme_convergence_rows(full2):
    plan = _plan(full2, epsilons=["1/4"] * 2, ks=[2, 2], ns=[3, 5], sample_count=2000)
    rows = run_mme_convergence(plan, max_len=2)
    assert [r["l"] for r in rows] == [0, 1]
    # lexmin representatives on the full shift cover every prefix class evenly
    assert all(r["max_discrepancy_exact"] == pytest.approx(0) for r in rows)
    assert all(r["max_discrepancy_periodic"] == pytest.approx(0) for r in rows)


# ----------------------------------------------------------------------
# concentration
# ----------------------------------------------------------------------
def test_orbit_discrepancy_fixed_point(full2):
    fam = [(0,), (1,)]
    assert orbit_discrepancy(full2, PeriodicPoint((0,)), fam) == pytest.approx(0.5)


def test_concentration_constant(full2):
    h = LocallyConstant(1, {"0": 1, "1": 1})
    rows = run_birkhoff_concentration(_plan(full2, epsilons=["1/4"] * 2, ks=[2, 3], ns=[2, 2],
                                            observable=h))
    assert all(r["mass"] == 1.0 for r in rows)


def test_concentration_mass_grows(full2):
    plan = _plan(full2, epsilons=["1/8"] * 3, ks=[4, 16, 64], ns=[8, 9, 10], sample_count=4000,
                 observable=SymbolIndicator([0], "-1/2"))
    masses = [r["mass"] for r in run_birkhoff_concentration(plan)]
    assert masses[-1] >= masses[0] and masses[-1] > 0.9


# ----------------------------------------------------------------------
# mixture
# ----------------------------------------------------------------------
CELL_A, CELL_B = (0, 0, 0, 1), (1, 0, 1, 0)


def test_mixture_plan_checks(golden):
    h = SymbolIndicator([0])
    with pytest.raises(ConfigError):
        MixturePlan.by_block_words(golden, h, [(0, 1), (0, 1, 0)], [4], 6)
    with pytest.raises(ConfigError):
        MixturePlan(system=golden, observable=h,
                    cells=[[CylinderSchedule.repeated(2, 6, (0,)), CylinderSchedule.repeated(3, 6, (1,))]])


def test_mixture_cell_counts_and_variances(golden):
    # block fillers: 0001 0y | 1010 y0, two per block in each cell
    plan = MixturePlan.by_block_words(golden, SymbolIndicator([1, 0, 1]), [CELL_A, CELL_B], [6], 6,
                                      tail=0, estimate_count=20000, sample_count=20000)
    (row,) = run_mixture_clt(plan)
    assert [c["count"] for c in row["cells"]] == ["64", "64"]
    per_block = [c["variance"] / 6 for c in row["cells"]]
    assert per_block == pytest.approx([0.25, 1.0], rel=0.05)
    assert row["variance_ratio"] >= 2
    assert all(c["thickening_ratio"] == 1.0 for c in row["cells"])


def test_mixture_zero_variance_cell(golden):
    # pinning every block start to 1 forces the word 1010...; its sums are constant
    plan = MixturePlan.by_block_words(golden, SymbolIndicator([0]), [(0,), (1,)], [8], 2,
                                      tail=0, estimate_count=2000, sample_count=2000)
    (row,) = run_mixture_clt(plan)
    assert row["cells"][1]["sigma_atom"] == 0.0
    assert row["mixture"]["sigmas"][1] == 0.0
    assert row["variance_ratio"] == float("inf")
    assert 0 <= row["ks_mixture"] < 1


def test_mixture_single_cell_matches_local():
    system = SymbolicSystem.golden_mean(metric_base="1/4")
    h = SymbolIndicator([0])
    mix = MixturePlan.by_block_words(system, h, [(0,)], [64], 2, tail=0,
                                     estimate_count=20000, sample_count=20000)
    (row,) = run_mixture_clt(mix)
    (loc,) = run_local_clt(_local_plan(system, [64], observable=h, sample_count=20000))
    assert row["s_l"] == pytest.approx(loc.s_l, rel=0.05)
    assert abs(row["ks_mixture"] - loc.ks.ks_statistic) < 0.03


# ----------------------------------------------------------------------
# wildly oscillating check
# ----------------------------------------------------------------------
def _brute_force_cells(system, table, D, step):
    """Conditional variances under the Parry measure by enumerating words."""
    mu = parry(system)
    k, n, d = step.k, step.n, step.depth
    L = k * n + D - 1
    words = [w for w in product(range(system.num_symbols), repeat=L) if system.is_admissible(w)]
    weight = np.array([mu.cylinder(w) for w in words])
    sums = np.array([[sum(table[w[t:t + D]] for t in range(r)) for r in range(1, k * n + 1)]
                     for w in words])
    cells = {}
    for j, w in enumerate(words):
        key = tuple(w[i * n:i * n + d] for i in range(k))
        cells.setdefault(key, []).append(j)
    s2, partial = 0.0, 0.0
    for idx in cells.values():
        p = weight[idx] / weight[idx].sum()
        S = sums[idx]
        var = p @ (S - p @ S) ** 2
        s2 = max(s2, var[-1])
        partial = max(partial, var[: n - 1].max() if n > 1 else 0.0)
    return s2, partial


@pytest.mark.parametrize("d,n,k", [(1, 2, 2), (1, 3, 2), (2, 3, 3), (1, 4, 1)])
def test_wild_markov_engine_brute_force(golden, d, n, k):
    table = {(0, 0): 1.0, (0, 1): -0.5, (1, 0): 2.0}
    h = LocallyConstant(2, {"00": 1, "01": "-1/2", "10": 2})
    step = WildStep(d, "1/64", k * n, n)
    rep = check_wildly_oscillating(h, [step], golden)
    s2, partial = _brute_force_cells(golden, table, 2, step)
    row = rep["rows"][0]
    assert row["s_l"] ** 2 == pytest.approx(s2, rel=1e-9)
    assert row["short_sum_ratio"] == pytest.approx(partial / s2, rel=1e-9)


def test_wild_constant_is_negative(full2):
    h = LocallyConstant(1, {"0": 3, "1": 3})
    rep = check_wildly_oscillating(h, [(1, "1/4", 8, 2), (1, "1/4", 16, 2)], full2)
    assert not rep["s_increasing"] and not rep["verdict"]


def test_wild_depth_one_has_zero_oscillation(full2):
    data = [(4, "1/8", 4 * n, n) for n in (6, 7, 8)]
    rep = check_wildly_oscillating(SymbolIndicator([0], "-1/2"), data, full2)
    assert all(r["oscillation_ratio"] == 0.0 for r in rep["rows"])
    assert rep["condition_2"]


def test_wild_geometric_engine_monte_carlo(full2):
    h = GeometricWeight("1/2", [0, 1])
    step = WildStep(2, "1/8", 12, 4)
    row = check_wildly_oscillating(h, [step], full2)["rows"][0]
    rng = np.random.default_rng(0)
    L = 12 + 60
    x = rng.integers(0, 2, size=(40000, L))
    x[:, [0, 1, 4, 5, 8, 9]] = [0, 1, 1, 0, 0, 0]  # one cell of the joined partition
    lam = 0.5 ** np.arange(L)
    h_vals = np.array([(x[:, j:] * lam[: L - j]).sum(axis=1) for j in range(12)]).T
    assert row["s_l"] ** 2 == pytest.approx(h_vals.sum(axis=1).var(), rel=0.03)


def test_wild_geometric_acceptance_sequences(full2):
    data = [(4, "1/8", 2 ** (l + 2) * (8 + l), 8 + l) for l in range(7)]
    rep = check_wildly_oscillating(GeometricWeight("1/2", [0, 1]), data, full2)
    assert rep["diameters_ok"] and rep["verdict"]
