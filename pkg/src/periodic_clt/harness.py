"""Experiments over l-indexed sequences of independent sets.

Every experiment takes an explicit plan, runs one step per index ``l`` and
returns plain result objects with a ``to_dict`` method.  Monte Carlo work
is split into a fixed number of batches, each with its own named random
stream, so the output does not depend on the number of worker threads.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from math import log, sqrt
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import ConfigError, NotPrimitive
from .indep import (
    CylinderSchedule,
    GlobalIndependentSet,
    LocalIndependentSet,
    sample_uniform,
    weighted_measure,
)
from .observables import GeometricWeight, Observable, observable_from_dict, oscillation_bound
from .rng import NUM_BATCHES, batch_sizes, stream
from .stats import (
    DEFAULT_ETA_GRID,
    ConditionReport,
    DistributionDistance,
    NormalMixture,
    array_sums,
    conditions_from_sums,
    ks_distance,
    set_oscillations,
)
from .systems import (
    DEFAULT_ENUMERATION_BUDGET,
    CyclicConstraint,
    PeriodicPoint,
    SymbolicSystem,
    count_periodic,
    as_fraction,
    spec_parameters,
    unroll_rows,
)


# ----------------------------------------------------------------------
# plans and results
# ----------------------------------------------------------------------
@dataclass
class ExperimentPlan:
    """Explicit sequences ``eps_l, k_l, n_l, M_l`` and run settings.

    ``observable`` is one observable for every ``l``, or a list indexed by
    ``l`` whose entries are an observable or a per-block list.  Local plans
    give ``schedules`` (one CylinderSchedule per ``l``) and optionally the
    periods ``ms``.
    """

    system: SymbolicSystem
    epsilons: list
    ks: list
    ns: list
    observable: object
    Ms: list | None = None
    schedules: list | None = None
    ms: list | None = None
    sample_count: int = 100_000
    exact_limit: int = 4096
    enumeration_budget: int = DEFAULT_ENUMERATION_BUDGET
    seed: int = 0
    workers: int = 1
    eta_grid: tuple = DEFAULT_ETA_GRID
    oscillation_mode: str = "bound"
    eta: float = 0.2
    name: str = "plan"

    def __post_init__(self):
        self.epsilons = [as_fraction(e) for e in self.epsilons]
        L = len(self.epsilons)
        if not (len(self.ks) == len(self.ns) == L) or L == 0:
            raise ConfigError("eps, k and n sequences must have the same positive length")
        if self.Ms is None:
            self.Ms = [None] * L
        if len(self.Ms) != L:
            raise ConfigError("M sequence has the wrong length")
        self.Ms = [spec_parameters(self.system, e).M_of_eps if M is None else int(M)
                   for e, M in zip(self.epsilons, self.Ms)]
        if self.schedules is not None and len(self.schedules) != L:
            raise ConfigError("one schedule per l is required")
        if self.ms is not None and len(self.ms) != L:
            raise ConfigError("m sequence has the wrong length")
        if isinstance(self.observable, list) and len(self.observable) != L:
            raise ConfigError("observable list must have one entry per l")
        if self.sample_count < 1 or self.workers < 1:
            raise ConfigError("sample_count and workers must be positive")

    @property
    def length(self) -> int:
        return len(self.epsilons)

    def observable_at(self, l: int):
        if isinstance(self.observable, list):
            return self.observable[l]
        return self.observable

    @classmethod
    def from_dict(cls, data: Mapping, system: SymbolicSystem | None = None):
        data = dict(data)
        if system is None:
            system = SymbolicSystem.from_dict(data.pop("system"))
        else:
            data.pop("system", None)
        obs = data.pop("observable")
        if isinstance(obs, list):
            observable = [[observable_from_dict(o, system) for o in x] if isinstance(x, list)
                          else observable_from_dict(x, system) for x in obs]
        else:
            observable = observable_from_dict(obs, system)
        schedules = data.pop("schedules", None)
        if schedules is not None:
            schedules = [CylinderSchedule.from_dict(s) for s in schedules]
        if "eta_grid" in data:
            data["eta_grid"] = tuple(float(x) for x in data["eta_grid"])
        try:
            return cls(system=system, observable=observable, schedules=schedules, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def summary(self) -> dict:
        return {
            "name": self.name,
            "system": self.system.to_dict(),
            "epsilons": [str(e) for e in self.epsilons],
            "ks": list(self.ks),
            "ns": list(self.ns),
            "Ms": list(self.Ms),
            "sample_count": self.sample_count,
            "seed": self.seed,
            "oscillation_mode": self.oscillation_mode,
            "eta_grid": list(self.eta_grid),
        }


@dataclass
class CLTRunResult:
    l: int
    set_summary: dict
    conditions: ConditionReport
    s_l: float
    ks: DistributionDistance | None
    sample_count: int
    mode: str
    degenerate: bool
    mean: float
    total_variance: float
    extras: dict = field(default_factory=dict)
    wall_time: float = 0.0
    normalized: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        """Deterministic report content (wall time is left out)."""
        return {
            "l": self.l,
            "set": self.set_summary,
            "conditions": self.conditions.to_dict(),
            "s_l": self.s_l,
            "ks": None if self.ks is None else self.ks.to_dict(),
            "sample_count": self.sample_count,
            "mode": self.mode,
            "degenerate": self.degenerate,
            "mean": self.mean,
            "total_variance": self.total_variance,
            "extras": self.extras,
        }


# ----------------------------------------------------------------------
# shared Monte Carlo machinery
# ----------------------------------------------------------------------
def _run_batches(fn, workers: int, batches: int = NUM_BATCHES) -> list:
    """``[fn(b) for b in range(batches)]``, possibly on several threads."""
    if workers <= 1:
        return [fn(b) for b in range(batches)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(batches)))


def _set_sums(indep, h, plan: ExperimentPlan, l: int, tag: str):
    """Block and gap sums over the whole set (exact) or a uniform sample."""
    n = indep.n
    M = getattr(indep, "M_", 0)
    starts = indep.block_starts
    if indep.cardinality <= plan.exact_limit:
        _, W = indep.materialize(plan.exact_limit)
        B, G = array_sums(h, W, starts, n, M)
        return B, G, "exact", W
    sizes = batch_sizes(plan.sample_count)

    def work(b):
        if sizes[b] == 0:
            return np.zeros((0, len(starts))), np.zeros((0, len(starts)))
        _, W = sample_uniform(indep, plan.seed, sizes[b], path=(tag, l, b))
        return array_sums(h, W, starts, n, M)

    parts = _run_batches(work, plan.workers)
    B = np.concatenate([p[0] for p in parts])
    G = np.concatenate([p[1] for p in parts])
    return B, G, "monte-carlo", None


def _oscillations(indep, h, plan, B, W):
    system, eps, n = indep.system_, indep.epsilon_, indep.n
    single = h if not isinstance(h, (list, tuple)) else None
    if plan.oscillation_mode == "exact" and W is not None:
        starts = indep.block_starts
        if single is None:
            raise ConfigError("exact oscillations need a single observable")
        osc = set_oscillations(system, W, B, starts, n, 4 * eps)
        uni = set_oscillations(system, W, B, starts[:1], n, 2 * eps)[:, 0]
        return osc, uni, "exact"
    hs = [single] * len(indep.block_starts) if single is not None else list(h)
    osc = np.array([oscillation_bound(hi, system, 4 * eps, n) for hi in hs])
    uni = oscillation_bound(hs[0], system, 2 * eps, n)
    return osc[None, :], uni, "bound"


def _clt_result(l, indep, h, plan, tag, summary, t0) -> CLTRunResult:
    B, G, mode, W = _set_sums(indep, h, plan, l, tag)
    M = getattr(indep, "M_", 0)
    osc, uni, osc_mode = _oscillations(indep, h, plan, B, W)
    cond = conditions_from_sums(B, G if M else None, osc, uni, plan.eta_grid, mode, osc_mode)
    total = B.sum(axis=1) + G.sum(axis=1)
    mean = float(total.mean())
    total_var = float(((total - mean) ** 2).mean())
    ks, z = None, None
    if not cond.degenerate:
        z = (total - mean) / cond.s_l
        ks = ks_distance(z)
    return CLTRunResult(
        l=l, set_summary=summary, conditions=cond, s_l=cond.s_l, ks=ks,
        sample_count=int(B.shape[0]), mode=mode, degenerate=cond.degenerate,
        mean=mean, total_variance=total_var, wall_time=time.perf_counter() - t0,
        normalized=z,
    )


def _global_set(plan: ExperimentPlan, l: int) -> GlobalIndependentSet:
    return GlobalIndependentSet(
        epsilon=plan.epsilons[l], k=plan.ks[l], n=plan.ns[l], M=plan.Ms[l],
        budget=plan.enumeration_budget,
    ).fit(plan.system)


def _global_summary(indep: GlobalIndependentSet) -> dict:
    return {
        "kind": "global",
        "epsilon": str(indep.epsilon_),
        "k": indep.k,
        "n": indep.n,
        "M": indep.M_,
        "size_E": int(indep.E_.shape[0]),
        "period": indep.total_period,
        "validation": dict(indep.report_),
        "Y": "P_l" if indep.cardinality else "",
    }


# ----------------------------------------------------------------------
# CLT experiments
# ----------------------------------------------------------------------
def run_global_clt(plan: ExperimentPlan) -> list:
    """Normalized sums under the uniform measure on each global set."""
    out = []
    for l in range(plan.length):
        t0 = time.perf_counter()
        indep = _global_set(plan, l)
        h = plan.observable_at(l)
        res = _clt_result(l, indep, h, plan, "clt-global", _global_summary(indep), t0)
        sup = max(abs(v) for v in (h if isinstance(h, list) else [h])[0].bounds())
        res.extras["sup_norm"] = sup
        res.extras["gap_bound"] = (
            (indep.k * indep.M_ * sup) ** 2 / res.s_l ** 2 if res.s_l > 0 else float("inf"))
        res.extras["lindeberg_zero_guaranteed"] = {
            repr(float(eta)): bool(2 * indep.n * sup <= eta * res.s_l) for eta in plan.eta_grid}
        out.append(res)
    return out


def run_local_clt(plan: ExperimentPlan) -> list:
    """Normalized sums under the uniform measure on each local set."""
    if plan.schedules is None:
        raise ConfigError("local plans need schedules")
    out = []
    for l in range(plan.length):
        t0 = time.perf_counter()
        sched = plan.schedules[l]
        m = None if plan.ms is None else plan.ms[l]
        indep = LocalIndependentSet(
            epsilon=plan.epsilons[l], schedule=sched, m=m, budget=plan.enumeration_budget,
            validation_budget=1 << 12,
        ).fit(plan.system)
        summary = {
            "kind": "local",
            "epsilon": str(indep.epsilon_),
            "schedule": sched.to_dict(),
            "m": indep.m_,
            "sizes": list(indep.sizes_),
            "validation": dict(indep.report_),
            "Y": "P_l",
        }
        h = plan.observable_at(l)
        res = _clt_result(l, indep, h, plan, "clt-local", summary, t0)
        res.extras["negligibility"] = {repr(float(k)): v for k, v in res.conditions.negligibility.items()}
        out.append(res)
    return out


def run_weighted_clt(plan: ExperimentPlan) -> list:
    """Normalized sums under the weighted measure spreading each ``p`` over
    ``Q(p)``; small instances only."""
    out = []
    for l in range(plan.length):
        t0 = time.perf_counter()
        indep = _global_set(plan, l)
        h = plan.observable_at(l)
        wm = weighted_measure(indep, budget=plan.enumeration_budget)
        K = indep.total_period
        q_total = h.position_values(wm.support).sum(axis=1)
        p_total = h.position_values(wm.p_words).sum(axis=1)
        w = np.array([float(x) for x in wm.weights])
        mean_w = float(np.dot(w, q_total))
        mean_p = float(p_total.mean())
        B, G = array_sums(h, wm.p_words, indep.block_starts, indep.n, indep.M_)
        osc, uni, osc_mode = _oscillations(indep, h, plan, B, wm.p_words)
        cond = conditions_from_sums(B, G if indep.M_ else None, osc, uni, plan.eta_grid,
                                    "exact", osc_mode)
        ks, z = None, None
        if not cond.degenerate:
            z = (q_total - mean_w) / cond.s_l
            ks = ks_distance(z, weights=w)
        shift = max(float(np.abs(q_total[q] - p_total[j]).max()) for j, q in enumerate(wm.Q))
        sup = max(abs(v) for v in h.bounds())
        res = CLTRunResult(
            l=l, set_summary=_global_summary(indep), conditions=cond, s_l=cond.s_l, ks=ks,
            sample_count=len(q_total), mode="exact", degenerate=cond.degenerate,
            mean=mean_w, total_variance=float(np.dot(w, (q_total - mean_w) ** 2)),
            wall_time=time.perf_counter() - t0, normalized=z,
        )
        res.extras.update({
            "mean_uniform": mean_p,
            "mean_shift": abs(mean_w - mean_p),
            "mean_shift_bound": shift,
            "weights_sum": str(sum(wm.weights, Fraction(0))),
            "support_size": len(q_total),
            "hypothesis_ratio": ((indep.k * indep.M_ * sup) ** 2 / cond.s_l ** 2
                                 if cond.s_l > 0 else float("inf")),
            "period": K,
        })
        out.append(res)
    return out


# ----------------------------------------------------------------------
# measure of maximal entropy
# ----------------------------------------------------------------------
class ParryMeasure(BaseEstimator):
    """Measure of maximal entropy of a primitive subshift of finite type.

    Attributes
    ----------
    perron_root_ : float
    right_, left_ : ndarray
        Positive Perron vectors of ``A`` and ``A.T``, normalized to sum 1.
    entropy_ : float
        ``log(perron_root_)``.
    """

    def __init__(self, tol=1e-12, max_iter=1_000_000):
        self.tol = tol
        self.max_iter = max_iter

    def _perron_vector(self, A):
        # A + I has the same Perron vector and is aperiodic
        B = A + np.eye(A.shape[0])
        v = np.full(A.shape[0], 1.0 / A.shape[0])
        for _ in range(self.max_iter):
            w = B @ v
            w /= w.sum()
            if np.abs(w - v).max() <= self.tol * np.abs(w).max():
                return w
            v = w
        raise NotPrimitive("power iteration did not converge")

    def fit(self, system: SymbolicSystem, y=None):
        A = system.A.astype(float)
        self.system_ = system
        self.right_ = self._perron_vector(A)
        self.left_ = self._perron_vector(A.T)
        self.perron_root_ = float((A @ self.right_).sum() / self.right_.sum())
        self.entropy_ = log(self.perron_root_)
        self._norm = float(self.left_ @ self.right_)
        return self

    def cylinder(self, word: Sequence[int]) -> float:
        w = [int(s) for s in word]
        if not w:
            return 1.0
        if not self.system_.is_admissible(w):
            return 0.0
        return float(self.left_[w[0]] * self.right_[w[-1]]
                     / self.perron_root_ ** (len(w) - 1) / self._norm)

    def symbol_marginals(self) -> np.ndarray:
        return self.left_ * self.right_ / self._norm


def parry(system: SymbolicSystem) -> ParryMeasure:
    return ParryMeasure().fit(system)


def cylinder_frequency(system: SymbolicSystem, n: int, word: Sequence[int]) -> Fraction:
    """``nu_{P_n}([w])``: share of ``P_n`` whose word starts with ``w``."""
    w = [int(s) for s in word]
    if not 1 <= len(w) <= n:
        raise ValueError("need 1 <= |w| <= n")
    total = system.integer_power(n)
    trace = sum(int(total[i, i]) for i in range(system.num_symbols))
    if not system.is_admissible(w):
        return Fraction(0)
    paths = system.integer_power(n - len(w) + 1)[w[-1], w[0]]
    return Fraction(int(paths), trace)


def cylinder_family(system: SymbolicSystem, max_len: int) -> list:
    """All admissible words of length ``1..max_len``, shortest first."""
    out = []
    for L in range(1, max_len + 1):
        out += [w for w in product(range(system.num_symbols), repeat=L) if system.is_admissible(w)]
    return out


def _prefix_frequencies(words: np.ndarray, family: Sequence[tuple]) -> np.ndarray:
    out = np.empty(len(family))
    for j, w in enumerate(family):
        out[j] = np.all(words[:, : len(w)] == np.asarray(w, dtype=words.dtype), axis=1).mean()
    return out


def mme_table(system: SymbolicSystem, ns: Sequence[int], word=(0,)) -> list:
    """``|nu_{P_n}([w]) - mu([w])|`` for each ``n`` (exact rationals vs float)."""
    mu = parry(system)
    target = mu.cylinder(word)
    rows = []
    for n in ns:
        f = cylinder_frequency(system, n, word)
        rows.append({"n": n, "frequency": str(f), "value": float(f), "parry": target,
                     "discrepancy": abs(float(f) - target)})
    return rows


def run_mme_convergence(plan: ExperimentPlan, max_len: int = 3) -> list:
    """Cylinder discrepancies of the independent sets and of ``P_K``."""
    mu = parry(plan.system)
    family = cylinder_family(plan.system, max_len)
    ref = np.array([mu.cylinder(w) for w in family])
    rows = []
    for l in range(plan.length):
        indep = _global_set(plan, l)
        K = indep.total_period
        if max_len > indep.head_:
            raise ConfigError("test cylinders longer than the copied head")
        # the first head_ symbols of Phi(x) are those of E[x_1]
        exact = np.array([float(Fraction(int(np.all(indep.E_[:, : len(w)] == w, axis=1).sum()),
                                         indep.E_.shape[0])) for w in family])
        sizes = batch_sizes(plan.sample_count)

        def work(b):
            if sizes[b] == 0:
                return np.zeros((0, max_len), dtype=np.uint8)
            _, W = sample_uniform(indep, plan.seed, sizes[b], path=("mme", l, b))
            return W[:, :max_len]

        heads = np.concatenate(_run_batches(work, plan.workers))
        sampled = _prefix_frequencies(heads, family)
        periodic = np.array([float(cylinder_frequency(plan.system, K, w)) for w in family])
        rows.append({
            "l": l,
            "period": K,
            "max_discrepancy_sampled": float(np.abs(sampled - ref).max()),
            "max_discrepancy_exact": float(np.abs(exact - ref).max()),
            "max_discrepancy_periodic": float(np.abs(periodic - ref).max()),
            "worst_word": "".join(map(str, family[int(np.abs(exact - ref).argmax())])),
            "sample_count": int(heads.shape[0]),
        })
    for key in ("max_discrepancy_sampled", "max_discrepancy_exact"):
        vals = [r[key] for r in rows]
        flag = all(b <= a for a, b in zip(vals, vals[1:]))
        for r in rows:
            r[key.replace("max_discrepancy", "monotone")] = flag
    return rows


# ----------------------------------------------------------------------
# concentration and equidistribution
# ----------------------------------------------------------------------
def orbit_discrepancy(system: SymbolicSystem, p: PeriodicPoint, family=None,
                      mu: ParryMeasure | None = None, max_len: int = 3) -> float:
    """Max over test cylinders of |orbit frequency - Parry measure|."""
    mu = mu or parry(system)
    family = family or cylinder_family(system, max_len)
    word = np.asarray(p.word, dtype=np.uint8)[None, :]
    L = max(len(w) for w in family)
    U = unroll_rows(word, p.period + L)[0]
    rot = np.stack([U[j:j + L] for j in range(p.period)])
    freq = _prefix_frequencies(rot, family)
    return float(np.abs(freq - np.array([mu.cylinder(w) for w in family])).max())


def run_birkhoff_concentration(plan: ExperimentPlan, orbit_points: int = 8,
                               max_len: int = 3) -> list:
    """Mass of ``{|(S^N h - E)/N| <= k^{-1/2+eta}}`` and orbit equidistribution."""
    mu = parry(plan.system)
    family = cylinder_family(plan.system, max_len)
    rows = []
    for l in range(plan.length):
        indep = _global_set(plan, l)
        h = plan.observable_at(l)
        B, G, mode, _ = _set_sums(indep, h, plan, l, "concentration")
        total = B.sum(axis=1) + G.sum(axis=1)
        N = indep.total_period
        dev = np.abs(total - total.mean()) / N
        radius = indep.k ** (-0.5 + plan.eta)
        rng = stream(plan.seed, "orbit", l)
        X = rng.integers(0, np.asarray(indep.sizes_), size=(orbit_points, indep.k))
        W = indep.transform(X)
        discs = [orbit_discrepancy(plan.system, PeriodicPoint(tuple(w)), family, mu) for w in W.tolist()]
        rows.append({
            "l": l,
            "period": N,
            "radius": radius,
            "mass": float((dev <= radius).mean()),
            "mode": mode,
            "sample_count": int(len(total)),
            "orbit_discrepancy_max": max(discs),
            "orbit_discrepancy_mean": float(np.mean(discs)),
        })
    return rows


# ----------------------------------------------------------------------
# mixture CLT
# ----------------------------------------------------------------------
def _cells_disjoint(a: CylinderSchedule, b: CylinderSchedule) -> bool:
    for ca, cb in zip(a.cylinders, b.cylinders):
        if any(x != y for x, y in zip(ca, cb)):
            return True
    return False


@dataclass
class MixturePlan:
    """Partition of ``U_l`` into cylinder cells, one list of schedules per ``l``.

    The conditional measure on a cell ``A`` is the uniform measure on
    ``P_j cap A`` with ``j = k_l n_l + tail``; the free tail lets the cell
    masses approach their values under the measure of maximal entropy.
    """

    system: SymbolicSystem
    observable: Observable
    cells: list
    tail: int = 24
    sample_count: int = 100_000
    estimate_count: int = 100_000
    seed: int = 0
    workers: int = 1
    epsilon: object = None
    name: str = "mixture"

    def __post_init__(self):
        if not self.cells:
            raise ConfigError("at least one l is required")
        for family in self.cells:
            if not family:
                raise ConfigError("every l needs at least one cell")
            k, n = family[0].k, family[0].n
            if any(c.k != k or c.n != n for c in family):
                raise ConfigError("cells of one l must share k and n")
            for i, a in enumerate(family):
                for b in family[i + 1:]:
                    if not _cells_disjoint(a, b):
                        raise ConfigError("cells must be pairwise disjoint")
        if self.tail < 0 or self.sample_count < 1 or self.estimate_count < 2:
            raise ConfigError("invalid tail or sample counts")
        if self.epsilon is None:
            self.epsilon = self.system.expansiveness_constant / 3
        self.epsilon = as_fraction(self.epsilon)

    @classmethod
    def by_block_words(cls, system, observable, words, ks, n, **kwargs):
        """Cell ``c`` pins every block start to ``words[c]``."""
        cells = [[CylinderSchedule.repeated(k, n, w) for w in words] for k in ks]
        return cls(system=system, observable=observable, cells=cells, **kwargs)

    @property
    def length(self) -> int:
        return len(self.cells)

    @classmethod
    def from_dict(cls, data: Mapping):
        data = dict(data)
        system = SymbolicSystem.from_dict(data.pop("system"))
        observable = observable_from_dict(data.pop("observable"), system)
        try:
            if "cell_words" in data:
                words = [tuple(w) for w in data.pop("cell_words")]
                return cls.by_block_words(system, observable, words, data.pop("ks"),
                                          int(data.pop("n")), **data)
            cells = [[CylinderSchedule.from_dict(c) for c in fam] for fam in data.pop("cells")]
            return cls(system=system, observable=observable, cells=cells, **data)
        except (TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc


def _block_stats(h, W, k, n):
    B, _ = array_sums(h, W, [i * n for i in range(k)], n)
    return B


def _third_ratio(B: np.ndarray) -> float:
    c = B - B.mean(axis=0)
    v = (c ** 2).mean(axis=0)
    m3 = (np.abs(c) ** 3).mean(axis=0)
    ok = v > 1e-15
    return float((m3[ok] / v[ok] ** 1.5).max()) if ok.any() else 0.0


def _atom_w1(prev: NormalMixture, cur: NormalMixture) -> float:
    from scipy.stats import wasserstein_distance

    return float(wasserstein_distance(prev.sigmas, cur.sigmas, prev.probs, cur.probs))


def run_mixture_clt(plan: MixturePlan, keep_samples: bool = False) -> list:
    """Pooled cell-centred sums against the normal mixture with one atom
    ``s_{l,A} / s_l`` per cell, weighted by the cell masses.

    With ``keep_samples`` each row also carries the normalized pooled sample
    under ``"normalized"`` (an array, left out of serialized reports).
    """
    h = plan.observable
    rows, prev = [], None
    for l, family in enumerate(plan.cells):
        k, n = family[0].k, family[0].n
        W_len = k * n
        j = W_len + plan.tail
        constraints = [CyclicConstraint(plan.system, j, c.pins(j)) for c in family]
        counts = [C.count() for C in constraints]
        live = [i for i, c in enumerate(counts) if c > 0]
        if not live:
            raise ConfigError("every cell is empty")
        total_count = sum(counts)
        probs = [Fraction(c, total_count) for c in counts]

        est_sizes = batch_sizes(plan.estimate_count)
        cell_stats = []
        for ci in range(len(family)):
            if counts[ci] == 0:
                cell_stats.append(None)
                continue
            C = constraints[ci]

            def work(b, C=C, ci=ci):
                if est_sizes[b] == 0:
                    return np.zeros((0, k))
                W = C.sample(stream(plan.seed, "mixture-estimate", l, ci, b), est_sizes[b])
                return _block_stats(h, W, k, n)

            B = np.concatenate(_run_batches(work, plan.workers))
            tot = B.sum(axis=1)
            mean = float(tot.mean())
            cell_stats.append({
                "mean": mean,
                "variance": float(((tot - mean) ** 2).mean()),
                "third_moment_ratio": _third_ratio(B),
            })
        s2 = max(cs["variance"] for cs in cell_stats if cs is not None)
        s = sqrt(s2)
        degenerate = s2 == 0
        atoms = [sqrt(cs["variance"]) / s if cs is not None and not degenerate else 0.0
                 for cs in cell_stats]
        mixture = NormalMixture(tuple(atoms[i] for i in live),
                                tuple(float(probs[i]) for i in live))
        pooled_var = sum(float(probs[i]) * atoms[i] ** 2 for i in live)
        single = NormalMixture((sqrt(pooled_var),), (1.0,))

        p_float = np.array([float(p) for p in probs])
        p_float /= p_float.sum()
        pool_sizes = batch_sizes(plan.sample_count)

        def pool(b):
            rng = stream(plan.seed, "mixture-pool", l, b)
            per_cell = rng.multinomial(pool_sizes[b], p_float)
            parts = []
            for ci, m in enumerate(per_cell):
                if m == 0:
                    continue
                W = constraints[ci].sample(rng, int(m))
                tot = _block_stats(h, W, k, n).sum(axis=1)
                parts.append(tot - cell_stats[ci]["mean"])
            return np.concatenate(parts) if parts else np.zeros(0)

        z = np.concatenate(_run_batches(pool, plan.workers))
        ks_mix = ks_single = None
        if not degenerate:
            z = z / s
            ks_mix = ks_distance(z, mixture)
            ks_single = ks_distance(z, single) if pooled_var > 0 else None
        positive = [cs["variance"] for cs in cell_stats if cs is not None and cs["variance"] > 0]
        nonzero_all = all(cell_stats[i]["variance"] > 0 for i in live)
        hetero = (max(positive) / min(positive) if positive and nonzero_all else float("inf"))
        L = plan.system.ball_length(j, plan.epsilon)
        thick = [CyclicConstraint(plan.system, j, {p: s for p, s in c.pins(j).items() if p < L}).count()
                 for c in family]
        coverage = Fraction(total_count, count_periodic(plan.system, j))
        row = {
            "l": l,
            "k": k,
            "n": n,
            "j": j,
            "cells": [
                {"schedule_word": list(c.cylinders[0]), "count": str(counts[i]),
                 "probability": float(probs[i]),
                 **({} if cell_stats[i] is None else cell_stats[i]),
                 "sigma_atom": atoms[i],
                 "thickening_ratio": (float(Fraction(thick[i], counts[i])) if counts[i] else None)}
                for i, c in enumerate(family)
            ],
            "s_l": s,
            "degenerate": degenerate,
            "variance_ratio": hetero,
            "ks_mixture": None if ks_mix is None else ks_mix.ks_statistic,
            "ks_single_normal": None if ks_single is None else ks_single.ks_statistic,
            "mixture": mixture.to_dict(),
            "third_moment_K": max(cs["third_moment_ratio"] for cs in cell_stats if cs is not None),
            "coverage_deficiency": float(1 - coverage),
            "coverage_deficiency_times_k": float((1 - coverage) * k),
            "sigma_field_w1_to_previous": None if prev is None else _atom_w1(prev, mixture),
            "sample_count": int(len(z)),
        }
        if keep_samples:
            row["normalized"] = None if degenerate else z
        prev = mixture
        rows.append(row)
    return rows


# ----------------------------------------------------------------------
# wildly oscillating functions
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class WildStep:
    """Data for one ``l``: cylinder partition depth, radius, window, block."""

    depth: int
    epsilon: object
    W: int
    n: int

    @property
    def k(self) -> int:
        return self.W // self.n


def _depth_table(h: Observable, system: SymbolicSystem):
    """Value table of a finitely-reading observable on admissible words."""
    D = h.read_depth
    words = [w for w in product(range(system.num_symbols), repeat=D) if system.is_admissible(w)]
    return D, {w: float(h.evaluate(PeriodicPoint(w))) for w in words}


def _segment_moments(values: np.ndarray, weights: np.ndarray):
    w = weights / weights.sum()
    mean = float(w @ values)
    c = values - mean
    return float(w @ c ** 2)


def _markov_variances(h, system, step: WildStep, parry_mu: ParryMeasure):
    """Max conditional variances on the cells of the joined cylinder partition.

    Under the measure of maximal entropy the fillers between pinned words
    are uniform given their endpoints, so block sums are independent given
    the cell and their variances add.
    """
    D, table = _depth_table(h, system)
    d, n, k = step.depth, step.n, step.k
    if D - 1 > d or d > n:
        raise ConfigError("exact engine needs read depth <= partition depth + 1 <= n + 1")
    S = system.num_symbols
    pins = [w for w in product(range(S), repeat=d) if system.is_admissible(w)]
    fillers = list(product(range(S), repeat=n - d))

    def sums(word, upto):
        return np.array([sum(table[word[t:t + D]] for t in range(r)) for r in range(1, upto + 1)])

    # pair[(c, c')] = (variance of full block sum, max partial-sum variance)
    pair = {}
    for c in pins:
        for c2 in pins:
            vals = [sums(c + f + c2[:D - 1], n) for f in fillers if system.is_admissible(c + f + c2)]
            if vals:
                V = np.array(vals)
                var = V.var(axis=0)
                pair[(c, c2)] = (float(var[-1]), float(var[:-1].max()) if n > 1 else 0.0)
    # last block: filler followed by a free tail weighted by the right Perron vector
    tail = {}
    for c in pins:
        vals, wts = [], []
        for f in product(range(S), repeat=n - d + D - 1):
            word = c + f
            if system.is_admissible(word):
                vals.append(sums(word, n))
                wts.append(parry_mu.right_[word[-1]])
        V, w = np.array(vals), np.array(wts)
        var = [_segment_moments(V[:, r], w) for r in range(n)]
        tail[c] = (var[-1], max(var[:-1]) if n > 1 else 0.0)

    # max-plus recursion over the k pinned blocks
    best = {c: tail[c][0] for c in pins}
    alive = {c: True for c in pins}
    for _ in range(k - 1):
        nxt = {}
        for c in pins:
            cands = [pair[(c, c2)][0] + best[c2] for c2 in pins if (c, c2) in pair and c2 in best]
            if cands:
                nxt[c] = max(cands)
        best = nxt
        alive = {c: c in best for c in pins}
    s2 = max(best.values())
    # first block partial sums, over cells that extend to k blocks
    if k == 1:
        partial = max(tail[c][1] for c in pins)
    else:
        reach = {c: True for c in pins}
        for _ in range(k - 2):
            reach = {c: any((c, c2) in pair and reach.get(c2) for c2 in pins) for c in pins}
        partial = max(pair[(c, c2)][1] for (c, c2) in pair if alive.get(c) and reach.get(c2))
    return s2, partial


def _geometric_variances(h: GeometricWeight, system: SymbolicSystem, step: WildStep):
    """Full shift, ``h = sum lam^s phi(x_s)``: sums are linear in i.i.d. symbols."""
    if not np.all(system.A == 1):
        raise ConfigError("the geometric engine needs a full shift")
    lam = float(h.decay)
    phi = np.array([float(v) for v in h.phi])
    var_phi = float(phi.var())
    d, n, k = step.depth, step.n, step.k
    extra = int(np.ceil(np.log(1e-18) / np.log(lam))) + 1

    def var_sum(R):
        t = np.arange(R + extra)
        lo = np.maximum(0, t - R + 1)
        c = (lam ** lo - lam ** (t + 1)) / (1 - lam)
        free = ~((t < k * n) & (t % n < d))
        return var_phi * float((c[free] ** 2).sum())

    s2 = var_sum(k * n)
    partial = max((var_sum(r) for r in range(1, n)), default=0.0)
    return s2, partial


def check_wildly_oscillating(h: Observable, data: Sequence, system: SymbolicSystem,
                             threshold: float = 0.1) -> dict:
    """Finite-range evaluation of the two defining ratios.

    ``data`` is a sequence of :class:`WildStep` (or tuples
    ``(depth, eps, W, n)``); step ``l`` uses the partition into depth-``d_l``
    cylinders joined over the ``k_l = W_l // n_l`` block starts.  Variances
    are exact under the measure of maximal entropy; oscillations use the
    uniform bound.  The verdict only describes the supplied range.
    """
    steps = [s if isinstance(s, WildStep) else WildStep(*s) for s in data]
    mu = parry(system)
    rows = []
    for l, st in enumerate(steps):
        if st.W < st.n or st.n < 1 or st.depth < 1:
            raise ConfigError("need W >= n >= 1 and a positive depth")
        eps = as_fraction(st.epsilon)
        if isinstance(h, GeometricWeight):
            s2, partial = _geometric_variances(h, system, st)
        else:
            s2, partial = _markov_variances(h, system, st, mu)
        omega = oscillation_bound(h, system, eps, st.n)
        s = sqrt(max(s2, 0.0))
        rows.append({
            "l": l,
            "k": st.k,
            "n": st.n,
            "W": st.W,
            "depth": st.depth,
            "epsilon": str(eps),
            "diameter_ok": st.depth >= system.ball_length(1, eps),
            "s_l": s,
            "short_sum_ratio": partial / s2 if s2 > 0 else float("inf"),
            "oscillation_ratio": st.k * omega ** 2 / s2 if s2 > 0 else float("inf"),
            "oscillation_bound": omega,
        })

    def nonincreasing(key):
        vals = [r[key] for r in rows]
        return all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    s_vals = [r["s_l"] for r in rows]
    s_growing = all(b > a for a, b in zip(s_vals, s_vals[1:])) and s_vals[-1] > 0
    cond1 = s_growing and nonincreasing("short_sum_ratio") and rows[-1]["short_sum_ratio"] < threshold
    cond2 = nonincreasing("oscillation_ratio") and rows[-1]["oscillation_ratio"] < threshold
    return {
        "rows": rows,
        "s_increasing": s_growing,
        "condition_1": cond1,
        "condition_2": cond2,
        "diameters_ok": all(r["diameter_ok"] for r in rows),
        "threshold": threshold,
        "verdict": bool(cond1 and cond2 and all(r["diameter_ok"] for r in rows)),
    }
