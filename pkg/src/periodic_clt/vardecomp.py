"""Decomposition of the total variation of block values over a local set.

For a locally independent set ``P`` with product index set
``F = E_1 x ... x E_k`` and bijection ``Phi``, the deviation of
``h(T^{(i-1)n} p)`` from the ambient periodic mean splits into a periodic
part ``h(T^{(i-1)n} p) - h(x_i(p))``, a local part
``h(x_i) - E_{E_i} h`` and a Hoelder part ``E_{E_i} h - E_{P_kn} h``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import product
from math import fsum, sqrt

import numpy as np

from .exceptions import BudgetExceeded
from .harness import cylinder_frequency
from .indep import CylinderSchedule, LocalIndependentSet
from .observables import GeometricWeight, Observable
from .systems import DEFAULT_ENUMERATION_BUDGET, PeriodicPoint, SymbolicSystem, periodic_words


@dataclass
class VarDecomp:
    """The four variations, the cross term and the identity residual.

    ``var_loc`` counts every ``x_i`` with its multiplicity ``|F| / |E_i|``
    in ``F``; ``var_loc_unweighted`` is the plain sum over ``E_i``.
    """

    var_per: float
    var_loc: float
    var_hoel: float
    var_tot: float
    cov: float
    residual: float
    cs_slack: float
    var_loc_unweighted: float
    periodic_mean: float
    size: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ProductChoice:
    """A fitted candidate product set together with its objective values."""

    schedule: CylinderSchedule
    indep: LocalIndependentSet
    candidate_offset: int
    var_per: float
    var_loc: float
    candidate_count: int = 1
    objectives: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule.to_dict(),
            "epsilon": str(self.indep.epsilon_),
            "m": self.indep.m_,
            "sizes": list(self.indep.sizes_),
            "candidate_offset": self.candidate_offset,
            "var_per": self.var_per,
            "var_loc": self.var_loc,
            "candidate_count": self.candidate_count,
            "objectives": self.objectives,
        }


def periodic_mean(h: Observable, system: SymbolicSystem, m: int,
                  budget: int = DEFAULT_ENUMERATION_BUDGET) -> float:
    """``E_{P_m}(h)``, through cylinder frequencies when ``h`` permits."""
    if isinstance(h, GeometricWeight):
        # shift invariance of P_m: E h = E phi(x_0) / (1 - lam)
        e_phi = sum(float(cylinder_frequency(system, m, (s,))) * float(h.phi[s])
                    for s in range(system.num_symbols))
        return e_phi / (1 - float(h.decay))
    D = h.read_depth
    if D is not None and D <= m:
        total = []
        for w in product(range(system.num_symbols), repeat=D):
            if system.is_admissible(w):
                f = cylinder_frequency(system, m, w)
                if f:
                    val = h.evaluate(PeriodicPoint(w))
                    total.append(float(f) * float(val))
        return fsum(total)
    words = periodic_words(system, m, budget=budget)
    return fsum(h.position_values(words)[:, 0]) / len(words)


def variance_components(h: Observable, choice, budget: int = DEFAULT_ENUMERATION_BUDGET) -> VarDecomp:
    """All components by direct summation over the set.

    ``choice`` is a :class:`ProductChoice` or a fitted
    :class:`LocalIndependentSet`.
    """
    indep = choice.indep if isinstance(choice, ProductChoice) else choice
    if indep.cardinality > budget:
        raise BudgetExceeded(f"|F| = {indep.cardinality} exceeds the budget {budget}")
    X, W = indep.materialize(budget)
    starts = indep.block_starts
    k = len(starts)
    N = X.shape[0]
    orbit = h.position_values(W)[:, starts]
    local = [h.position_values(E)[:, 0] for E in indep.E_list_]
    at_x = np.stack([local[i][X[:, i]] for i in range(k)], axis=1)
    e_local = np.array([fsum(v) / len(v) for v in local])
    ep = periodic_mean(h, indep.system_, indep.m_, budget)

    per_dev = orbit - at_x
    var_per = fsum((per_dev ** 2).ravel())
    var_loc = fsum(((at_x - e_local) ** 2).ravel())
    var_loc_plain = fsum(fsum((v - e) ** 2) for v, e in zip(local, e_local))
    var_hoel = N * fsum((e_local - ep) ** 2)
    var_tot = fsum(((orbit - ep) ** 2).ravel())
    cov = fsum((per_dev * (at_x - ep)).ravel())
    residual = var_tot - fsum([var_per, var_loc, var_hoel, 2 * cov])
    slack = sqrt(max(var_per, 0.0) * max(var_loc + var_hoel, 0.0)) - cov
    return VarDecomp(
        var_per=var_per, var_loc=var_loc, var_hoel=var_hoel, var_tot=var_tot, cov=cov,
        residual=residual, cs_slack=slack, var_loc_unweighted=var_loc_plain,
        periodic_mean=ep, size=N,
    )


def _objectives(h: Observable, indep: LocalIndependentSet, budget: int):
    d = variance_components(h, indep, budget)
    return d.var_per, d.var_loc


def find_clt_admissible(h: Observable, schedule: CylinderSchedule, system: SymbolicSystem,
                        epsilon, generator_budget: int = 8, m: int | None = None,
                        budget: int = DEFAULT_ENUMERATION_BUDGET) -> ProductChoice:
    """Lexicographic minimizer of ``(Var_per, Var_loc)`` over a finite family.

    Candidates are the local sets built with candidate offsets
    ``0 .. generator_budget - 1`` (rotations of the enumeration order);
    duplicates are evaluated once.  Ties keep the smallest offset.
    """
    if generator_budget < 1:
        raise ValueError("generator_budget must be at least 1")
    seen, best, objectives = set(), None, []
    for offset in range(generator_budget):
        indep = LocalIndependentSet(epsilon, schedule, m, candidate_offset=offset,
                                    budget=budget).fit(system)
        key = b"".join(np.ascontiguousarray(E).tobytes() for E in indep.E_list_)
        if key in seen:
            continue
        seen.add(key)
        per, loc = _objectives(h, indep, budget)
        objectives.append({"candidate_offset": offset, "var_per": per, "var_loc": loc})
        if best is None or (per, loc) < (best[1], best[2]):
            best = (indep, per, loc, offset)
    indep, per, loc, offset = best
    return ProductChoice(schedule=schedule, indep=indep, candidate_offset=offset, var_per=per,
                         var_loc=loc, candidate_count=len(objectives), objectives=objectives)

