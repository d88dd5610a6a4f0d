"""Seeded random instances shared by the decomposition tests."""

from fractions import Fraction
from itertools import product

import numpy as np

from periodic_clt.exceptions import IncompatibleSchedule
from periodic_clt.indep import CylinderSchedule, LocalIndependentSet
from periodic_clt.observables import GeometricWeight, LocallyConstant, SymbolIndicator
from periodic_clt.systems import SymbolicSystem


def random_observable(rng, system):
    kind = rng.integers(3)
    if kind == 0:
        decay = Fraction(int(rng.integers(1, 4)), int(rng.integers(4, 8)))
        phi = [Fraction(int(v), 3) for v in rng.integers(-6, 7, size=system.num_symbols)]
        return GeometricWeight(decay, phi)
    if kind == 1:
        depth = int(rng.integers(1, 5))
        words = [w for w in product(range(system.num_symbols), repeat=depth) if system.is_admissible(w)]
        table = {w: Fraction(int(rng.integers(-5, 6)), int(rng.integers(1, 4))) for w in words}
        return LocallyConstant(depth, table, system)
    length = int(rng.integers(1, 4))
    word = tuple(int(s) for s in rng.integers(0, system.num_symbols, size=length))
    return SymbolIndicator(word, offset=Fraction(int(rng.integers(-2, 3)), 2))


def random_instance(rng, max_size=400):
    """(system, schedule, observable, fitted local set) with a random offset."""
    while True:
        system = [SymbolicSystem.full_shift(2), SymbolicSystem.golden_mean()][rng.integers(2)]
        k = int(rng.integers(1, 4))
        n = int(rng.integers(3, 6))
        depth = int(rng.integers(2, n + 1))
        pins = []
        for _ in range(k):
            w = tuple(int(s) for s in rng.integers(0, 2, size=depth))
            pins.append(w)
        if not all(system.is_admissible(w) for w in pins):
            continue
        schedule = CylinderSchedule(k, n, tuple(pins))
        offset = int(rng.integers(0, 6))
        try:
            indep = LocalIndependentSet("1/4", schedule, candidate_offset=offset).fit(system)
        except IncompatibleSchedule:
            continue
        if indep.cardinality > max_size:
            continue
        return system, schedule, random_observable(rng, system), indep


def instances(count, seed=0, max_size=400):
    rng = np.random.default_rng(seed)
    return [random_instance(rng, max_size) for _ in range(count)]
