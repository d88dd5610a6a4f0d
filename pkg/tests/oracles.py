"""Brute-force oracles shared by several test modules."""

from fractions import Fraction

from periodic_clt.observables import evaluate
from periodic_clt.systems import PeriodicPoint, enumerate_periodic, shift_point


def exact_components(h, indep):
    """Independent re-summation in rational arithmetic, point by point."""
    X, W = indep.materialize(indep.cardinality)
    E_pts = [[PeriodicPoint(tuple(r)) for r in E.tolist()] for E in indep.E_list_]
    hx = [[Fraction(evaluate(h, p)) for p in pts] for pts in E_pts]
    ambient = enumerate_periodic(indep.system_, indep.m_)
    ep = sum((Fraction(evaluate(h, p)) for p in ambient), Fraction(0)) / len(ambient)
    e_loc = [sum(v, Fraction(0)) / len(v) for v in hx]
    out = dict.fromkeys(["var_per", "var_loc", "var_tot", "cov"], Fraction(0))
    for x, w in zip(X.tolist(), W.tolist()):
        p = PeriodicPoint(tuple(w))
        for i, a in enumerate(indep.block_starts):
            v = Fraction(evaluate(h, shift_point(p, a)))
            u = hx[i][x[i]]
            out["var_per"] += (v - u) ** 2
            out["var_loc"] += (u - e_loc[i]) ** 2
            out["var_tot"] += (v - ep) ** 2
            out["cov"] += (v - u) * (u - ep)
    out["var_hoel"] = len(X) * sum(((e - ep) ** 2 for e in e_loc), Fraction(0))
    out["mean"] = ep
    return out
