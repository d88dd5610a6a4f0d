"""Global and local eps-independent sets of periodic points.

A global set lives in ``P_{k(n+M)}``.  It is built from a maximal
``(n, 2 eps)``-separated set ``E`` of ``P_{n+M}`` and a map ``Phi`` from
index tuples to words that copies the first ``n + a(eps)`` symbols of each
chosen point and fills the rest of every gap with a fixed connecting word.

A local set lives in ``P_m``.  Block ``i`` draws its point from the rotated
cylinder constraint ``T^{(i-1)n}(A cap P_m)`` and contributes its first
``n`` symbols; no gaps are needed because the cylinder pins already make
the junctions admissible.

On a shift the Bowen relations ``d_n <= t`` and ``d_n < t`` reduce to
agreement of unrolled prefixes, and agreement of prefixes is an equivalence
relation.  Separation, spanning and shadowing are therefore all checked by
comparing prefix rows, which is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import (
    BudgetExceeded,
    GapTooShort,
    IncompatibleSchedule,
    IndexOutOfRange,
    ValidationFailure,
    WindowTooShort,
)
from .rng import stream
from .systems import (
    DEFAULT_ENUMERATION_BUDGET,
    CyclicConstraint,
    PeriodicPoint,
    SymbolicSystem,
    as_fraction,
    connect_words,
    count_periodic,
    periodic_words,
    spec_parameters,
    unroll_rows,
)

DEFAULT_VALIDATION_BUDGET = 1 << 15


# ----------------------------------------------------------------------
# generic predicates on explicit point lists
# ----------------------------------------------------------------------
def maximal_separated(system: SymbolicSystem, candidates: Sequence[PeriodicPoint],
                      n: int, threshold) -> list:
    """Greedy maximal ``(n, threshold)``-separated subset, in input order.

    A candidate is kept iff its ``d_n`` distance to every kept point
    exceeds ``threshold``.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    L = system.close_length(n, as_fraction(threshold))
    kept, seen = [], set()
    for p in candidates:
        key = p.unrolled(L)
        if key not in seen:
            seen.add(key)
            kept.append(p)
    return kept


def check_spanning(system: SymbolicSystem, E: Sequence[PeriodicPoint],
                   targets: Sequence[PeriodicPoint], n: int, radius):
    """Whether the Bowen balls ``B^n_radius(x)``, ``x in E``, cover ``targets``.

    Returns ``(True, None)`` or ``(False, witness)`` with the first
    uncovered target.
    """
    L = system.ball_length(n, as_fraction(radius))
    centres = {x.unrolled(L) for x in E}
    for q in targets:
        if q.unrolled(L) not in centres:
            return False, q
    return True, None


def _distinct_rows(rows: np.ndarray) -> bool:
    if rows.shape[0] <= 1:
        return True
    return len(_row_set(rows)) == rows.shape[0]


def _cyclic_admissible(system: SymbolicSystem, words: np.ndarray) -> bool:
    nxt = np.roll(words, -1, axis=1)
    return bool(system.A[words, nxt].all())


def _row_set(rows: np.ndarray) -> set:
    rows = np.ascontiguousarray(rows)
    return {r.tobytes() for r in rows}


def _first_occurrences(rows: np.ndarray) -> np.ndarray:
    """Indices of the first occurrence of each distinct row, in row order."""
    rows = np.ascontiguousarray(rows)
    seen, keep = set(), []
    for i, r in enumerate(rows):
        key = r.tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return np.array(keep, dtype=np.int64)


def _test_tuples(sizes, seed_path, budget):
    """All index tuples when there are at most ``budget`` of them, otherwise
    a sub-box of the smallest indices plus a seeded random draw."""
    sizes = list(sizes)
    total = 1
    for s in sizes:
        total *= s
    if total <= budget:
        return np.array(list(product(*[range(s) for s in sizes])), dtype=np.int64).reshape(-1, len(sizes)), True
    side = max(1, int(budget ** (1.0 / len(sizes))))
    box = np.array(list(product(*[range(min(s, side)) for s in sizes])), dtype=np.int64)
    rng = stream(0, *seed_path)
    rand = rng.integers(0, np.asarray(sizes), size=(budget, len(sizes)))
    return np.concatenate([box, rand]), False


class _IndexedSet(BaseEstimator):
    """Shared plumbing for sets with a product index structure."""

    def _check_indices(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != len(self.sizes_):
            raise ValueError(f"index tuples must have length {len(self.sizes_)}")
        if (X < 0).any() or (X >= np.asarray(self.sizes_)).any():
            raise IndexOutOfRange("index tuple out of range")
        return X

    def phi_apply(self, indices: Sequence[int]) -> PeriodicPoint:
        return PeriodicPoint(tuple(self.transform([indices])[0].tolist()))

    @property
    def cardinality(self) -> int:
        c = 1
        for s in self.sizes_:
            c *= s
        return c

    def materialize(self, budget: int = DEFAULT_VALIDATION_BUDGET):
        """All index tuples (lexicographic) and their image words."""
        if self.cardinality > budget:
            raise BudgetExceeded(f"|P| = {self.cardinality} exceeds the budget {budget}")
        X, _ = _test_tuples(self.sizes_, (), budget)
        return X, self.transform(X)


# ----------------------------------------------------------------------
# global sets
# ----------------------------------------------------------------------
class GlobalIndependentSet(_IndexedSet):
    """Global eps-independent set in ``P_{k(n+M)}``.

    Parameters
    ----------
    epsilon : rational
    k, n : int
        Number of blocks and block length.
    M : int, optional
        Gap length; defaults to ``M(eps)``.
    budget : int
        Cap on ``|P_{n+M}|``.
    validate : bool
        Run every invariant check during ``fit``.
    validation_budget : int
        Tuples checked by brute force before switching to a sub-box.

    Attributes
    ----------
    E_ : ndarray of shape (|E|, n+M)
        Lexicographically first representative of each separation class.
    bridges_ : ndarray of shape (S, S, M - a)
        Connecting word between the last copied symbol of one block and the
        first symbol of the next.
    report_ : dict
        Name -> bool for every validation check.
    """

    def __init__(self, epsilon="1/4", k=2, n=2, M=None,
                 budget=DEFAULT_ENUMERATION_BUDGET, validate=True,
                 validation_budget=DEFAULT_VALIDATION_BUDGET):
        self.epsilon = epsilon
        self.k = k
        self.n = n
        self.M = M
        self.budget = budget
        self.validate = validate
        self.validation_budget = validation_budget

    def fit(self, system: SymbolicSystem, y=None):
        eps = as_fraction(self.epsilon)
        if self.k < 1 or self.n < 1:
            raise ValueError("k and n must be positive")
        sp = spec_parameters(system, eps)
        M = sp.M_of_eps if self.M is None else int(self.M)
        if M < sp.M_of_eps:
            raise GapTooShort(f"M = {M} is below M(eps) = {sp.M_of_eps}")
        period = self.n + M
        total = count_periodic(system, period)
        if total > self.budget:
            raise BudgetExceeded(f"|P_{period}| = {total} exceeds the budget {self.budget}")
        C = CyclicConstraint(system, period)
        L_sep = system.close_length(self.n, 2 * eps)
        heads = C.prefixes(L_sep) if L_sep > 0 else C.prefixes(1)[:1]
        E = C.complete(heads)
        a = sp.agreement_depth
        gap = M - a
        S = system.num_symbols
        bridges = np.zeros((S, S, gap), dtype=np.uint8)
        for s in range(S):
            for t in range(S):
                bridges[s, t] = connect_words(system, s, t, gap)

        self.system_ = system
        self.spec_ = sp
        self.epsilon_ = eps
        self.M_ = M
        self.period_ = period
        self.head_ = self.n + a
        self.E_ = E
        self.bridges_ = bridges
        self.sizes_ = [E.shape[0]] * self.k
        self.report_ = self.validation_report() if self.validate else {}
        if self.validate and not all(self.report_.values()):
            failed = [name for name, ok in self.report_.items() if not ok]
            raise ValidationFailure(f"failed checks: {failed}")
        return self

    @property
    def E_points(self) -> list:
        return [PeriodicPoint(tuple(r)) for r in self.E_.tolist()]

    @property
    def total_period(self) -> int:
        return self.k * self.period_

    @property
    def block_starts(self) -> list:
        return [i * self.period_ for i in range(self.k)]

    def transform(self, X) -> np.ndarray:
        """Words ``Phi(x)`` for index tuples ``x`` (rows of ``X``)."""
        X = self._check_indices(X)
        E, h = self.E_, self.head_
        blocks = E[X, :h]
        nxt = np.roll(X, -1, axis=1)
        bridge = self.bridges_[E[X, h - 1], E[nxt, 0]]
        return np.concatenate([blocks, bridge], axis=2).reshape(X.shape[0], -1)

    # validation -------------------------------------------------------
    def validation_report(self) -> dict:
        system, eps, n = self.system_, self.epsilon_, self.n
        E, K = self.E_, self.total_period
        report = {}
        L_sep = system.close_length(n, 2 * eps)
        report["separation"] = _distinct_rows(unroll_rows(E, L_sep)) if L_sep else E.shape[0] == 1
        report["injective_heads"] = _distinct_rows(E[:, : self.head_])

        L_span = system.ball_length(n, 3 * eps)
        if L_span == 0:
            report["spanning"] = True
        else:
            targets = CyclicConstraint(system, K).prefixes(L_span)
            report["spanning"] = _row_set(targets) <= _row_set(unroll_rows(E, L_span))

        X, complete = _test_tuples(self.sizes_, ("validate", "global"), self.validation_budget)
        W = self.transform(X)
        report["admissible"] = _cyclic_admissible(system, W)
        L = system.ball_length(n, eps)
        U = unroll_rows(W, K + L)
        shadow = True
        for i, start in enumerate(self.block_starts):
            shadow &= bool(np.array_equal(U[:, start:start + L], unroll_rows(E[X[:, i]], L)))
        report["shadowing"] = shadow
        # distinct tuples must give distinct words; the mean of an integer
        # test function over the image then equals its mean over tuples
        Wu = W[_first_occurrences(X)]
        report["injective"] = _distinct_rows(Wu)
        f = (Wu.astype(np.int64) * (np.arange(K) + 1)).sum(axis=1) % 9973
        img = _first_occurrences(Wu)
        report["pushforward"] = Fraction(int(f.sum()), len(f)) == Fraction(int(f[img].sum()), len(img))
        return report

    def manifest(self) -> dict:
        return {
            "kind": "global",
            "epsilon": str(self.epsilon_),
            "k": self.k,
            "n": self.n,
            "M": self.M_,
            "agreement_depth": self.spec_.agreement_depth,
            "size_E": int(self.E_.shape[0]),
            "E": ["".join(map(str, r)) for r in self.E_.tolist()],
            "validation": dict(self.report_),
        }


def build_global_indep(system, eps, k, n, M=None, **kwargs) -> GlobalIndependentSet:
    return GlobalIndependentSet(epsilon=eps, k=k, n=n, M=M, **kwargs).fit(system)


# ----------------------------------------------------------------------
# local sets
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class CylinderSchedule:
    """Cylinder words pinned at the block starts ``0, n, ..., (k-1)n``."""

    k: int
    n: int
    cylinders: tuple

    def __post_init__(self):
        cyl = tuple(tuple(int(s) for s in c) for c in self.cylinders)
        object.__setattr__(self, "cylinders", cyl)
        if self.k < 1 or self.n < 1:
            raise ValueError("k and n must be positive")
        if len(cyl) != self.k:
            raise ValueError("need exactly one cylinder per block")
        if any(len(c) == 0 for c in cyl):
            raise ValueError("cylinder words must be non-empty")
        if any(len(c) > self.n for c in cyl):
            raise IncompatibleSchedule("cylinder deeper than the block length")

    @classmethod
    def repeated(cls, k: int, n: int, word: Sequence[int]):
        return cls(k, n, tuple(tuple(word) for _ in range(k)))

    @property
    def min_depth(self) -> int:
        return min(len(c) for c in self.cylinders)

    def pins(self, m: int, shift: int = 0) -> dict:
        """Position -> symbol for ``T^shift`` of the cylinder constraint."""
        out = {}
        for i, c in enumerate(self.cylinders):
            for t, s in enumerate(c):
                out[(i * self.n + t - shift) % m] = s
        return out

    def to_dict(self) -> dict:
        return {"k": self.k, "n": self.n, "cylinders": [list(c) for c in self.cylinders]}

    @classmethod
    def from_dict(cls, data: Mapping):
        return cls(int(data["k"]), int(data["n"]), tuple(tuple(c) for c in data["cylinders"]))


def _class_representatives(C: CyclicConstraint, length: int, offset: int,
                           budget: int) -> np.ndarray:
    """One member per prefix class of length ``length``.

    With ``offset == 0`` this is the lexicographically smallest member.
    Otherwise the members are listed lexicographically, the list is rotated
    left by ``offset`` and the first member of each class is kept.
    """
    m = C.period
    L = min(length, m)
    if offset == 0:
        heads = C.prefixes(L) if L > 0 else C.prefixes(1)[:1]
        return C.complete(heads)
    total = C.count()
    if total > budget:
        raise BudgetExceeded(f"{total} candidates exceed the budget {budget}")
    words = C.prefixes(m)
    order = np.roll(np.arange(len(words)), -(offset % len(words)))
    words = words[order]
    if L == 0:
        return words[:1]
    # np.unique sorts the keys and reports first occurrences in rotated order
    _, first = np.unique(words[:, :L], axis=0, return_index=True)
    return words[first]


class LocalIndependentSet(_IndexedSet):
    """Locally eps-independent set in ``P_m`` for a cylinder schedule.

    Parameters
    ----------
    epsilon : rational
    schedule : CylinderSchedule
    m : int, optional
        Period; a multiple of ``n`` with ``m >= k n``.  Defaults to ``k n``.
    candidate_offset : int
        Rotation of the candidate enumeration order (changes which member
        of each class represents it, never the image of ``Phi``).
    """

    def __init__(self, epsilon="1/4", schedule=None, m=None, candidate_offset=0,
                 budget=DEFAULT_ENUMERATION_BUDGET, validate=True,
                 validation_budget=DEFAULT_VALIDATION_BUDGET):
        self.epsilon = epsilon
        self.schedule = schedule
        self.m = m
        self.candidate_offset = candidate_offset
        self.budget = budget
        self.validate = validate
        self.validation_budget = validation_budget

    def fit(self, system: SymbolicSystem, y=None):
        sched = self.schedule
        if sched is None:
            raise ValueError("a CylinderSchedule is required")
        eps = as_fraction(self.epsilon)
        k, n = sched.k, sched.n
        m = k * n if self.m is None else int(self.m)
        if m % n or m < k * n:
            raise ValueError("m must be a multiple of n with m >= k n")
        base = CyclicConstraint(system, m, sched.pins(m))
        if base.is_empty():
            raise IncompatibleSchedule("no periodic point of period m meets every cylinder")
        sp = spec_parameters(system, eps)
        if n < sp.N_of_eps:
            raise WindowTooShort(f"n = {n} is below N(eps) = {sp.N_of_eps}")
        a = sp.agreement_depth
        if k >= 2 and sched.min_depth < max(a, 1):
            raise IncompatibleSchedule(
                f"cylinders of depth {sched.min_depth} cannot pin the {a} symbols "
                "each block must share with the next")

        windows = [n] * (k - 1) + [m - (k - 1) * n]
        cache, E_list = {}, []
        for i in range(k):
            pins = sched.pins(m, shift=i * n)
            L = system.close_length(windows[i], 2 * eps)
            key = (tuple(sorted(pins.items())), L)
            if key not in cache:
                C = base if i == 0 else CyclicConstraint(system, m, pins)
                cache[key] = _class_representatives(C, L, self.candidate_offset, self.budget)
            E_list.append(cache[key])

        self.system_ = system
        self.spec_ = sp
        self.epsilon_ = eps
        self.m_ = m
        self.windows_ = windows
        self.E_list_ = E_list
        self.sizes_ = [E.shape[0] for E in E_list]
        self.report_ = self.validation_report() if self.validate else {}
        if self.validate and not all(self.report_.values()):
            failed = [name for name, ok in self.report_.items() if not ok]
            raise ValidationFailure(f"failed checks: {failed}")
        return self

    @property
    def k(self) -> int:
        return self.schedule.k

    @property
    def n(self) -> int:
        return self.schedule.n

    @property
    def block_starts(self) -> list:
        return [i * self.n for i in range(self.k)]

    def transform(self, X) -> np.ndarray:
        X = self._check_indices(X)
        out = np.empty((X.shape[0], self.m_), dtype=np.uint8)
        for i, (start, w) in enumerate(zip(self.block_starts, self.windows_)):
            out[:, start:start + w] = self.E_list_[i][X[:, i], :w]
        return out

    def member_matrix(self) -> np.ndarray:
        """``A cap P_m`` as a lexicographic word matrix."""
        return CyclicConstraint(self.system_, self.m_, self.schedule.pins(self.m_)).prefixes(self.m_)

    def validation_report(self) -> dict:
        system, eps, m, n = self.system_, self.epsilon_, self.m_, self.n
        report = {}
        report["injective_windows"] = all(
            _distinct_rows(E[:, :w]) for E, w in zip(self.E_list_, self.windows_))
        X, complete = _test_tuples(self.sizes_, ("validate", "local"), self.validation_budget)
        W = self.transform(X)
        report["admissible"] = _cyclic_admissible(system, W)
        pins = self.schedule.pins(m)
        report["in_cylinders"] = all(bool((W[:, pos] == s).all()) for pos, s in pins.items())
        L = system.ball_length(n, eps)
        U = unroll_rows(W, m + L)
        shadow = True
        for i, start in enumerate(self.block_starts):
            E = self.E_list_[i]
            shadow &= bool(np.array_equal(U[:, start:start + L], unroll_rows(E[X[:, i]], L)))
        report["shadowing"] = shadow
        _, first = np.unique(X, axis=0, return_index=True)
        report["injective"] = _distinct_rows(W[first])
        if eps < system.expansiveness_constant / 3 and complete:
            members = self.member_matrix()
            image = _row_set(W)
            report["sandwich_lower"] = _row_set(members) <= image
            Lm = system.ball_length(m, eps)
            near = _row_set(unroll_rows(members, Lm))
            report["sandwich_upper"] = _row_set(unroll_rows(W, Lm)) <= near
        return report

    def manifest(self) -> dict:
        return {
            "kind": "local",
            "epsilon": str(self.epsilon_),
            "schedule": self.schedule.to_dict(),
            "m": self.m_,
            "sizes": list(self.sizes_),
            "E": [["".join(map(str, r)) for r in E.tolist()] for E in self.E_list_],
            "validation": dict(self.report_),
        }


def build_local_indep(system, schedule: CylinderSchedule, eps, m=None, **kwargs) -> LocalIndependentSet:
    return LocalIndependentSet(epsilon=eps, schedule=schedule, m=m, **kwargs).fit(system)


# ----------------------------------------------------------------------
# operations on built sets
# ----------------------------------------------------------------------
def phi_apply(indep: _IndexedSet, indices: Sequence[int]) -> PeriodicPoint:
    return indep.phi_apply(indices)


def sample_uniform(indep: _IndexedSet, seed: int, count: int, path: tuple = ()):
    """``count`` i.i.d. uniform index tuples and their words.

    The stream is keyed by ``(seed, *path)`` so that parallel batches with
    distinct paths are independent and reproducible.
    """
    if count < 1:
        raise ValueError("count must be positive")
    rng = stream(seed, "sample_uniform", *path)
    X = rng.integers(0, np.asarray(indep.sizes_), size=(count, len(indep.sizes_)))
    return X, indep.transform(X)


def specify_two(system: SymbolicSystem, x1: PeriodicPoint, n1: int, x2: PeriodicPoint,
                n2: int, M1: int, M2: int, eps) -> PeriodicPoint:
    """A periodic point of period ``n1+M1+n2+M2`` whose orbit follows ``x1``
    for ``n1`` steps and, after ``n1+M1`` steps, ``x2`` for ``n2`` steps."""
    eps = as_fraction(eps)
    sp = spec_parameters(system, eps)
    if min(M1, M2) < sp.M_of_eps:
        raise GapTooShort(f"gaps ({M1}, {M2}) below M(eps) = {sp.M_of_eps}")
    a = sp.agreement_depth
    w1, w2 = x1.unrolled(n1 + a), x2.unrolled(n2 + a)
    if not (system.is_admissible(w1) and system.is_admissible(w2)):
        raise ValueError("points must belong to the system")
    b1 = connect_words(system, w1[-1], w2[0], M1 - a)
    b2 = connect_words(system, w2[-1], w1[0], M2 - a)
    p = PeriodicPoint(w1 + b1 + w2 + b2)
    L1, L2 = system.ball_length(n1, eps), system.ball_length(n2, eps)
    shifted = p.word[n1 + M1:] + p.word[: n1 + M1]
    ok1 = p.unrolled(L1) == x1.unrolled(L1)
    ok2 = PeriodicPoint(shifted).unrolled(L2) == x2.unrolled(L2)
    if not (ok1 and ok2 and system.is_admissible(p.word, cyclic=True)):
        raise ValidationFailure("specify_two produced a point outside the requested balls")
    return p


@dataclass
class WeightedMeasure:
    """Weights ``w(q)`` on ``P_{k(n+M)}`` spreading each ``p`` over ``Q(p)``.

    Attributes
    ----------
    support : ndarray of shape (|P_K|, K)
    weights : list of Fraction
    p_words : ndarray
        Words of the independent set, in index-tuple order.
    Q : list of ndarray
        ``Q[j]`` holds row indices into ``support`` for the j-th point.
    """

    support: np.ndarray
    weights: list
    p_words: np.ndarray
    Q: list

    def mean(self, values: Sequence) -> Fraction:
        return sum((w * v for w, v in zip(self.weights, values)), Fraction(0))


def weighted_measure(indep: GlobalIndependentSet, budget: int = DEFAULT_ENUMERATION_BUDGET,
                     check_closeness: bool = True) -> WeightedMeasure:
    system, eps, n = indep.system_, indep.epsilon_, indep.n
    K = indep.total_period
    support = periodic_words(system, K, budget=budget)
    X, P = indep.materialize(budget)
    L3 = system.ball_length(n, 3 * eps)
    Us = unroll_rows(support, K + L3)
    q_keys = [b"".join(Us[j, s:s + L3].tobytes() for s in indep.block_starts)
              for j in range(len(support))]
    groups: dict = {}
    for j, key in enumerate(q_keys):
        groups.setdefault(key, []).append(j)
    e_keys = [np.ascontiguousarray(r[:L3]).tobytes() for r in indep.E_]
    Q, p_count = [], {}
    for x in X:
        key = b"".join(e_keys[i] for i in x)
        Q.append(np.array(groups.get(key, []), dtype=np.int64))
        p_count[key] = p_count.get(key, 0) + 1
    total = len(X)
    weights = [Fraction(p_count.get(key, 0), total * len(groups[key])) for key in q_keys]
    if check_closeness:
        L4 = system.ball_length(n, 4 * eps)
        Up = unroll_rows(P, K + L4)
        for j, q in enumerate(Q):
            if len(q) == 0:
                raise ValidationFailure("empty Q(p)")
            for s in indep.block_starts:
                if not (Us[q, s:s + L4] == Up[j, s:s + L4]).all():
                    raise ValidationFailure("a member of Q(p) is not blockwise 4 eps close")
    if sum(weights, Fraction(0)) != 1:
        raise ValidationFailure("weights do not sum to one")
    return WeightedMeasure(support=support, weights=weights, p_words=P, Q=Q)
