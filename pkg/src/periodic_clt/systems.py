"""One-sided mixing subshifts of finite type.

Points of the phase space are one-sided sequences over ``{0, ..., S-1}``
whose adjacent pairs are allowed by a 0/1 transition matrix ``A``.  The
metric is ``d(x, y) = r**k`` with ``k`` the first index where ``x`` and ``y``
differ, so every distance is an exact power of ``r`` and is kept as a
:class:`fractions.Fraction`.

Periodic points are represented by the admissible cyclic word of their
period.  Bulk work (enumeration, sampling, completion of partial words) is
done on ``uint8`` word matrices through :class:`CyclicConstraint`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Mapping, Sequence

import numpy as np

from .exceptions import BudgetExceeded, NoPath, NotPrimitive

DEFAULT_ENUMERATION_BUDGET = 1 << 20


def as_fraction(value) -> Fraction:
    """Parse ``"p/q"`` strings, ints and Fractions (floats are rejected)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"expected an exact rational, got {type(value).__name__}")


class SymbolicSystem:
    """A primitive subshift of finite type with the ultrametric ``r**k``.

    Parameters
    ----------
    transitions : array_like of shape (S, S)
        0/1 matrix; ``transitions[a][b] == 1`` iff ``b`` may follow ``a``.
    metric_base : rational, default 1/2
    expansiveness_constant : rational, default 1/2
    """

    def __init__(self, transitions, metric_base="1/2", expansiveness_constant="1/2"):
        A = np.asarray(transitions)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise ValueError("transitions must be a non-empty square matrix")
        if not np.isin(A, (0, 1)).all():
            raise ValueError("transitions must contain only 0 and 1")
        if A.shape[0] > 255:
            raise ValueError("at most 255 symbols are supported")
        A = A.astype(bool)
        if not A.any(axis=1).all() or not A.any(axis=0).all():
            raise ValueError("every row and column of the transition matrix needs a 1")
        self.metric_base = as_fraction(metric_base)
        self.expansiveness_constant = as_fraction(expansiveness_constant)
        if not 0 < self.metric_base < 1:
            raise ValueError("metric_base must lie in (0, 1)")
        if not 0 < self.expansiveness_constant < 1:
            raise ValueError("expansiveness_constant must lie in (0, 1)")
        A.setflags(write=False)
        self.A = A
        self.num_symbols = A.shape[0]
        self.mixing_index = mixing_index(self)

    # constructors -----------------------------------------------------
    @classmethod
    def full_shift(cls, num_symbols=2, **kwargs):
        return cls(np.ones((num_symbols, num_symbols), dtype=int), **kwargs)

    @classmethod
    def golden_mean(cls, **kwargs):
        return cls([[1, 1], [1, 0]], **kwargs)

    @classmethod
    def from_dict(cls, data: Mapping):
        S = int(data["symbols"])
        transitions = data["transitions"]
        if len(transitions) != S:
            raise ValueError("'symbols' does not match the transition matrix size")
        return cls(
            transitions,
            metric_base=data.get("metric_base", "1/2"),
            expansiveness_constant=data.get("expansiveness_constant", "1/2"),
        )

    def to_dict(self) -> dict:
        return {
            "symbols": self.num_symbols,
            "transitions": self.A.astype(int).tolist(),
            "metric_base": str(self.metric_base),
            "expansiveness_constant": str(self.expansiveness_constant),
        }

    def __repr__(self):
        return (
            f"SymbolicSystem(transitions={self.A.astype(int).tolist()}, "
            f"metric_base={str(self.metric_base)!r})"
        )

    def __eq__(self, other):
        return (
            isinstance(other, SymbolicSystem)
            and np.array_equal(self.A, other.A)
            and self.metric_base == other.metric_base
            and self.expansiveness_constant == other.expansiveness_constant
        )

    def __hash__(self):
        return hash((self.A.tobytes(), self.A.shape, self.metric_base,
                     self.expansiveness_constant))

    # small helpers ----------------------------------------------------
    def is_admissible(self, word: Sequence[int], cyclic: bool = False) -> bool:
        w = [int(s) for s in word]
        if any(s < 0 or s >= self.num_symbols for s in w):
            return False
        ok = all(self.A[a, b] for a, b in zip(w, w[1:]))
        if cyclic and w:
            ok = ok and bool(self.A[w[-1], w[0]])
        return ok

    def integer_power(self, m: int) -> np.ndarray:
        """Exact ``A**m`` as an object array of Python ints."""
        return _int_matrix_power(self.A, m)

    def boolean_power(self, m: int) -> np.ndarray:
        P = np.eye(self.num_symbols, dtype=bool)
        B = self.A.copy()
        while m:
            if m & 1:
                P = _bool_mul(P, B)
            B = _bool_mul(B, B)
            m >>= 1
        return P

    # metric -----------------------------------------------------------
    def ball_length(self, n: int, radius) -> int:
        """Symbols two points must share so that ``d_n < radius``."""
        j = _first_power_below(self.metric_base, as_fraction(radius))
        return 0 if j == 0 else n + j - 1

    def close_length(self, n: int, threshold) -> int:
        """Symbols two points must share so that ``d_n <= threshold``."""
        j = _first_power_at_most(self.metric_base, as_fraction(threshold))
        return 0 if j == 0 else n - 1 + j

    def agreement_depth(self, eps) -> int:
        """``a(eps) = min{j >= 0 : r**j < eps} - 1``."""
        return _first_power_below(self.metric_base, as_fraction(eps)) - 1


def _first_power_below(r: Fraction, eps: Fraction) -> int:
    if eps <= 0:
        raise ValueError("radius must be positive")
    j, p = 0, Fraction(1)
    while not p < eps:
        p *= r
        j += 1
    return j


def _first_power_at_most(r: Fraction, t: Fraction) -> int:
    if t <= 0:
        raise ValueError("threshold must be positive")
    j, p = 0, Fraction(1)
    while not p <= t:
        p *= r
        j += 1
    return j


def _bool_mul(X, Y):
    return (X.astype(np.int64) @ Y.astype(np.int64)) > 0


def _int_matrix_power(A, m):
    S = A.shape[0]
    base = A.astype(int).astype(object)
    result = np.zeros((S, S), dtype=object)
    for i in range(S):
        result[i, i] = 1
    while m:
        if m & 1:
            result = result.dot(base)
        base = base.dot(base)
        m >>= 1
    return result


@dataclass(frozen=True)
class PeriodicPoint:
    """The point ``word**infinity``; its period is ``len(word)``."""

    word: tuple

    def __post_init__(self):
        object.__setattr__(self, "word", tuple(int(s) for s in self.word))
        if not self.word:
            raise ValueError("a periodic point needs a non-empty word")

    @property
    def period(self) -> int:
        return len(self.word)

    def unrolled(self, length: int) -> tuple:
        w, p = self.word, len(self.word)
        return tuple(w[i % p] for i in range(length))

    def __str__(self):
        sep = "" if max(self.word) < 10 else ","
        return sep.join(map(str, self.word))


@dataclass(frozen=True)
class SpecParams:
    agreement_depth: int
    gap_min: int
    M_of_eps: int
    N_of_eps: int
    delta_of_eps: Fraction


def mixing_index(system: SymbolicSystem) -> int:
    """Least ``M0`` with ``A**m > 0`` entrywise for every ``m >= M0``.

    Once a power of a matrix with no zero rows is positive, all higher
    powers are too, so the first positive power is the answer.  The search
    stops at the Wielandt bound ``S**2 - 2S + 2``.
    """
    S = system.num_symbols
    cap = S * S - 2 * S + 2
    P = system.A.copy()
    for m in range(1, cap + 1):
        if P.all():
            return m
        P = _bool_mul(P, system.A)
    raise NotPrimitive("transition matrix is not primitive")


def spec_parameters(system: SymbolicSystem, eps) -> SpecParams:
    eps = as_fraction(eps)
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    a = system.agreement_depth(eps)
    g = system.mixing_index - 1
    return SpecParams(
        agreement_depth=a,
        gap_min=g,
        M_of_eps=a + max(g, 0),
        N_of_eps=a + 1,
        delta_of_eps=system.metric_base ** a,
    )


def count_periodic(system: SymbolicSystem, n: int) -> int:
    """``|P_n| = trace(A**n)``, exact."""
    if n < 1:
        raise ValueError("period must be positive")
    P = system.integer_power(n)
    return int(sum(P[i, i] for i in range(system.num_symbols)))


def enumerate_periodic(system, n, budget=DEFAULT_ENUMERATION_BUDGET):
    """All points of ``P_n`` in lexicographic order of their words."""
    words = periodic_words(system, n, budget=budget)
    return [PeriodicPoint(tuple(row)) for row in words.tolist()]


def periodic_words(system, n, budget=DEFAULT_ENUMERATION_BUDGET) -> np.ndarray:
    """``P_n`` as a lexicographically sorted ``(|P_n|, n)`` uint8 matrix."""
    total = count_periodic(system, n)
    if total > budget:
        raise BudgetExceeded(f"|P_{n}| = {total} exceeds the budget {budget}")
    return CyclicConstraint(system, n).prefixes(n)


def shift_point(p: PeriodicPoint, t: int) -> PeriodicPoint:
    s = t % p.period
    return PeriodicPoint(p.word[s:] + p.word[:s])


def first_disagreement(p: PeriodicPoint, q: PeriodicPoint):
    """Index of the first differing symbol of the unrolled words, or None."""
    L = p.period * q.period // gcd(p.period, q.period)
    pw, qw = p.word, q.word
    for i in range(L):
        if pw[i % len(pw)] != qw[i % len(qw)]:
            return i
    return None


def bowen_separation(system: SymbolicSystem, p, q, n: int = 1) -> Fraction:
    """Exact ``d_n(p, q)``; ``n = 1`` gives the metric ``d``."""
    if n < 1:
        raise ValueError("n must be positive")
    m = first_disagreement(p, q)
    if m is None:
        return Fraction(0)
    return system.metric_base ** max(0, m - n + 1)


def connect_words(system: SymbolicSystem, start: int, end: int, length: int) -> tuple:
    """Lexicographically smallest ``w`` of the given length making
    ``(start, w, end)`` admissible."""
    if length < 0:
        raise ValueError("length must be nonnegative")
    powers = [np.eye(system.num_symbols, dtype=bool)]
    for _ in range(length + 1):
        powers.append(_bool_mul(powers[-1], system.A))
    if not powers[length + 1][start, end]:
        raise NoPath(f"no admissible word of length {length} from {start} to {end}")
    word, prev = [], start
    for t in range(length):
        remaining = length - t  # steps from the chosen symbol to ``end``
        for y in range(system.num_symbols):
            if system.A[prev, y] and powers[remaining][y, end]:
                word.append(y)
                prev = y
                break
    return tuple(word)


def unroll_rows(words: np.ndarray, length: int) -> np.ndarray:
    """Periodically extend each row of a word matrix to ``length`` columns."""
    period = words.shape[1]
    idx = np.arange(length) % period
    return words[:, idx]


class CyclicConstraint:
    """Admissible cyclic words of a fixed period with pinned positions.

    Parameters
    ----------
    system : SymbolicSystem
    period : int
    fixed : mapping of position -> symbol, optional
        Positions are taken modulo ``period``.

    The backward reachability table ``reach[x0, t, y]`` answers whether
    symbol ``y`` at position ``t`` can be completed to a valid cyclic word
    that starts with ``x0``.  Prefix enumeration, lexicographically minimal
    completion and uniform sampling are all driven by it.
    """

    def __init__(self, system: SymbolicSystem, period: int, fixed: Mapping[int, int] | None = None):
        if period < 1:
            raise ValueError("period must be positive")
        self.system = system
        self.period = period
        S = system.num_symbols
        allowed = np.ones((period, S), dtype=bool)
        for pos, sym in (fixed or {}).items():
            pos = pos % period
            if not 0 <= sym < S:
                raise ValueError("fixed symbol out of range")
            row = np.zeros(S, dtype=bool)
            row[sym] = True
            allowed[pos] &= row
        self.allowed = allowed
        A = system.A
        reach = np.zeros((S, period, S), dtype=bool)
        for x0 in range(S):
            r = allowed[period - 1] & A[:, x0]
            reach[x0, period - 1] = r
            for t in range(period - 2, -1, -1):
                r = allowed[t] & _bool_mul(A, r[:, None])[:, 0]
                reach[x0, t] = r
        self.reach = reach
        self.starts = np.array([x0 for x0 in range(S) if reach[x0, 0, x0]], dtype=np.uint8)

    def is_empty(self) -> bool:
        return len(self.starts) == 0

    def feasible(self, prefix: Sequence[int]) -> bool:
        prefix = [int(s) for s in prefix]
        if not prefix:
            return not self.is_empty()
        L = len(prefix)
        if L > self.period:
            head = prefix[: self.period]
            if prefix != [head[i % self.period] for i in range(L)]:
                return False
            prefix = head
            L = self.period
        x0 = prefix[0]
        if not self.system.is_admissible(prefix):
            return False
        if not all(self.allowed[t, s] for t, s in enumerate(prefix)):
            return False
        return bool(self.reach[x0, L - 1, prefix[-1]])

    def count(self) -> int:
        """Exact number of admissible cyclic words satisfying the pins."""
        A = self.system.A.astype(int).astype(object)
        total = 0
        for x0 in range(self.system.num_symbols):
            if not self.allowed[0, x0]:
                continue
            v = np.zeros(self.system.num_symbols, dtype=object)
            v[x0] = 1
            for t in range(1, self.period):
                v = v.dot(A) * self.allowed[t]
            total += int(v.dot(A[:, x0]))
        return total

    def prefixes(self, length: int) -> np.ndarray:
        """Distinct feasible prefixes of the unrolled words, lexicographic."""
        if length <= 0:
            return np.zeros((0 if self.is_empty() else 1, 0), dtype=np.uint8)
        L = min(length, self.period)
        S = self.system.num_symbols
        A = self.system.A
        rows = self.starts.reshape(-1, 1)
        x0 = rows[:, 0]
        syms = np.arange(S, dtype=np.uint8)
        for t in range(1, L):
            n = rows.shape[0]
            cand = np.repeat(rows, S, axis=0)
            nxt = np.tile(syms, n)
            ok = A[cand[:, -1], nxt] & self.reach[np.repeat(x0, S), t, nxt]
            rows = np.concatenate([cand[ok], nxt[ok, None]], axis=1)
            x0 = rows[:, 0]
        if length > self.period:
            rows = unroll_rows(rows, length)
        return np.ascontiguousarray(rows)

    def complete(self, prefixes: np.ndarray) -> np.ndarray:
        """Lexicographically smallest full-period word extending each row.

        Rows must be feasible prefixes (of length at most the period).
        """
        prefixes = np.asarray(prefixes, dtype=np.uint8)
        n, L = prefixes.shape
        if L == 0:
            raise ValueError("completion needs at least the first symbol")
        out = np.zeros((n, self.period), dtype=np.uint8)
        out[:, :L] = prefixes[:, : self.period]
        A = self.system.A
        x0 = out[:, 0]
        for t in range(L, self.period):
            prev = out[:, t - 1]
            done = np.zeros(n, dtype=bool)
            for y in range(self.system.num_symbols):
                ok = ~done & A[prev, y] & self.reach[x0, t, y]
                out[ok, t] = y
                done |= ok
            if not done.all():
                raise ValueError("infeasible prefix passed to complete()")
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform sample of ``size`` words (rows), exact in distribution."""
        S = self.system.num_symbols
        A = self.system.A.astype(float)
        m = self.period
        # W[t][x0, y]: number of completions from symbol y at position t,
        # rescaled per position (the common factor cancels in every ratio).
        W = np.zeros((m, S, S))
        W[m - 1] = (self.allowed[m - 1][None, :] & self.system.A.T).astype(float)
        for t in range(m - 2, -1, -1):
            w = (W[t + 1] @ A.T) * self.allowed[t][None, :]
            scale = w.max()
            W[t] = w / scale if scale > 0 else w
        first = np.array([W[0][x0, x0] for x0 in range(S)])
        if first.sum() == 0:
            raise ValueError("cannot sample from an empty constraint")
        # cum[t, x0, prev]: conditional CDF of the symbol at position t
        P = A[None, None, :, :] * W[1:, :, None, :]
        cum = np.cumsum(P, axis=3)
        tot = cum[..., -1:]
        cum = np.divide(cum, tot, out=np.zeros_like(cum), where=tot > 0).reshape(m - 1, S * S, S)
        cols = np.zeros((m, size), dtype=np.uint8)
        cols[0] = rng.choice(S, size=size, p=first / first.sum())
        u = rng.random((m - 1, size))
        base = cols[0].astype(np.intp) * S
        prev = cols[0].astype(np.intp)
        thresholds = [np.ascontiguousarray(cum[:, :, y]) for y in range(S - 1)]
        for t in range(1, m):
            idx = base + prev
            nxt = np.zeros(size, dtype=np.intp)
            for th in thresholds:
                nxt += u[t - 1] >= th[t - 1][idx]
            prev = nxt
            cols[t] = prev
        return np.ascontiguousarray(cols.T)
