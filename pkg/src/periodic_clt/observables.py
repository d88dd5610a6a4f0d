"""Observables on periodic points, Birkhoff sums and oscillations.

Three observable families are supported:

* :class:`SymbolIndicator` -- ``1_[w](x) + offset`` for a cylinder word ``w``;
* :class:`LocallyConstant` -- a value table on admissible words of a fixed
  depth;
* :class:`GeometricWeight` -- ``sum_i lam**i * phi(x_i)``.

Every observable has an exact scalar path (:meth:`Observable.evaluate`,
Fractions in, Fractions out) and a vectorised float path
(:meth:`Observable.position_values`) over a matrix of cyclic words.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from math import fsum, inf
from typing import Mapping, Sequence

import numpy as np

from .exceptions import BudgetExceeded
from .systems import (
    DEFAULT_ENUMERATION_BUDGET,
    PeriodicPoint,
    SymbolicSystem,
    as_fraction,
    shift_point,
)


def _exact(value):
    """Fractions stay exact; strings are parsed; floats pass through."""
    if isinstance(value, float):
        return value
    return as_fraction(value)


class Observable:
    """Common interface.  Subclasses set ``read_depth`` (``None`` = infinite)."""

    read_depth: int | None = None

    def evaluate(self, p: PeriodicPoint):
        raise NotImplementedError

    def position_values(self, words: np.ndarray) -> np.ndarray:
        """``h(T^j x)`` for every row ``x`` (a cyclic word) and position ``j``."""
        raise NotImplementedError

    def bounds(self):
        """(inf h, sup h) as floats."""
        raise NotImplementedError

    def modulus(self, agree: int) -> float:
        """Upper bound of ``|h(x) - h(y)|`` when x, y share ``agree`` symbols."""
        raise NotImplementedError

    @property
    def sup_norm(self) -> float:
        lo, hi = self.bounds()
        return max(abs(lo), abs(hi))

    @property
    def spread(self) -> float:
        lo, hi = self.bounds()
        return hi - lo

    @property
    def lipschitz_bound(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class SymbolIndicator(Observable):
    def __init__(self, word: Sequence[int] | int = (0,), offset=0):
        if isinstance(word, (int, np.integer)):
            word = (int(word),)
        self.word = tuple(int(s) for s in word)
        if not self.word:
            raise ValueError("cylinder word must be non-empty")
        self.offset = _exact(offset)
        self.read_depth = len(self.word)

    def evaluate(self, p):
        hit = p.unrolled(len(self.word)) == self.word
        return (1 if hit else 0) + self.offset

    def position_values(self, words):
        words = np.asarray(words)
        m = words.shape[1]
        hit = np.ones(words.shape, dtype=bool)
        for t, s in enumerate(self.word):
            hit &= np.roll(words, -(t % m), axis=1) == s
        return hit.astype(float) + float(self.offset)

    def bounds(self):
        return float(self.offset), float(self.offset) + 1.0

    def modulus(self, agree):
        return 0.0 if agree >= self.read_depth else 1.0

    @property
    def lipschitz_bound(self):
        return 1.0

    def lipschitz_for(self, system: SymbolicSystem) -> float:
        return 1.0 / float(system.metric_base ** (self.read_depth - 1))

    def to_dict(self):
        return {"variant": "symbol_indicator", "word": list(self.word),
                "offset": str(self.offset)}

    def __repr__(self):
        return f"SymbolIndicator(word={self.word}, offset={self.offset})"


class LocallyConstant(Observable):
    """Observable determined by the first ``depth`` symbols.

    Parameters
    ----------
    depth : int
    table : mapping word -> value
        Keys may be tuples or digit strings.  When ``system`` is given, the
        table must cover every admissible word of length ``depth`` and
        contain no other word.
    system : SymbolicSystem, optional
    """

    def __init__(self, depth: int, table: Mapping, system: SymbolicSystem | None = None):
        if depth < 1:
            raise ValueError("depth must be positive")
        self.read_depth = self.depth = int(depth)
        parsed = {}
        for key, value in table.items():
            w = tuple(int(c) for c in key) if isinstance(key, str) else tuple(int(s) for s in key)
            if len(w) != depth:
                raise ValueError(f"table key {key!r} does not have length {depth}")
            parsed[w] = _exact(value)
        if not parsed:
            raise ValueError("empty value table")
        self.table = parsed
        self.num_symbols = max(max(w) for w in parsed) + 1
        if system is not None:
            self.num_symbols = system.num_symbols
            admissible = {w for w in product(range(system.num_symbols), repeat=depth)
                          if system.is_admissible(w)}
            missing = admissible - parsed.keys()
            extra = parsed.keys() - admissible
            if missing:
                raise ValueError(f"table misses admissible words {sorted(missing)[:5]}")
            if extra:
                raise ValueError(f"table has non-admissible words {sorted(extra)[:5]}")
        S = self.num_symbols
        dense = np.full(S ** depth, np.nan)
        for w, v in parsed.items():
            dense[self._code(w)] = float(v)
        self._dense = dense

    def _code(self, w):
        c = 0
        for s in w:
            c = c * self.num_symbols + s
        return c

    def evaluate(self, p):
        return self.table[p.unrolled(self.depth)]

    def position_values(self, words):
        words = np.asarray(words).astype(np.int64)
        codes = np.zeros(words.shape, dtype=np.int64)
        for t in range(self.depth):
            codes = codes * self.num_symbols + np.roll(words, -t, axis=1)
        out = self._dense[codes]
        if np.isnan(out).any():
            raise ValueError("word matrix contains a window missing from the table")
        return out

    def bounds(self):
        vals = [float(v) for v in self.table.values()]
        return min(vals), max(vals)

    def modulus(self, agree):
        return 0.0 if agree >= self.depth else self.spread

    @property
    def lipschitz_bound(self):
        # metric-free part; lipschitz_for divides by r**(D-1)
        return self.spread

    def lipschitz_for(self, system: SymbolicSystem) -> float:
        return self.spread / float(system.metric_base ** (self.depth - 1))

    def to_dict(self):
        return {
            "variant": "locally_constant",
            "depth": self.depth,
            "table": {"".join(map(str, w)) if self.num_symbols <= 10 else ",".join(map(str, w)): str(v)
                      for w, v in sorted(self.table.items())},
        }

    def __repr__(self):
        return f"LocallyConstant(depth={self.depth}, entries={len(self.table)})"


class GeometricWeight(Observable):
    """``h(x) = sum_{i >= 0} decay**i * phi[x_i]``.

    On a periodic point of period ``p`` the series is summed in closed form,
    ``sum_{s < p} decay**s phi[x_s] / (1 - decay**p)``, so evaluation on
    periodic points carries no truncation error.  ``read_depth`` is the
    number of symbols after which the tail is below ``truncation_tol``; it
    is what oscillation bounds and depth checks use.
    """

    def __init__(self, decay, phi: Sequence, truncation_tol=1e-12):
        self.decay = _exact(decay)
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        self.phi = tuple(_exact(v) for v in phi)
        if not self.phi:
            raise ValueError("phi needs one value per symbol")
        self.truncation_tol = float(truncation_tol)
        lam = float(self.decay)
        spread = self._phi_spread()
        depth = 0
        while spread * lam ** depth / (1 - lam) >= self.truncation_tol:
            depth += 1
        self.read_depth = max(depth, 1)

    def _phi_spread(self):
        vals = [float(v) for v in self.phi]
        return max(vals) - min(vals)

    def evaluate(self, p):
        lam = self.decay
        acc = 0
        power = 1
        for s in p.word:
            acc += power * self.phi[s]
            power *= lam
        return acc / (1 - power)

    def position_values(self, words):
        words = np.asarray(words)
        N, m = words.shape
        lam = float(self.decay)
        phi = np.array([float(v) for v in self.phi])[words.astype(np.int64)]
        out = np.empty((N, m))
        weights = lam ** np.arange(m)
        # closed form at the last position, then h_j = phi_j + lam h_{j+1}
        last = np.concatenate([phi[:, m - 1:], phi[:, : m - 1]], axis=1)
        out[:, m - 1] = last @ weights / (1 - lam ** m)
        for j in range(m - 2, -1, -1):
            out[:, j] = phi[:, j] + lam * out[:, j + 1]
        return out

    def bounds(self):
        lam = float(self.decay)
        vals = [float(v) for v in self.phi]
        return min(vals) / (1 - lam), max(vals) / (1 - lam)

    def modulus(self, agree):
        lam = float(self.decay)
        return self._phi_spread() * lam ** max(agree, 0) / (1 - lam)

    @property
    def lipschitz_bound(self):
        return self._phi_spread() / (1 - float(self.decay))

    def lipschitz_for(self, system: SymbolicSystem) -> float:
        lam, r = float(self.decay), float(system.metric_base)
        if lam > r:
            return inf
        return self._phi_spread() / (1 - lam)

    def to_dict(self):
        return {"variant": "geometric_weight", "decay": str(self.decay),
                "phi": [str(v) for v in self.phi],
                "truncation_tol": repr(self.truncation_tol)}

    def __repr__(self):
        return f"GeometricWeight(decay={self.decay}, phi={self.phi})"


def observable_from_dict(data: Mapping, system: SymbolicSystem | None = None) -> Observable:
    variant = data.get("variant")
    if variant == "symbol_indicator":
        word = data.get("word", data.get("symbol", 0))
        return SymbolIndicator(word, offset=data.get("offset", "0"))
    if variant == "locally_constant":
        table = {}
        for k, v in data["table"].items():
            key = tuple(int(c) for c in k.split(",")) if "," in k else k
            table[key] = v
        return LocallyConstant(int(data["depth"]), table, system=system)
    if variant == "geometric_weight":
        return GeometricWeight(data["decay"], data["phi"],
                               truncation_tol=float(data.get("truncation_tol", 1e-12)))
    raise ValueError(f"unknown observable variant {variant!r}")


def evaluate(h: Observable, p: PeriodicPoint):
    return h.evaluate(p)


def birkhoff_sum(h: Observable, p: PeriodicPoint, m: int = 0, n: int = 1):
    """``S_m^n h(p) = sum_{i=m}^{m+n-1} h(T^i p)``."""
    if n <= 0:
        return 0
    terms = [h.evaluate(shift_point(p, i)) for i in range(m, m + n)]
    if all(isinstance(t, (int, Fraction)) for t in terms):
        return sum(terms, Fraction(0))
    return fsum(float(t) for t in terms)


def block_sums(values: np.ndarray, starts: Sequence[int], length: int) -> np.ndarray:
    """Windowed sums of per-position values; windows wrap cyclically.

    Returns an array of shape ``(N, len(starts))``.
    """
    values = np.asarray(values, dtype=float)
    N, m = values.shape
    if length == 0:
        return np.zeros((N, len(starts)))
    k = len(starts)
    if k and m % k == 0 and length <= m // k:
        step = m // k
        shift = int(starts[0]) % step
        if list(starts) == [shift + i * step for i in range(k)]:
            # evenly spaced windows: reshape instead of a cumulative sum
            v = np.roll(values, -shift, axis=1) if shift else values
            return v.reshape(N, k, step)[:, :, :length].sum(axis=2)
    reps = -(-(max(starts) + length) // m) if len(starts) else 1
    ext = np.tile(values, (1, max(reps, 1)))
    csum = np.concatenate([np.zeros((N, 1)), np.cumsum(ext, axis=1)], axis=1)
    starts = np.asarray(starts, dtype=np.int64)
    return csum[:, starts + length] - csum[:, starts]


def oscillation(h: Observable, system: SymbolicSystem, eps, m: int, n: int,
                x: PeriodicPoint, Y: Sequence[PeriodicPoint] | None = None,
                mode: str = "exact", budget: int = DEFAULT_ENUMERATION_BUDGET):
    """``omega_m^n(h, eps, x)``: largest ``|S_m^n h(x) - S^n h(y)|`` over
    ``y`` in the Bowen ball ``B^n_eps(T^m x)`` intersected with ``Y``.

    ``mode="bound"`` ignores ``Y`` and returns the analytic bound
    ``sum_{j<n} modulus(L - j)`` with ``L`` the agreement length of the ball.
    """
    if mode == "bound":
        return oscillation_bound(h, system, eps, n)
    if mode != "exact":
        raise ValueError("mode must be 'exact' or 'bound'")
    if Y is None:
        raise ValueError("exact mode needs an explicit finite Y")
    if len(Y) > budget:
        raise BudgetExceeded(f"|Y| = {len(Y)} exceeds the budget {budget}")
    L = system.ball_length(n, eps)
    centre = shift_point(x, m)
    key = centre.unrolled(L)
    ref = birkhoff_sum(h, x, m, n)
    best = 0
    for y in Y:
        if y.unrolled(L) == key:
            diff = abs(ref - birkhoff_sum(h, y, 0, n))
            if diff > best:
                best = diff
    return best


def oscillation_bound(h: Observable, system: SymbolicSystem, eps, n: int) -> float:
    L = system.ball_length(n, eps)
    if L == 0:
        return n * h.spread
    return fsum(h.modulus(L - j) for j in range(n))


@dataclass
class DynamicalArraySpec:
    """Blocks ``[a_i, a_i + n)`` with ``a_i = (i-1)(n+M)``, gaps of length M."""

    k: int
    n: int
    M: int = 0
    observables: list = field(default_factory=list)

    def __post_init__(self):
        if self.k < 1 or self.n < 1 or self.M < 0:
            raise ValueError("need k >= 1, n >= 1, M >= 0")
        if isinstance(self.observables, Observable):
            self.observables = [self.observables]
        if len(self.observables) not in (1, self.k):
            raise ValueError("give one observable or one per block")

    @property
    def starts(self) -> list:
        return [i * (self.n + self.M) for i in range(self.k)]

    @property
    def gap_starts(self) -> list:
        return [s + self.n for s in self.starts]

    @property
    def total_length(self) -> int:
        return self.k * (self.n + self.M)

    def observable(self, i: int) -> Observable:
        return self.observables[0] if len(self.observables) == 1 else self.observables[i]
