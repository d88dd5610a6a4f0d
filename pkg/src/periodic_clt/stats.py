"""Moments, Lindeberg functions, CLT condition ratios and KS distances."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from math import fsum, sqrt
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .exceptions import EmptyInput
from .rng import NUM_BATCHES

DEFAULT_ETA_GRID = (0.05, 0.1, 0.25, 0.5, 1.0)


# ----------------------------------------------------------------------
# moments
# ----------------------------------------------------------------------
@dataclass
class MomentReport:
    mean: object
    variance: object
    mode: str = "exact"
    sample_count: int = 0
    standard_error: float | None = None


def _is_exact(xs) -> bool:
    return all(isinstance(x, (int, Fraction)) and not isinstance(x, bool) for x in xs)


def moments(values: Sequence, weights: Sequence | None = None) -> MomentReport:
    """Mean and population variance under uniform or given weights.

    Integer/Fraction inputs give exact Fractions; anything else is
    computed in floating point.
    """
    values = list(values)
    if not values:
        raise EmptyInput("no values")
    if weights is not None:
        weights = list(weights)
        if len(weights) != len(values):
            raise ValueError("values and weights differ in length")
    if _is_exact(values) and (weights is None or _is_exact(weights)):
        if weights is None:
            weights = [Fraction(1, len(values))] * len(values)
        total = sum(weights, Fraction(0))
        if total != 1:
            raise ValueError("weights must sum to 1")
        mean = sum((w * v for w, v in zip(weights, values)), Fraction(0))
        var = sum((w * (v - mean) ** 2 for w, v in zip(weights, values)), Fraction(0))
        return MomentReport(mean=mean, variance=var, mode="exact", sample_count=len(values))
    v = np.asarray(values, dtype=float)
    w = np.full(len(v), 1.0 / len(v)) if weights is None else np.asarray([float(x) for x in weights])
    if abs(w.sum() - 1) > 1e-9:
        raise ValueError("weights must sum to 1")
    mean = fsum(w * v)
    var = fsum(w * (v - mean) ** 2)
    return MomentReport(mean=mean, variance=var, mode="exact", sample_count=len(v))


def monte_carlo_moments(samples: Sequence[float], batches: int = NUM_BATCHES) -> MomentReport:
    """Sample mean and population variance with a batch-means standard error."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise EmptyInput("no samples")
    mean = float(x.mean())
    var = float(((x - mean) ** 2).mean())
    se = None
    if x.size >= 2 * batches:
        bm = np.array([b.mean() for b in np.array_split(x, batches)])
        se = float(bm.std(ddof=1) / sqrt(batches))
    return MomentReport(mean=mean, variance=var, mode="monte-carlo",
                        sample_count=int(x.size), standard_error=se)


def lindeberg_function(values: Sequence, mean, cutoff, weights: Sequence | None = None):
    """``sum_z w(z) (v_z - mean)^2 1{|v_z - mean| > cutoff}``."""
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    values = list(values)
    if not values:
        raise EmptyInput("no values")
    if _is_exact(values) and _is_exact([mean]) and (weights is None or _is_exact(weights)):
        ws = weights if weights is not None else [Fraction(1, len(values))] * len(values)
        return sum((w * (v - mean) ** 2 for w, v in zip(ws, values) if abs(v - mean) > cutoff),
                   Fraction(0))
    d = np.asarray(values, dtype=float) - float(mean)
    w = np.full(len(d), 1.0 / len(d)) if weights is None else np.asarray([float(x) for x in weights])
    mask = np.abs(d) > float(cutoff)
    return fsum(w[mask] * d[mask] ** 2)


# ----------------------------------------------------------------------
# CLT conditions
# ----------------------------------------------------------------------
@dataclass
class ConditionReport:
    """Finite-``l`` values of the quantities in the CLT hypotheses.

    ``lindeberg_ratio`` and ``negligibility`` map each ``eta`` of the grid
    to its value.  ``oscillation_mode`` records how the oscillations were
    obtained ("bound" or "exact" over the independent set itself).
    """

    s_l: float
    oscillation_ratio_j1: float
    oscillation_ratio_j2: float
    uniform_oscillation_ratio: float
    gap_ratio: float
    lindeberg_ratio: dict = field(default_factory=dict)
    negligibility: dict = field(default_factory=dict)
    mode: str = "exact"
    oscillation_mode: str = "bound"
    sample_count: int = 0
    block_variance: float = 0.0
    degenerate: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lindeberg_ratio"] = {repr(float(k)): v for k, v in self.lindeberg_ratio.items()}
        d["negligibility"] = {repr(float(k)): v for k, v in self.negligibility.items()}
        return d


def _safe_ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return 0.0 if num == 0 else float("inf")


def conditions_from_sums(block_sums: np.ndarray, gap_sums: np.ndarray | None = None,
                         osc: np.ndarray | float = 0.0, uniform_osc: np.ndarray | float = 0.0,
                         eta_grid: Sequence[float] = DEFAULT_ETA_GRID,
                         mode: str = "exact", oscillation_mode: str = "bound") -> ConditionReport:
    """Condition ratios from per-point block and gap sums.

    Parameters
    ----------
    block_sums : ndarray of shape (N, k)
        ``S_{a_i}^n h`` for each of the N points (all of the set, or a
        uniform sample of it) and each block ``i``.
    gap_sums : ndarray of shape (N, k), optional
        ``S_{a_i+n}^M h``; omitted for gap-free arrays.
    osc : float or ndarray of shape (N, k)
        ``omega_{a_i}^n(h, 4 eps, p)``; a float stands for a uniform bound.
    uniform_osc : float or ndarray of shape (N,)
        ``omega^n(h, 2 eps, p)``.
    """
    B = np.asarray(block_sums, dtype=float)
    if B.ndim != 2 or B.shape[0] == 0:
        raise EmptyInput("block sums must be a non-empty (N, k) array")
    N, k = B.shape
    centred = B - B.mean(axis=0)
    block_var = (centred ** 2).mean(axis=0)
    s2 = float(fsum(block_var))
    s = sqrt(s2)

    osc_arr = np.broadcast_to(np.asarray(osc, dtype=float), (N, k))
    j1 = _safe_ratio(float(osc_arr.mean(axis=0).sum()), s)
    j2 = _safe_ratio(float((osc_arr ** 2).mean(axis=0).sum()), s2)
    u = np.broadcast_to(np.asarray(uniform_osc, dtype=float), (N,))
    uniform = _safe_ratio(float((u ** 2).mean()), float(block_var[0]))

    if gap_sums is None:
        gap = 0.0
    else:
        G = np.asarray(gap_sums, dtype=float).sum(axis=1)
        gap = _safe_ratio(float(((G - G.mean()) ** 2).mean()), s2)

    lind, negl = {}, {}
    absdev = np.abs(centred)
    for eta in eta_grid:
        cut = eta * s
        mask = absdev > cut
        lind[eta] = _safe_ratio(float((centred[mask] ** 2).sum()) / N, s2) if mask.any() else 0.0
        negl[eta] = float((absdev >= cut).mean(axis=0).max()) if s > 0 else 1.0
    return ConditionReport(
        s_l=s,
        oscillation_ratio_j1=j1,
        oscillation_ratio_j2=j2,
        uniform_oscillation_ratio=uniform,
        gap_ratio=gap,
        lindeberg_ratio=lind,
        negligibility=negl,
        mode=mode,
        oscillation_mode=oscillation_mode,
        sample_count=N,
        block_variance=float(block_var[0]),
        degenerate=s2 == 0,
    )


# ----------------------------------------------------------------------
# distribution distances
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class NormalMixture:
    """``t -> sum_j p_j N(t / sigma_j)``; ``sigma_j = 0`` is a unit mass at 0
    whose distribution function is ``1{t > 0}``."""

    sigmas: tuple
    probs: tuple

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigmas)
        pr = tuple(float(p) for p in self.probs)
        if len(sig) != len(pr) or not sig:
            raise ValueError("need one probability per sigma")
        if any(s < 0 for s in sig) or any(p < 0 for p in pr):
            raise ValueError("sigmas and probabilities must be nonnegative")
        if abs(sum(pr) - 1) > 1e-9:
            raise ValueError("mixture probabilities must sum to 1")
        object.__setattr__(self, "sigmas", sig)
        object.__setattr__(self, "probs", pr)

    @classmethod
    def standard_normal(cls):
        return cls((1.0,), (1.0,))

    @property
    def atom_mass(self) -> float:
        return sum(p for s, p in zip(self.sigmas, self.probs) if s == 0)

    def cdf(self, t, side: str = "value") -> np.ndarray:
        """Distribution function; ``side`` picks the left limit, the value
        (the convention used at an atom) or the right limit."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for s, p in zip(self.sigmas, self.probs):
            if s > 0:
                out += p * ndtr(t / s)
            elif side == "right":
                out += p * (t >= 0)
            else:
                out += p * (t > 0)
        return out

    def to_dict(self) -> dict:
        return {"sigmas": list(self.sigmas), "probs": list(self.probs)}


@dataclass
class DistributionDistance:
    ks_statistic: float
    sample_count: int
    reference: dict

    def to_dict(self) -> dict:
        return asdict(self)


def ks_distance(samples: Sequence[float], reference: NormalMixture | None = None,
                weights: Sequence[float] | None = None) -> DistributionDistance:
    """Sup distance between the (optionally weighted) empirical CDF and
    ``reference``.

    The supremum is attained at a sample point or an atom, approached from
    the left or the right, so it suffices to compare both one-sided limits
    of both functions there.  The value assigned at an atom itself is then
    irrelevant.
    """
    ref = reference or NormalMixture.standard_normal()
    x = np.asarray(samples, dtype=float)
    N = x.size
    if N == 0:
        raise EmptyInput("no samples")
    order = np.argsort(x, kind="stable")
    x = x[order]
    if weights is None:
        w = np.full(N, 1.0 / N)
    else:
        w = np.asarray([float(v) for v in weights])[order]
    cum = np.concatenate([[0.0], np.cumsum(w)])
    cum /= cum[-1]
    pts = x
    if ref.atom_mass > 0:
        pts = np.union1d(x, [0.0])
    emp_right = cum[np.searchsorted(x, pts, side="right")]
    emp_left = cum[np.searchsorted(x, pts, side="left")]
    f_left = ref.cdf(pts, "left")
    f_right = ref.cdf(pts, "right")
    d = max(np.abs(emp_left - f_left).max(), np.abs(emp_right - f_right).max())
    return DistributionDistance(ks_statistic=float(min(d, 1.0)), sample_count=int(N),
                                reference=ref.to_dict())


def write_cdf_csv(path, samples: Sequence[float], reference: NormalMixture | None = None,
                  points: int = 201) -> None:
    ref = reference or NormalMixture.standard_normal()
    x = np.sort(np.asarray(samples, dtype=float))
    lo, hi = min(-4.0, float(x[0])), max(4.0, float(x[-1]))
    grid = np.linspace(lo, hi, points)
    emp = np.searchsorted(x, grid, side="right") / x.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "empirical", "reference"])
        for t, e, r in zip(grid, emp, ref.cdf(grid)):
            w.writerow([f"{t:.17g}", f"{e:.17g}", f"{r:.17g}"])


def moments_dict(report: MomentReport) -> Mapping:
    d = asdict(report)
    for key in ("mean", "variance"):
        if isinstance(d[key], Fraction):
            d[key] = str(d[key])
    return d


# ----------------------------------------------------------------------
# sums and conditions over an independent set
# ----------------------------------------------------------------------
def array_sums(h, words: np.ndarray, starts: Sequence[int], n: int, M: int = 0,
               chunk_cells: int = 1 << 22):
    """Block sums ``S_{a_i}^n h`` and gap sums ``S_{a_i+n}^M h`` per row.

    ``h`` is one observable or a list with one observable per block (the
    gap after block ``i`` then uses ``h[i]``).  Rows are processed in
    chunks so that at most ``chunk_cells`` position values are alive.
    """
    from .observables import block_sums

    words = np.asarray(words)
    N, K = words.shape
    k = len(starts)
    per_block = list(h) if isinstance(h, (list, tuple)) else None
    if per_block is not None and len(per_block) != k:
        raise ValueError("need one observable per block")
    step = max(1, chunk_cells // max(K, 1))
    B = np.empty((N, k))
    G = np.zeros((N, k))
    gap_starts = [s + n for s in starts]
    for lo in range(0, N, step):
        chunk = words[lo:lo + step]
        if per_block is None:
            V = h.position_values(chunk)
            B[lo:lo + step] = block_sums(V, starts, n)
            if M:
                G[lo:lo + step] = block_sums(V, gap_starts, M)
            continue
        cache = {}
        for i, hi in enumerate(per_block):
            if id(hi) not in cache:
                cache[id(hi)] = hi.position_values(chunk)
            V = cache[id(hi)]
            B[lo:lo + step, i] = block_sums(V, [starts[i]], n)[:, 0]
            if M:
                G[lo:lo + step, i] = block_sums(V, [gap_starts[i]], M)[:, 0]
    return B, G


def set_oscillations(system, words: np.ndarray, block_sums: np.ndarray,
                     starts: Sequence[int], n: int, radius) -> np.ndarray:
    """Exact ``omega_{a_i}^n(h, radius, p)`` with ``Y`` the set itself.

    ``block_sums[:, 0]`` must hold ``S^n h`` of every row.  An empty ball
    contributes 0.
    """
    from .systems import unroll_rows

    words = np.asarray(words)
    N, K = words.shape
    L = system.ball_length(n, radius)
    U = unroll_rows(words, K + L)
    first = block_sums[:, 0]
    keys0 = [U[j, :L].tobytes() for j in range(N)]
    lo, hi = {}, {}
    for key, v in zip(keys0, first):
        lo[key] = min(lo.get(key, v), v)
        hi[key] = max(hi.get(key, v), v)
    out = np.zeros((N, len(starts)))
    for i, a in enumerate(starts):
        for j in range(N):
            key = U[j, a:a + L].tobytes()
            if key in lo:
                ref = block_sums[j, i]
                out[j, i] = max(abs(ref - lo[key]), abs(ref - hi[key]))
    return out


def condition_report(indep, h, eta_grid: Sequence[float] = DEFAULT_ETA_GRID,
                     words: np.ndarray | None = None, oscillation_mode: str = "bound",
                     budget: int = 1 << 15) -> ConditionReport:
    """Condition ratios for a fitted global or local independent set.

    Without ``words`` the whole set is enumerated (exact mode); otherwise
    ``words`` is taken as a uniform sample (Monte Carlo mode).  Exact
    oscillations need the whole set.
    """
    from .observables import oscillation_bound

    system, eps, n = indep.system_, indep.epsilon_, indep.n
    M = getattr(indep, "M_", 0)
    mode = "exact"
    if words is None:
        _, words = indep.materialize(budget)
    else:
        mode = "monte-carlo"
    starts = indep.block_starts
    B, G = array_sums(h, words, starts, n, M)
    if oscillation_mode == "exact":
        if mode != "exact":
            raise ValueError("exact oscillations need the enumerated set")
        osc = set_oscillations(system, words, B, starts, n, 4 * eps)
        uni = set_oscillations(system, words, B, starts[:1], n, 2 * eps)[:, 0]
    elif oscillation_mode == "bound":
        osc = oscillation_bound(h, system, 4 * eps, n)
        uni = oscillation_bound(h, system, 2 * eps, n)
    else:
        raise ValueError("oscillation_mode must be 'exact' or 'bound'")
    return conditions_from_sums(B, G if M else None, osc, uni, eta_grid, mode, oscillation_mode)
