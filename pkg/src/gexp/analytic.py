"""Closed-form Brownian quantities and Monte-Carlo volatility control.

Closed forms: the alternating theta series for the two-sided small-ball
probability P(sup_{[0,1]} |B| <= x), a high-accuracy normal tail, and the
capacity pairs of band-driven sup events, which reduce to classical Brownian
probabilities at the extreme volatilities (small balls are monotone in the
volatility, and the reflection principle handles one-sided maxima).

Monte Carlo: Euler simulation of volatility-controlled paths with a
coordinate-ascent search over a finite feedback-policy family.  Because the
search optimizes over a subset of all adapted controls, its value is a
certified lower bound (up to sampling error and discretization bias) on the
matching upper expectation, never an estimate of it from above.

Path batches are seeded counter-style via Philox keys (seed, batch index)
and reduced in batch order, so results are bit-stable for a fixed seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .core import CapacityPair, PathFunctional, VolatilityBand

__all__ = [
    "SeriesResult",
    "ControlPolicy",
    "PolicyFamily",
    "PolicySearchResult",
    "McEstimate",
    "AndersonResult",
    "DegenerateBandWarning",
    "std_small_ball",
    "normal_tail",
    "normal_quantile",
    "gcap_sup_abs",
    "gcap_onesided_sup",
    "mc_policy_value",
    "anderson_shift_check",
]

_MC_BATCH = 1 << 14


class DegenerateBandWarning(UserWarning):
    """Signals that a zero lower volatility forced a degenerate limit value."""


@dataclass(frozen=True)
class SeriesResult:
    """A truncated-series probability with its recorded remainder bound."""

    value: float
    terms_used: int
    truncation_bound: float

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise ValueError(f"series value outside [0,1]: {self.value!r}")
        if self.truncation_bound > 1e-15:
            raise ValueError(f"truncation bound too large: {self.truncation_bound!r}")


def std_small_ball(x: float) -> SeriesResult:
    """P(sup_{[0,1]} |B| <= x) for standard Brownian motion.

    Alternating theta series (4/pi) sum_k (-1)^k exp(-(2k+1)^2 pi^2/(8x^2))
    / (2k+1), truncated at the first term below 1e-16; the recorded
    truncation bound is that term, which dominates the remainder because the
    terms decrease.
    """
    if not (x > 0):
        raise ValueError(f"need x > 0, got {x!r}")
    if math.isinf(x):
        return SeriesResult(value=1.0, terms_used=0, truncation_bound=0.0)
    a = math.pi**2 / (8.0 * x * x)
    if a >= 745.0:  # exp underflows; true value below 1e-300
        return SeriesResult(value=0.0, terms_used=1, truncation_bound=0.0)
    # Terms fall below 1e-16 once (2k+1)^2 a >= 38; cap the index generously.
    k_max = int(math.sqrt(40.0 / a) / 2.0) + 3
    k = np.arange(k_max)
    odd = 2 * k + 1
    terms = (4.0 / math.pi) * np.exp(-(odd.astype(float) ** 2) * a) / odd
    small = np.nonzero(terms < 1e-16)[0]
    cut = int(small[0]) if len(small) else len(terms)
    cut = max(cut, 1)
    trunc = float(terms[cut]) if cut < len(terms) else 0.0
    signs = np.where(k[:cut] % 2 == 0, 1.0, -1.0)
    value = float(np.sum(signs * terms[:cut]))
    return SeriesResult(value=min(max(value, 0.0), 1.0), terms_used=cut, truncation_bound=trunc)


# ---------------------------------------------------------------------------
# Normal tail via Cody-style rational approximations of erfc
# ---------------------------------------------------------------------------

_ERF_A = (
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
)
_ERF_B = (
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
)
_ERF_C = (
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
)
_ERF_D = (
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
)
_ERF_P = (
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
)
_ERF_Q = (
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
)
_ONE_OVER_SQRT_PI = 5.6418958354775628695e-1


def _erfc_positive(y: float) -> float:
    """erfc(y) for y >= 0 by the classical three-interval rational scheme."""
    if y <= 0.46875:
        ysq = y * y
        xnum = _ERF_A[4] * ysq
        xden = ysq
        for i in range(3):
            xnum = (xnum + _ERF_A[i]) * ysq
            xden = (xden + _ERF_B[i]) * ysq
        erf = y * (xnum + _ERF_A[3]) / (xden + _ERF_B[3])
        return 1.0 - erf
    if y <= 4.0:
        xnum = _ERF_C[8] * y
        xden = y
        for i in range(7):
            xnum = (xnum + _ERF_C[i]) * y
            xden = (xden + _ERF_D[i]) * y
        result = (xnum + _ERF_C[7]) / (xden + _ERF_D[7])
    else:
        if y >= 26.7:  # exp(-y^2) underflows
            return 0.0
        ysq = 1.0 / (y * y)
        xnum = _ERF_P[5] * ysq
        xden = ysq
        for i in range(4):
            xnum = (xnum + _ERF_P[i]) * ysq
            xden = (xden + _ERF_Q[i]) * ysq
        result = ysq * (xnum + _ERF_P[4]) / (xden + _ERF_Q[4])
        result = (_ONE_OVER_SQRT_PI - result) / y
    # Split the exponent to keep full accuracy in exp(-y^2).
    ysq16 = math.floor(y * 16.0) / 16.0
    dely = (y - ysq16) * (y + ysq16)
    return math.exp(-ysq16 * ysq16) * math.exp(-dely) * result


def normal_tail(x: float) -> float:
    """1 - Phi(x), the standard normal upper tail, to ~1e-16 relative error.

    Evaluates erfc(x/sqrt(2)) by Cody's rational approximations on three
    intervals, the classical double-precision scheme; the symmetry identity
    normal_tail(-x) = 1 - normal_tail(x) holds to rounding by construction.
    """
    x = float(x)
    if math.isnan(x):
        raise ValueError("normal_tail is undefined for nan")
    if math.isinf(x):
        return 0.0 if x > 0 else 1.0
    z = x / math.sqrt(2.0)
    if z >= 0:
        return 0.5 * _erfc_positive(z)
    return 0.5 * (2.0 - _erfc_positive(-z))


def normal_quantile(q: float) -> float:
    """Inverse of Phi by bisection on :func:`normal_tail` (deterministic)."""
    if not (0.0 < q < 1.0):
        raise ValueError(f"quantile level must be in (0,1), got {q!r}")
    lo, hi = -12.0, 12.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 1.0 - normal_tail(mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Capacity closed forms at the extreme volatilities
# ---------------------------------------------------------------------------


def _ssb_scaled(x: float, sigma: float) -> float:
    """P(sup |sigma B| <= x); the zero-volatility limit is 1 for x > 0."""
    if sigma == 0.0:
        return 1.0
    return std_small_ball(x / sigma).value


def gcap_sup_abs(x: float, band: VolatilityBand, event_direction: str) -> CapacityPair:
    """Capacity pair of {sup_{[0,1]} |W| <= x} or {>= x} over the band.

    Small balls shrink as volatility grows, so the upper capacity of the
    "<=" event sits at the lower volatility and the lower capacity at the
    upper one; the ">=" event is the complement with the roles exchanged.
    A zero lower volatility makes the "<=" upper capacity (resp. the ">="
    lower capacity) degenerate: the frozen path stays inside every ball.
    """
    if not (x > 0):
        raise ValueError(f"need x > 0, got {x!r}")
    if event_direction not in ("le", "ge"):
        raise ValueError(f"event_direction must be 'le' or 'ge', got {event_direction!r}")
    lo, hi = band.sigma_lo, band.sigma_hi
    if lo == 0.0:
        warnings.warn(
            "zero lower volatility: sup-event capacity takes its degenerate limit",
            DegenerateBandWarning,
            stacklevel=2,
        )
    if event_direction == "le":
        upper = _ssb_scaled(x, lo)
        lower = _ssb_scaled(x, hi)
    else:
        upper = 1.0 - _ssb_scaled(x, hi)
        lower = 1.0 - _ssb_scaled(x, lo)
    return CapacityPair.from_backend(upper, lower, tol=1e-14)


def gcap_onesided_sup(x: float, band: VolatilityBand) -> CapacityPair:
    """Capacity pair of {sup_{[0,1]} W >= x} via the reflection principle.

    Both members are 2 * normal_tail(x / sigma) at the extreme volatilities,
    clamped to [0, 1]; a zero lower volatility gives the degenerate limit 0
    for the lower capacity.
    """
    if not (x > 0):
        raise ValueError(f"need x > 0, got {x!r}")
    lo, hi = band.sigma_lo, band.sigma_hi
    if hi == 0.0:
        upper = 0.0
    else:
        upper = min(2.0 * normal_tail(x / hi), 1.0)
    if lo == 0.0:
        warnings.warn(
            "zero lower volatility: one-sided sup capacity takes its degenerate limit 0",
            DegenerateBandWarning,
            stacklevel=2,
        )
        lower = 0.0
    else:
        lower = min(2.0 * normal_tail(x / lo), 1.0)
    return CapacityPair.from_backend(upper, lower, tol=1e-14)


# ---------------------------------------------------------------------------
# Monte-Carlo volatility control
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McEstimate:
    """A Monte-Carlo mean with its standard error and budget echo."""

    mean: float
    std_error: float
    paths: int
    steps: int
    seed: int


class AndersonResult(NamedTuple):
    shifted: McEstimate
    centered: McEstimate
    diff_mean: float
    diff_se: float


@dataclass(frozen=True)
class ControlPolicy:
    """Feedback volatility policy on a coarse (time x position x max) grid.

    Cell values live in the band; position bin edges scale like sigma_hi
    sqrt(t) so every cell has comparable occupancy under a neutral path law,
    which keeps the coordinate ascent informative in all cells.
    """

    band: VolatilityBand
    time_bins: int
    pos_bins: int
    max_bins: int
    table: np.ndarray  # (time_bins, pos_bins, max_bins)
    pos_edges_base: np.ndarray  # standard-normal quantiles, len pos_bins-1
    max_edges_base: np.ndarray  # multiples of sigma_hi sqrt(t), len max_bins-1

    def __post_init__(self):
        if self.table.shape != (self.time_bins, self.pos_bins, self.max_bins):
            raise ValueError("policy table shape mismatch")
        if not self.band.contains(self.table):
            raise ValueError("policy table values outside band")

    @property
    def n_cells(self) -> int:
        return self.table.size

    def extreme_fraction(self, which: str) -> float:
        target = self.band.sigma_hi if which == "hi" else self.band.sigma_lo
        return float(np.mean(self.table == target))

    def sigma_for_step(self, k: int, steps: int, x: np.ndarray, m: np.ndarray) -> np.ndarray:
        tb = min(int(k * self.time_bins / steps), self.time_bins - 1)
        t_mid = (tb + 0.5) / self.time_bins
        scale = self.band.sigma_hi * math.sqrt(t_mid) + 1e-12
        pb = np.searchsorted(self.pos_edges_base * scale, x)
        if self.max_bins > 1:
            mb = np.searchsorted(self.max_edges_base * scale, m)
        else:
            mb = np.zeros(len(x), dtype=np.int64)
        return self.table[tb, pb, mb]

    @classmethod
    def constant(cls, band: VolatilityBand, sigma: float) -> "ControlPolicy":
        return cls(
            band=band,
            time_bins=1,
            pos_bins=1,
            max_bins=1,
            table=np.full((1, 1, 1), float(sigma)),
            pos_edges_base=np.empty(0),
            max_edges_base=np.empty(0),
        )


@dataclass(frozen=True)
class PolicyFamily:
    """Search space for :func:`mc_policy_value`: bang-bang feedback tables
    on a coarse grid, plus the two constant extreme policies."""

    time_bins: int = 4
    pos_bins: int = 5
    max_bins: int = 1
    restarts: int = 2
    sweeps: int = 2

    def make(self, band: VolatilityBand, bits: np.ndarray) -> ControlPolicy:
        values = np.where(bits, band.sigma_hi, band.sigma_lo).astype(float)
        q = np.array([normal_quantile((i + 1) / self.pos_bins) for i in range(self.pos_bins - 1)])
        if self.max_bins > 1:
            me = np.linspace(0.8, 1.6, self.max_bins - 1)
        else:
            me = np.empty(0)
        return ControlPolicy(
            band=band,
            time_bins=self.time_bins,
            pos_bins=self.pos_bins,
            max_bins=self.max_bins,
            table=values.reshape(self.time_bins, self.pos_bins, self.max_bins),
            pos_edges_base=q,
            max_edges_base=me,
        )


@dataclass(frozen=True)
class PolicySearchResult:
    best: McEstimate
    policy: ControlPolicy
    bias_proxy: float
    doubled: McEstimate
    candidates_evaluated: int

    def extreme_fraction(self, which: str) -> float:
        return self.policy.extreme_fraction(which)


def _batch_rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed), int(batch)]))


def _apply_functional(f: PathFunctional, m_abs, m_signed, w):
    if f.summary_dimension == 1:
        return np.asarray(f.terminal(None, w), dtype=float)
    if f.kind == "max_signed":
        return np.asarray(f.terminal(m_signed, w), dtype=float)
    return np.asarray(f.terminal(m_abs, w), dtype=float)


def _simulate_policy(
    f: PathFunctional,
    policy: ControlPolicy,
    z: np.ndarray,
) -> np.ndarray:
    """Euler-simulate all paths of the normals block under the policy."""
    paths, steps = z.shape
    sq = math.sqrt(1.0 / steps)
    w = np.zeros(paths)
    m_abs = np.zeros(paths)
    m_signed = np.zeros(paths)
    for k in range(steps):
        sig = policy.sigma_for_step(k, steps, w, m_abs)
        w = w + sig * sq * z[:, k]
        np.maximum(m_abs, np.abs(w), out=m_abs)
        np.maximum(m_signed, w, out=m_signed)
    return _apply_functional(f, m_abs, m_signed, w)


def _estimate(values: np.ndarray, steps: int, seed: int) -> McEstimate:
    n = len(values)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return McEstimate(mean=mean, std_error=se, paths=n, steps=steps, seed=seed)


def mc_policy_value(
    f: PathFunctional,
    band: VolatilityBand,
    policy_family: PolicyFamily,
    paths: int,
    steps: int,
    seed: int,
) -> PolicySearchResult:
    """Best Monte-Carlo value of ``f`` over the policy family.

    Coordinate ascent flips one bang-bang cell at a time under common random
    numbers, restarted from seeded random tables; the two constant extreme
    policies always compete.  The returned mean minus sampling error is a
    lower bound on the corresponding upper expectation up to discretization
    bias, for which the steps-doubling delta is recorded as a proxy.
    """
    if paths < 100:
        raise ValueError(f"need at least 100 paths, got {paths}")
    if steps < 2:
        raise ValueError(f"need at least 2 steps, got {steps}")
    rng = _batch_rng(seed, 0)
    z = rng.standard_normal((paths, steps))

    evaluated = 0

    def value_of(policy: ControlPolicy) -> float:
        nonlocal evaluated
        evaluated += 1
        return float(np.mean(_simulate_policy(f, policy, z)))

    candidates: list[tuple[float, ControlPolicy]] = []
    for sigma in (band.sigma_hi, band.sigma_lo):
        pol = ControlPolicy.constant(band, sigma)
        candidates.append((value_of(pol), pol))

    n_cells = policy_family.time_bins * policy_family.pos_bins * policy_family.max_bins
    init_rng = _batch_rng(seed, 1)
    for _ in range(policy_family.restarts):
        bits = init_rng.integers(0, 2, size=n_cells).astype(bool)
        best_val = value_of(policy_family.make(band, bits))
        for _ in range(policy_family.sweeps):
            improved = False
            for cell in range(n_cells):
                bits[cell] = ~bits[cell]
                trial = value_of(policy_family.make(band, bits))
                if trial > best_val:
                    best_val = trial
                    improved = True
                else:
                    bits[cell] = ~bits[cell]
            if not improved:
                break
        candidates.append((best_val, policy_family.make(band, bits)))

    best_val, best_policy = max(candidates, key=lambda c: c[0])
    values = _simulate_policy(f, best_policy, z)
    best = _estimate(values, steps, seed)

    z2 = _batch_rng(seed, 2).standard_normal((paths, 2 * steps))
    doubled = _estimate(_simulate_policy(f, best_policy, z2), 2 * steps, seed)
    return PolicySearchResult(
        best=best,
        policy=best_policy,
        bias_proxy=abs(doubled.mean - best.mean),
        doubled=doubled,
        candidates_evaluated=evaluated,
    )


def anderson_shift_check(
    y: float,
    x: float,
    paths: int,
    steps: int,
    seed: int,
) -> AndersonResult:
    """Estimate P(sup |B + y| <= x) and P(sup |B| <= x) with common paths.

    Both indicators are computed from the same Brownian draws, so the
    difference estimate carries its own (much smaller) standard error; the
    shifted probability can never exceed the centered one beyond noise.
    """
    if paths < 100:
        raise ValueError(f"need at least 100 paths, got {paths}")
    if steps < 2:
        raise ValueError(f"need at least 2 steps, got {steps}")
    if not (x > 0):
        raise ValueError(f"need x > 0, got {x!r}")
    sq = math.sqrt(1.0 / steps)
    n_done = 0
    sum_s = 0.0
    sum_c = 0.0
    sum_d = 0.0
    sum_d2 = 0.0
    batch_idx = 0
    while n_done < paths:
        b = min(_MC_BATCH, paths - n_done)
        z = _batch_rng(seed, batch_idx).standard_normal((b, steps))
        w = np.cumsum(z, axis=1) * sq
        max_c = np.max(np.abs(w), axis=1)
        max_s = np.maximum(np.max(np.abs(w + y), axis=1), abs(y))
        i_c = (max_c <= x).astype(float)
        i_s = (max_s <= x).astype(float)
        d = i_s - i_c
        sum_s += float(np.sum(i_s))
        sum_c += float(np.sum(i_c))
        sum_d += float(np.sum(d))
        sum_d2 += float(np.sum(d * d))
        n_done += b
        batch_idx += 1
    n = float(paths)
    p_s, p_c = sum_s / n, sum_c / n
    se_s = math.sqrt(max(p_s * (1.0 - p_s), 0.0) / n)
    se_c = math.sqrt(max(p_c * (1.0 - p_c), 0.0) / n)
    d_mean = sum_d / n
    d_var = max(sum_d2 / n - d_mean**2, 0.0)
    d_se = math.sqrt(d_var / n)
    return AndersonResult(
        shifted=McEstimate(p_s, se_s, paths, steps, seed),
        centered=McEstimate(p_c, se_c, paths, steps, seed),
        diff_mean=d_mean,
        diff_se=d_se,
    )
