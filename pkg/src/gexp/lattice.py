"""Random-walk backends for upper/lower expectations over a volatility band.

Two cross-validating backends evaluate path functionals of the scaled walk
S_k = sum of adversarially scaled symmetric +-sigma steps:

- :func:`exact_walk_value` enumerates the full non-recombining tree of
  (sigma, sign) choices and applies the backward optimization exactly (up to
  float rounding); it is the brute-force oracle and is gated by a feasibility
  guard.
- :func:`grid_walk_value` runs the same backward recursion on a value
  function sampled on a uniform spatial grid (plus a summary grid for
  running-maximum functionals), with piecewise-linear interpolation for
  off-grid children and an advertised tolerance from a coarse-vs-fine
  refinement pass.

The recursion at each step maximizes (upper) or minimizes (lower) over the
step family the two-point average of the next value function, which is the
one-step dynamic-programming form of independence under a sublinear
expectation.  Piecewise-linear interpolation is used deliberately: it is
monotone, so capacity values stay inside [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .core import (
    CapacityPair,
    PathFunctional,
    ScalarTestFunction,
    UpperLowerPair,
    VolatilityBand,
    mollified_indicator,
    running_max_abs_functional,
    running_max_functional,
    terminal_functional,
)

__all__ = [
    "StepFamily",
    "WalkSpec",
    "SpatialGrid",
    "DPValue",
    "CapacityBracket",
    "BoundaryClampError",
    "GridCoverageError",
    "one_step_upper",
    "exact_walk_value",
    "grid_walk_value",
    "walk_capacity",
    "sample_walk_path",
    "ConstantPolicy",
    "max_abs_statistic",
    "max_signed_statistic",
    "final_position_statistic",
]

# Enumeration feasibility guard for the exact tree: n * ceil(log2(2K)) <= this.
_EXACT_GUARD_BITS = 26
# Largest vectorized sub-tree in the exact enumeration (leaves).
_EXACT_BLOCK = 1 << 20
# Relative bracket width target of the ternary refinement over sigma.
_REFINE_REL_WIDTH = 1e-6


class BoundaryClampError(RuntimeError):
    """Raised when clamped off-grid evaluations can plausibly bias the result."""


class GridCoverageError(ValueError):
    """Raised when a spatial grid does not cover the walk's effective support."""


@dataclass(frozen=True)
class StepFamily:
    """Finite family of symmetric two-point step laws over a volatility band.

    Each member sigma carries the law (delta_{+sigma} + delta_{-sigma}) / 2,
    so the family realizes mean zero with upper second moment sigma_hi^2 and
    lower second moment sigma_lo^2 using the smallest possible support.  The
    grid always contains both band endpoints.
    """

    band: VolatilityBand
    sigma_grid: tuple[float, ...]

    def __post_init__(self):
        g = self.sigma_grid
        if len(g) < 1:
            raise ValueError("sigma_grid must be nonempty")
        if any(b < a for a, b in zip(g, g[1:])):
            raise ValueError("sigma_grid must be nondecreasing")
        if not self.band.contains(np.asarray(g)):
            raise ValueError("sigma_grid members must lie inside the band")
        if g[0] != self.band.sigma_lo or g[-1] != self.band.sigma_hi:
            raise ValueError("sigma_grid must include both band endpoints")

    @classmethod
    def from_band(cls, band: VolatilityBand, k: int = 16) -> "StepFamily":
        if k < 2:
            raise ValueError(f"need at least 2 family members, got k={k}")
        grid = np.linspace(band.sigma_lo, band.sigma_hi, k)
        grid[0], grid[-1] = band.sigma_lo, band.sigma_hi
        return cls(band=band, sigma_grid=tuple(float(s) for s in grid))

    @property
    def k(self) -> int:
        return len(self.sigma_grid)

    def unique_sigmas(self) -> np.ndarray:
        return np.unique(np.asarray(self.sigma_grid, dtype=float))

    # Induced one-step moments (exact for the two-point family).
    @property
    def upper_second_moment(self) -> float:
        return self.band.sigma_hi**2

    @property
    def lower_second_moment(self) -> float:
        return self.band.sigma_lo**2

    def upper_abs_moment(self, p: float) -> float:
        return self.band.sigma_hi**p


@dataclass(frozen=True)
class WalkSpec:
    """An n-step walk under a step family, in raw or sqrt(n)-scaled coordinates."""

    n: int
    family: StepFamily
    scale: str = "sqrt_n"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need n >= 1, got {self.n}")
        if self.scale not in ("raw", "sqrt_n"):
            raise ValueError(f"scale must be 'raw' or 'sqrt_n', got {self.scale!r}")

    @property
    def step_scale(self) -> float:
        """Spatial size of one unit-volatility step in the working coordinate."""
        return 1.0 / math.sqrt(self.n) if self.scale == "sqrt_n" else 1.0

    @property
    def sigma_hi_scaled(self) -> float:
        """Diffusive position scale of the walk in the working coordinate."""
        s = self.family.band.sigma_hi
        return s if self.scale == "sqrt_n" else s * math.sqrt(self.n)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform symmetric grid on [-half_width, half_width] with an odd point count."""

    half_width: float
    points: int

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.points < 201:
            raise ValueError(f"need at least 201 grid points, got {self.points}")
        if self.points % 2 == 0:
            raise ValueError("point count must be odd so that 0 is a grid node")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points)

    @classmethod
    def for_walk(
        cls,
        spec: WalkSpec,
        points_per_step: int = 4,
        half_width: float | None = None,
        width_mult: float = 6.0,
    ) -> "SpatialGrid":
        """Grid whose spacing divides the sigma_hi step exactly.

        Aligning the extreme-volatility children with grid nodes removes all
        interpolation error along bang-bang optimal policies.  The half width
        defaults to ``width_mult`` diffusive scales; a smaller explicit
        ``half_width`` is allowed for functionals that are exactly flat
        beyond it (see :func:`grid_walk_value`).
        """
        if points_per_step < 1:
            raise ValueError("points_per_step must be >= 1")
        sig_hi = spec.family.band.sigma_hi
        if sig_hi <= 0:
            raise ValueError("grid construction needs sigma_hi > 0")
        target = half_width if half_width is not None else width_mult * spec.sigma_hi_scaled
        r = int(points_per_step)
        while True:
            dx = sig_hi * spec.step_scale / r
            half_cells = max(int(math.ceil(target / dx - 1e-9)), 1)
            m = 2 * half_cells + 1
            if m >= 201:
                return cls(half_width=half_cells * dx, points=m)
            r *= 2


@dataclass(frozen=True)
class DPValue:
    """A backend result: the value pair, its advertised tolerance and diagnostics.

    ``backend_tol`` is the tolerance the producing backend is willing to
    certify; ``refinement_info`` records grid sizes, the refinement delta and
    boundary-clamp counters so the number is auditable.
    """

    pair: UpperLowerPair
    backend_tol: float
    refinement_info: dict

    def __post_init__(self):
        if not (self.backend_tol > 0):
            raise ValueError("backend_tol must be positive")


@dataclass(frozen=True)
class CapacityBracket:
    """Mollifier bracket of a capacity pair: outer and inner ramp values.

    The true upper capacity lies in [inner.upper_cap, outer.upper_cap] and the
    true lower capacity in [inner.lower_cap, outer.lower_cap], up to the
    producing backend's tolerance.
    """

    outer: CapacityPair
    inner: CapacityPair
    delta: float
    absolute_width: bool
    backend_tol: float

    @property
    def upper_width(self) -> float:
        return self.outer.upper_cap - self.inner.upper_cap

    @property
    def lower_width(self) -> float:
        return self.outer.lower_cap - self.inner.lower_cap

    def contains_upper(self, value: float, widen: float = 0.0) -> bool:
        return self.inner.upper_cap - widen <= value <= self.outer.upper_cap + widen

    def contains_lower(self, value: float, widen: float = 0.0) -> bool:
        return self.inner.lower_cap - widen <= value <= self.outer.lower_cap + widen


def _refine_scalar(objective: Callable, lo: float, hi: float, width: float, maximize: bool) -> float:
    """Ternary search for an interior optimum; ties move toward larger sigma."""
    if hi <= lo:
        return objective(lo)
    while hi - lo > width:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        f1, f2 = objective(m1), objective(m2)
        if (f1 <= f2) if maximize else (f1 >= f2):
            lo = m1
        else:
            hi = m2
    return objective(0.5 * (lo + hi))


def one_step_upper(psi: ScalarTestFunction | Callable, family: StepFamily, step_scale: float) -> float:
    """sup over the band of the symmetric two-point average of psi at +-sigma*h.

    Scans the family grid first, then polishes the bracket around the grid
    argmax by ternary search down to a width of 1e-6 band widths; ties are
    broken toward the larger sigma so runs are bit-reproducible.
    """
    if step_scale <= 0:
        raise ValueError(f"step_scale must be positive, got {step_scale!r}")
    h = float(step_scale)
    sig = np.asarray(family.sigma_grid, dtype=float)
    vals = 0.5 * (np.asarray(psi(sig * h), dtype=float) + np.asarray(psi(-sig * h), dtype=float))
    j = len(sig) - 1 - int(np.argmax(vals[::-1]))
    best = float(vals[j])
    width = family.band.width
    if width > 0:
        lo = sig[max(j - 1, 0)]
        hi = sig[min(j + 1, len(sig) - 1)]
        obj = lambda s: 0.5 * (float(psi(s * h)) + float(psi(-s * h)))
        best = max(best, _refine_scalar(obj, float(lo), float(hi), _REFINE_REL_WIDTH * width, True))
    return best


# ---------------------------------------------------------------------------
# Exact tree backend
# ---------------------------------------------------------------------------


def _exact_feasible(n: int, two_k: int) -> bool:
    return n * math.ceil(math.log2(two_k)) <= _EXACT_GUARD_BITS


def _enumerate_block(
    f: PathFunctional,
    steps: np.ndarray,
    k0: int,
    n: int,
    pos0: np.ndarray,
    summ0: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Expand all (sigma, sign) paths of levels k0+1..n below the given states."""
    pos = pos0
    summ = summ0
    b = len(steps)
    for k in range(k0 + 1, n + 1):
        pos = (pos[:, None] + steps[None, :]).ravel()
        if summ is not None:
            summ = f.update(np.repeat(summ, b), k, pos)
    return pos, summ


def _fold_block(values: np.ndarray, levels: int, k_sigma: int, maximize: bool) -> np.ndarray:
    """Backward-fold leaf values: average the sign pair, optimize over sigma."""
    v = values
    for _ in range(levels):
        v = v.reshape(-1, k_sigma, 2).mean(axis=2)
        v = v.max(axis=1) if maximize else v.min(axis=1)
    return v


def _exact_value(spec: WalkSpec, f: PathFunctional, maximize: bool) -> float:
    sig = spec.family.unique_sigmas()
    k_sigma = len(sig)
    h = spec.step_scale
    # Child order per node: (s1,+), (s1,-), (s2,+), (s2,-), ...
    steps = (np.repeat(sig, 2) * np.tile([1.0, -1.0], k_sigma) * h).astype(float)
    two_k = 2 * k_sigma
    n = spec.n

    block_levels = n
    while two_k**block_levels > _EXACT_BLOCK:
        block_levels -= 1

    def value_from(k: int, pos: float, summ) -> float:
        rem = n - k
        if rem <= block_levels:
            p0 = np.array([pos], dtype=float)
            s0 = None if summ is None else np.array([summ], dtype=float)
            pos_leaf, summ_leaf = _enumerate_block(f, steps, k, n, p0, s0)
            leaves = np.asarray(f.terminal(summ_leaf, pos_leaf), dtype=float)
            leaves = np.ascontiguousarray(np.broadcast_to(leaves, pos_leaf.shape))
            if not np.all(np.isfinite(leaves)):
                raise ValueError("path functional produced non-finite values")
            return float(_fold_block(leaves, rem, k_sigma, maximize)[0])
        child_vals = np.empty(k_sigma)
        for j, s in enumerate(sig):
            acc = 0.0
            for sign in (1.0, -1.0):
                x_child = pos + sign * s * h
                s_child = summ if summ is None else f.update(summ, k + 1, x_child)
                acc += value_from(k + 1, x_child, s_child)
            child_vals[j] = 0.5 * acc
        return float(child_vals.max() if maximize else child_vals.min())

    init_summ = None if f.summary_dimension == 1 else f.init_summary
    return value_from(0, 0.0, init_summ)


def exact_walk_value(spec: WalkSpec, f: PathFunctional) -> DPValue:
    """Exact upper/lower expectation of ``f`` by full-tree backward recursion.

    Enumerates every (sigma, sign) path of the family's non-recombining tree
    and folds backward, maximizing (upper) resp. minimizing (lower) over
    sigma the two-point sign average at each level.  Values are exact up to
    float rounding; the advertised tolerance is 1e-12.
    """
    if spec.family.k < 2:
        raise ValueError(f"exact backend needs at least 2 family members, got K={spec.family.k}")
    k_sigma = len(spec.family.unique_sigmas())
    two_k = 2 * k_sigma
    if not _exact_feasible(spec.n, two_k):
        raise ValueError(
            f"enumeration infeasible: n*ceil(log2(2K)) = "
            f"{spec.n * math.ceil(math.log2(two_k))} exceeds {_EXACT_GUARD_BITS} "
            f"(n={spec.n}, effective K={k_sigma})"
        )
    upper = _exact_value(spec, f, maximize=True)
    lower = _exact_value(spec, f, maximize=False)
    return DPValue(
        pair=UpperLowerPair(upper=upper, lower=lower),
        backend_tol=1e-12,
        refinement_info={"backend": "exact", "leaves": two_k**spec.n},
    )


# ---------------------------------------------------------------------------
# Grid DP backend
# ---------------------------------------------------------------------------


class _ClampMonitor:
    """Tracks clamped child evaluations and whether they could matter.

    Clamps are certified harmless when either (a) the functional is exactly
    flat beyond a summary top inside the grid, so constant extrapolation
    reproduces the true continuation value, or (b) the mass the worst-case
    walk can push past the edges, bounded by the Azuma estimate
    2 exp(-(L/s)^2/2) with s the diffusive scale, times the value scale is
    negligible.  Without a certificate, clamped evaluations exceeding 0.1%
    of all child evaluations raise.
    """

    def __init__(self, harmless: bool, escape_bound: float):
        self.harmless = harmless
        self.escape_bound = escape_bound
        self.total = 0
        self.clamped = 0

    def record(self, updates: int, clamps: int):
        self.total += updates
        self.clamped += clamps

    def check(self):
        if self.harmless:
            return
        if self.total and self.clamped > 1e-3 * self.total:
            raise BoundaryClampError(
                f"boundary clamping may bias the result: {self.clamped} clamped "
                f"evaluations out of {self.total} updates (> 0.1%) and the edge "
                f"escape bound {self.escape_bound:.3g} is not negligible; "
                "enlarge the grid"
            )

    def fractions(self) -> tuple[float, float]:
        if self.total == 0:
            return (0.0, 0.0)
        frac = self.clamped / self.total
        return (frac, 0.0 if self.harmless else frac)


def _make_monitor(spec: WalkSpec, grid: SpatialGrid, f: PathFunctional, value_scale: float) -> _ClampMonitor:
    escape = 2.0 * math.exp(-0.5 * (grid.half_width / spec.sigma_hi_scaled) ** 2)
    flat_cover = (
        f.kind == "max_abs"
        and f.flat_beyond_top
        and f.summary_top is not None
        and f.summary_top <= grid.half_width + 1e-12
    )
    # Worst-case clamp contribution is escape * oscillation; harmless when it
    # stays below 1e-5 of the value scale, far under any advertised tolerance.
    harmless = flat_cover or (2.0 * escape * value_scale <= 1e-5 * max(1.0, value_scale))
    return _ClampMonitor(harmless=harmless, escape_bound=escape)


def _snap_shift(off: float) -> tuple[int, float]:
    """Integer/fractional split of a grid shift, snapping near-integers."""
    q = math.floor(off)
    w = off - q
    if w < 1e-9:
        w = 0.0
    elif w > 1.0 - 1e-9:
        q += 1
        w = 0.0
    return q, w


def _shift_int(v: np.ndarray, q: int) -> np.ndarray:
    """Clamped integer shift along axis 0: out[i] = v[clip(i + q)]."""
    m = v.shape[0]
    out = np.empty_like(v)
    if q >= 0:
        keep = m - q
        if keep > 0:
            out[:keep] = v[q:]
            out[keep:] = v[-1]
        else:
            out[:] = v[-1]
    else:
        keep = m + q
        if keep > 0:
            out[-keep:] = v[:keep]
            out[:-keep] = v[0]
        else:
            out[:] = v[0]
    return out


def _shift_frac(v: np.ndarray, q: int, w: float) -> np.ndarray:
    """Clamped piecewise-linear shift along axis 0 by q + w cells."""
    if w == 0.0:
        return _shift_int(v, q)
    return (1.0 - w) * _shift_int(v, q) + w * _shift_int(v, q + 1)


def _clamp_count(m: int, off: float) -> int:
    lo = int(np.ceil(-off)) if off < 0 else 0
    hi = int(np.ceil(off)) if off > 0 else 0
    return min(lo, m) + min(hi, m)


class _ShiftPlan:
    """Precomputed per-(sigma, sign) shift data for one sweep geometry."""

    def __init__(self, m: int, sig: np.ndarray, h: float, dx: float):
        self.entries = []
        for s in sig:
            per_sigma = []
            for sign in (1.0, -1.0):
                off = sign * s * h / dx
                q, w = _snap_shift(off)
                per_sigma.append((q, w, _clamp_count(m, off)))
            self.entries.append(per_sigma)


def _interp1(v: np.ndarray, q: np.ndarray, x0: float, dx: float) -> np.ndarray:
    """Clamped piecewise-linear interpolation on a uniform grid."""
    fi = np.clip((q - x0) / dx, 0.0, len(v) - 1.0)
    i0 = np.minimum(fi.astype(np.int64), len(v) - 2)
    w = fi - i0
    return (1.0 - w) * v[i0] + w * v[i0 + 1]


def _sweep_1d(
    v: np.ndarray,
    x: np.ndarray,
    dx: float,
    sig: np.ndarray,
    h: float,
    plan: _ShiftPlan,
    maximize: bool,
    refine: bool,
    band_width: float,
    monitor: _ClampMonitor,
) -> np.ndarray:
    m = len(v)
    best = None
    abest = None
    for j in range(len(sig)):
        (qp, wp, cp), (qm, wm, cm) = plan.entries[j]
        cand = 0.5 * (_shift_frac(v, qp, wp) + _shift_frac(v, qm, wm))
        monitor.record(2 * m, cp + cm)
        if best is None:
            best = cand
            abest = np.zeros(m, dtype=np.int64)
        else:
            better = cand > best if maximize else cand < best
            take = better | (cand == best)  # ties -> larger sigma (ascending grid)
            abest = np.where(take, j, abest)
            best = np.where(take, cand, best)
    if refine and band_width > 0 and len(sig) > 1:
        interior = (abest > 0) & (abest < len(sig) - 1)
        if np.any(interior):
            nodes = x[interior]
            lo = sig[abest[interior] - 1].astype(float)
            hi = sig[abest[interior] + 1].astype(float)

            def obj(sv):
                return 0.5 * (
                    _interp1(v, nodes + sv * h, x[0], dx)
                    + _interp1(v, nodes - sv * h, x[0], dx)
                )

            width = _REFINE_REL_WIDTH * band_width
            while np.max(hi - lo) > width:
                m1 = lo + (hi - lo) / 3.0
                m2 = hi - (hi - lo) / 3.0
                f1, f2 = obj(m1), obj(m2)
                move_lo = (f1 <= f2) if maximize else (f1 >= f2)
                lo = np.where(move_lo, m1, lo)
                hi = np.where(move_lo, hi, m2)
            refined = obj(0.5 * (lo + hi))
            cur = best[interior]
            best[interior] = np.maximum(cur, refined) if maximize else np.minimum(cur, refined)
    return best


class _MaxSweepPlan:
    """Precomputed running-maximum update data for one sweep geometry.

    For each (sigma, sign) the child summary is max(m_grid, a) with a the
    clipped child position (its absolute value for the two-sided maximum):
    where m_grid >= a the summary is unchanged (exact node lookup), else the
    value is read at summary = a by linear interpolation along the summary
    axis.  All index tables depend only on the geometry, not on the sweep.
    """

    def __init__(self, x, mg, dx, sig, h, signed: bool, m: int):
        self.plan = _ShiftPlan(m, sig, h, dx)
        self.rows = np.arange(m)
        self.data = []
        ms = len(mg)
        for j, s in enumerate(sig):
            per_sigma = []
            for t, sign in enumerate((1.0, -1.0)):
                xc = np.clip(x + sign * s * h, x[0], x[-1])
                a = xc if signed else np.abs(xc)
                fj = np.clip((a - mg[0]) / dx, 0.0, ms - 1.0)
                j0 = np.minimum(fj.astype(np.int64), ms - 2)
                wj = fj - j0
                keep = mg[None, :] >= a[:, None]
                per_sigma.append((j0, wj, keep))
            self.data.append(per_sigma)


def _sweep_2d_max(
    v: np.ndarray,
    sweep: _MaxSweepPlan,
    maximize: bool,
    monitor: _ClampMonitor,
) -> np.ndarray:
    m, ms = v.shape
    rows = sweep.rows
    best = None
    for j, per_sigma in enumerate(sweep.data):
        acc = None
        for t, (j0, wj, keep) in enumerate(per_sigma):
            q, w, clamps = sweep.plan.entries[j][t]
            wsh = _shift_frac(v, q, w)
            row_at = (1.0 - wj) * wsh[rows, j0] + wj * wsh[rows, j0 + 1]
            cand = np.where(keep, wsh, row_at[:, None])
            monitor.record(m * ms, clamps * ms)
            acc = cand if acc is None else acc + cand
        cand = 0.5 * acc
        if best is None:
            best = cand
        else:
            best = np.maximum(best, cand) if maximize else np.minimum(best, cand)
    return best


def _sweep_2d_generic(
    v: np.ndarray,
    x: np.ndarray,
    mg: np.ndarray,
    dx: float,
    sig: np.ndarray,
    h: float,
    plan: _ShiftPlan,
    f: PathFunctional,
    k_arrival: int,
    maximize: bool,
    monitor: _ClampMonitor,
) -> np.ndarray:
    m, ms = v.shape
    rows = np.arange(m)[:, None]
    best = None
    for j, s in enumerate(sig):
        acc = None
        for t, sign in enumerate((1.0, -1.0)):
            q, w, clamps = plan.entries[j][t]
            wsh = _shift_frac(v, q, w)
            xc = np.clip(x + sign * s * h, x[0], x[-1])
            s_new = np.asarray(f.update(mg[None, :], k_arrival, xc[:, None]), dtype=float)
            fj = np.clip((s_new - mg[0]) / dx, 0.0, ms - 1.0)
            j0 = np.minimum(fj.astype(np.int64), ms - 2)
            wj = fj - j0
            cand = (1.0 - wj) * wsh[rows, j0] + wj * wsh[rows, j0 + 1]
            monitor.record(m * ms, clamps * ms)
            acc = cand if acc is None else acc + cand
        cand = 0.5 * acc
        if best is None:
            best = cand
        else:
            best = np.maximum(best, cand) if maximize else np.minimum(best, cand)
    return best


def _summary_grid(f: PathFunctional, x: np.ndarray, dx: float) -> np.ndarray:
    center = (len(x) - 1) // 2
    nonneg = x[center:].copy()
    nonneg[0] = 0.0
    if f.kind == "snapshot":
        return x
    if f.kind in ("max_abs", "max_signed"):
        if f.flat_beyond_top and f.summary_top is not None and f.summary_top < nonneg[-1]:
            top_idx = max(int(math.ceil(f.summary_top / dx - 1e-9)), 1)
            top_idx = min(top_idx, len(nonneg) - 1)
            return nonneg[: top_idx + 1]
        return nonneg
    return nonneg  # custom summaries must live in [0, half_width]


def _check_coverage(spec: WalkSpec, grid: SpatialGrid, f: PathFunctional):
    required = 6.0 * spec.sigma_hi_scaled
    if grid.half_width + 1e-12 >= required:
        return
    # A short grid is exact when the terminal value is constant wherever the
    # summary exceeds a top inside the grid: any position beyond the edge
    # forces the summary beyond that top.
    if (
        f.kind == "max_abs"
        and f.flat_beyond_top
        and f.summary_top is not None
        and f.summary_top <= grid.half_width + 1e-12
    ):
        return
    raise GridCoverageError(
        f"grid half_width {grid.half_width:g} does not cover 6 diffusive scales "
        f"({required:g}) and the functional is not flat beyond the edge"
    )


def _grid_value_once(
    spec: WalkSpec,
    grid: SpatialGrid,
    f: PathFunctional,
    maximize: bool,
    refine_sigma: bool,
) -> tuple[float, tuple[float, float]]:
    x = grid.nodes()
    dx = grid.spacing
    m = grid.points
    h = spec.step_scale
    sig = spec.family.unique_sigmas()
    plan = _ShiftPlan(m, sig, h, dx)
    band_width = spec.family.band.width
    center = (m - 1) // 2

    if f.summary_dimension == 1:
        v = np.asarray(f.terminal(None, x), dtype=float)
        v = np.array(np.broadcast_to(v, x.shape))
        if not np.all(np.isfinite(v)):
            raise ValueError("terminal values are not finite on the grid")
        monitor = _make_monitor(spec, grid, f, float(np.max(np.abs(v))))
        for _ in range(spec.n):
            v = _sweep_1d(v, x, dx, sig, h, plan, maximize, refine_sigma, band_width, monitor)
        monitor.check()
        return float(v[center]), monitor.fractions()

    mg = _summary_grid(f, x, dx)
    v = np.asarray(f.terminal(mg[None, :], x[:, None]), dtype=float)
    v = np.array(np.broadcast_to(v, (len(x), len(mg))))
    if not np.all(np.isfinite(v)):
        raise ValueError("terminal values are not finite on the grid")
    monitor = _make_monitor(spec, grid, f, float(np.max(np.abs(v))))

    if f.kind in ("max_abs", "max_signed"):
        sweep = _MaxSweepPlan(x, mg, dx, sig, h, f.kind == "max_signed", m)
        for _ in range(spec.n):
            v = _sweep_2d_max(v, sweep, maximize, monitor)
        monitor.check()
        j_init = int(round((float(f.init_summary) - mg[0]) / dx))
        return float(v[center, j_init]), monitor.fractions()

    if f.kind == "snapshot":
        k0 = f.snapshot_index
        if k0 is None or not (1 <= k0 <= spec.n):
            raise ValueError(f"snapshot_index must be in 1..n, got {k0!r}")
        for _ in range(spec.n - 1, k0 - 1, -1):
            # Above the snapshot the summary is frozen: columns evolve independently.
            best = None
            for j in range(len(sig)):
                (qp, wp, cp), (qm, wm, cm) = plan.entries[j]
                cand = 0.5 * (_shift_frac(v, qp, wp) + _shift_frac(v, qm, wm))
                monitor.record(2 * v.size, (cp + cm) * v.shape[1])
                if best is None:
                    best = cand
                else:
                    best = np.maximum(best, cand) if maximize else np.minimum(best, cand)
            v = best
        # Step into the snapshot: children set the summary to their position.
        rows = np.arange(m)
        best1 = None
        for j, s_val in enumerate(sig):
            acc = None
            for t, sign in enumerate((1.0, -1.0)):
                q, w, clamps = plan.entries[j][t]
                wsh = _shift_frac(v, q, w)
                xc = np.clip(x + sign * s_val * h, x[0], x[-1])
                fj = np.clip((xc - mg[0]) / dx, 0.0, len(mg) - 1.0)
                j0 = np.minimum(fj.astype(np.int64), len(mg) - 2)
                wj = fj - j0
                diag = (1.0 - wj) * wsh[rows, j0] + wj * wsh[rows, j0 + 1]
                monitor.record(v.size, clamps * v.shape[1])
                acc = diag if acc is None else acc + diag
            cand = 0.5 * acc
            if best1 is None:
                best1 = cand
            else:
                best1 = np.maximum(best1, cand) if maximize else np.minimum(best1, cand)
        v1 = best1
        for _ in range(k0 - 1):
            v1 = _sweep_1d(v1, x, dx, sig, h, plan, maximize, refine_sigma, band_width, monitor)
        monitor.check()
        return float(v1[center]), monitor.fractions()

    # Generic 2D summary recursion.
    for k in range(spec.n - 1, -1, -1):
        v = _sweep_2d_generic(v, x, mg, dx, sig, h, plan, f, k + 1, maximize, monitor)
    monitor.check()
    j_init = int(round((float(f.init_summary) - mg[0]) / dx))
    j_init = min(max(j_init, 0), len(mg) - 1)
    return float(v[center, j_init]), monitor.fractions()


def _coarse_grid(grid: SpatialGrid) -> SpatialGrid | None:
    if grid.points < 403 or (grid.points - 1) % 2 != 0:
        return None
    m_coarse = (grid.points + 1) // 2
    if m_coarse % 2 == 0 or m_coarse < 201:
        return None
    return SpatialGrid(half_width=grid.half_width, points=m_coarse)


def grid_walk_value(
    spec: WalkSpec,
    grid: SpatialGrid,
    f: PathFunctional,
    refine_sigma: bool = True,
    refine_check: bool = True,
) -> DPValue:
    """Upper/lower expectation of ``f`` by backward induction on a value grid.

    Off-grid children are evaluated by clamped piecewise-linear interpolation;
    running-maximum summaries share the position grid restricted to its
    nonnegative part.  The advertised tolerance is the larger of 1e-4 and the
    observed value change under an M vs 2M-1 grid refinement (the coarse mate
    of ``grid`` is solved as the check); passing ``refine_check=False`` skips
    that pass and advertises an infinite tolerance.

    ``refine_sigma`` polishes interior sigma optima by ternary search between
    the neighbours of the grid argmax (one-dimensional sweeps only); disable
    it to make the backend optimize over exactly the family members, e.g.
    when cross-validating against :func:`exact_walk_value`.
    """
    if f.summary_dimension > 2:
        raise ValueError("summary dimension > 2 is unsupported")
    _check_coverage(spec, grid, f)
    upper, frac_u = _grid_value_once(spec, grid, f, True, refine_sigma)
    lower, frac_l = _grid_value_once(spec, grid, f, False, refine_sigma)
    info = {
        "backend": "grid",
        "grid_points": grid.points,
        "clamped_fraction": max(frac_u[0], frac_l[0]),
        "harmful_fraction": max(frac_u[1], frac_l[1]),
    }
    if not refine_check:
        info["richardson"] = None
        return DPValue(pair=UpperLowerPair(upper, lower), backend_tol=math.inf, refinement_info=info)
    coarse = _coarse_grid(grid)
    if coarse is None:
        # Refine instead of coarsen when the grid is too small to halve.
        fine = SpatialGrid(half_width=grid.half_width, points=2 * grid.points - 1)
        u2, _ = _grid_value_once(spec, fine, f, True, refine_sigma)
        l2, _ = _grid_value_once(spec, fine, f, False, refine_sigma)
        delta = max(abs(u2 - upper), abs(l2 - lower))
        info["richardson"] = delta
        info["grid_points_pair"] = (grid.points, fine.points)
        return DPValue(
            pair=UpperLowerPair(u2, l2),
            backend_tol=max(delta, 1e-4),
            refinement_info=info,
        )
    u2, _ = _grid_value_once(spec, coarse, f, True, refine_sigma)
    l2, _ = _grid_value_once(spec, coarse, f, False, refine_sigma)
    delta = max(abs(u2 - upper), abs(l2 - lower))
    info["richardson"] = delta
    info["grid_points_pair"] = (coarse.points, grid.points)
    return DPValue(
        pair=UpperLowerPair(upper, lower),
        backend_tol=max(delta, 1e-4),
        refinement_info=info,
    )


# ---------------------------------------------------------------------------
# Capacities of path events
# ---------------------------------------------------------------------------

def _identity_stat(s, x):
    return s


def _position_stat(s, x):
    return x


def max_abs_statistic() -> PathFunctional:
    """Statistic max_{k<=n} |S_k| as a path functional."""
    return running_max_abs_functional(_identity_stat)


def max_signed_statistic() -> PathFunctional:
    """Statistic max_{k<=n} S_k as a path functional."""
    return running_max_functional(_identity_stat)


def final_position_statistic() -> PathFunctional:
    """Statistic S_n as a path functional."""
    return PathFunctional(
        init_summary=None,
        update=None,
        terminal=_position_stat,
        summary_dimension=1,
        kind="terminal",
    )


def _compose_ramp(f_stat: PathFunctional, ramp: ScalarTestFunction, top: float | None) -> PathFunctional:
    stat_terminal = f_stat.terminal
    composed = lambda s, x: ramp(stat_terminal(s, x))
    if f_stat.terminal is _identity_stat and f_stat.kind in ("max_abs", "max_signed") and top is not None:
        return replace(f_stat, terminal=composed, summary_top=top, flat_beyond_top=True)
    return replace(f_stat, terminal=composed)


def walk_capacity(
    spec: WalkSpec,
    event: tuple[PathFunctional, float, str],
    delta: float,
    backend: str = "auto",
    grid: SpatialGrid | None = None,
    points_per_step: int = 4,
    absolute_width: bool | None = None,
    refine_check: bool = True,
) -> CapacityBracket:
    """Mollifier bracket of the capacity pair of a threshold event.

    ``event`` is (statistic functional, threshold, direction) with direction
    "ge" for {statistic >= threshold} and "le" for {statistic <= threshold}.
    The upper capacity is bracketed by the upper expectations of the outer
    and inner ramps; the lower capacity by their lower expectations, which is
    the conjugate route through the complement event.
    """
    f_stat, threshold, direction = event
    if direction not in ("ge", "le"):
        raise ValueError(f"direction must be 'ge' or 'le', got {direction!r}")
    if absolute_width is None:
        absolute_width = threshold == 0.0
    moll_dir = "above" if direction == "ge" else "below"
    outer, inner = mollified_indicator(threshold, moll_dir, delta, absolute=absolute_width)
    w = delta if absolute_width else abs(threshold) * delta
    top = threshold + w  # both ramps are constant at and beyond this point

    f_outer = _compose_ramp(f_stat, outer, top)
    f_inner = _compose_ramp(f_stat, inner, top)

    if backend == "auto":
        k_eff = len(spec.family.unique_sigmas())
        backend = "exact" if _exact_feasible(spec.n, 2 * k_eff) else "grid"

    if backend == "exact":
        val_outer = exact_walk_value(spec, f_outer)
        val_inner = exact_walk_value(spec, f_inner)
    elif backend == "grid":
        if grid is None:
            half = None
            if f_outer.flat_beyond_top and f_stat.kind == "max_abs" and direction == "le":
                half = min(top * 1.02, 6.0 * spec.sigma_hi_scaled)
            grid = SpatialGrid.for_walk(spec, points_per_step, half_width=half)
        val_outer = grid_walk_value(spec, grid, f_outer, refine_check=refine_check)
        val_inner = grid_walk_value(spec, grid, f_inner, refine_check=refine_check)
    else:
        raise ValueError(f"unknown backend {backend!r}")

    tol = max(val_outer.backend_tol, val_inner.backend_tol)
    clamp_tol = min(tol, 1e-6) if math.isfinite(tol) else 1e-6
    outer_pair = CapacityPair.from_backend(val_outer.pair.upper, val_outer.pair.lower, clamp_tol)
    inner_pair = CapacityPair.from_backend(val_inner.pair.upper, val_inner.pair.lower, clamp_tol)
    return CapacityBracket(
        outer=outer_pair,
        inner=inner_pair,
        delta=delta,
        absolute_width=absolute_width,
        backend_tol=tol,
    )


# ---------------------------------------------------------------------------
# Path sampling under a fixed volatility policy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantPolicy:
    """Feedback policy that always plays the same volatility."""

    sigma: float

    def __call__(self, k, position, summary):
        return self.sigma


def sample_walk_path(
    spec: WalkSpec,
    policy: Callable,
    seed: int,
    signs: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample one sqrt(n)-scaled piecewise-linear walk path on [0, 1].

    ``policy(k, position, summary)`` chooses the volatility for step k+1 from
    the current scaled position and running absolute maximum; Rademacher
    signs come from the seeded generator (or ``signs`` when given, for
    forcing deterministic scenarios).  Returns (times, positions) of the
    polyline vertices; the draw is a deterministic function of the seed.
    """
    n = spec.n
    band = spec.family.band
    h = 1.0 / math.sqrt(n)
    if signs is None:
        rng = np.random.default_rng(seed)
        eps = rng.integers(0, 2, size=n).astype(float) * 2.0 - 1.0
    else:
        eps = np.asarray(signs, dtype=float)
        if eps.shape != (n,) or not np.all(np.abs(eps) == 1.0):
            raise ValueError("signs must be an array of n values in {-1, +1}")
    t = np.arange(n + 1) / n
    w = np.empty(n + 1)
    w[0] = 0.0
    if isinstance(policy, ConstantPolicy):
        s = float(policy.sigma)
        if not band.contains(s):
            raise ValueError(f"policy volatility {s!r} outside band")
        w[1:] = np.cumsum(s * eps * h)
        return t, w
    pos = 0.0
    runmax = 0.0
    for k in range(n):
        s = float(policy(k, pos, runmax))
        if not band.contains(s):
            raise ValueError(f"policy volatility {s!r} outside band at step {k}")
        pos = pos + s * eps[k] * h
        runmax = max(runmax, abs(pos))
        w[k + 1] = pos
    return t, w
