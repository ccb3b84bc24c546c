"""Core types for worst/best-case expectations under volatility ambiguity.

The model of uncertainty is an interval of admissible volatilities.  Every
backend in this package produces an upper expectation (worst case over the
band) together with its conjugate lower expectation, and capacities of events
are always reported as mollifier brackets rather than single numbers: the
upper capacity of an event is the infimum of upper expectations over smooth
majorants of the indicator, which we can only enclose between an outer and an
inner Lipschitz ramp.

All types here are immutable and all operations are pure; numerical
tolerances are owned by the producing backends, not by these types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "VolatilityBand",
    "UpperLowerPair",
    "CapacityPair",
    "ScalarTestFunction",
    "PathFunctional",
    "AxiomSample",
    "AxiomReport",
    "g_eval",
    "conjugate",
    "mollified_indicator",
    "axiom_report",
    "terminal_functional",
    "running_max_abs_functional",
    "running_max_functional",
    "snapshot_functional",
]


@dataclass(frozen=True)
class VolatilityBand:
    """Interval [sigma_lo, sigma_hi] of admissible instantaneous volatilities.

    A degenerate band (sigma_lo == sigma_hi) is legal and means "classical,
    no ambiguity".
    """

    sigma_lo: float
    sigma_hi: float

    def __post_init__(self):
        if not (0.0 <= self.sigma_lo <= self.sigma_hi < math.inf):
            raise ValueError(
                "invalid volatility band: need 0 <= sigma_lo <= sigma_hi < inf, "
                f"got ({self.sigma_lo!r}, {self.sigma_hi!r})"
            )

    @property
    def is_degenerate(self) -> bool:
        return self.sigma_lo == self.sigma_hi

    @property
    def width(self) -> float:
        return self.sigma_hi - self.sigma_lo

    def contains(self, sigma) -> bool:
        return bool(np.all((self.sigma_lo <= sigma) & (sigma <= self.sigma_hi)))


@dataclass(frozen=True)
class UpperLowerPair:
    """Upper expectation and its conjugate lower expectation of one functional.

    The defining identity is lower = -upper(-f); producing backends guarantee
    lower <= upper within their advertised tolerance, which is why validation
    is parameterized by a tolerance instead of being hard-wired here.
    """

    upper: float
    lower: float

    def check(self, tol: float) -> bool:
        """True iff lower <= upper within the producing backend's tolerance."""
        return self.lower <= self.upper + tol

    @property
    def spread(self) -> float:
        return self.upper - self.lower

    def __neg__(self) -> "UpperLowerPair":
        # Negating the functional swaps and negates the pair.
        return UpperLowerPair(upper=-self.lower, lower=-self.upper)


@dataclass(frozen=True)
class CapacityPair:
    """Upper capacity V and lower capacity v = 1 - V(complement) of one event."""

    upper_cap: float
    lower_cap: float

    def __post_init__(self):
        if not (0.0 <= self.lower_cap <= self.upper_cap <= 1.0):
            raise ValueError(
                "invalid capacity pair: need 0 <= lower <= upper <= 1, "
                f"got lower={self.lower_cap!r}, upper={self.upper_cap!r}"
            )

    @classmethod
    def from_backend(cls, upper_cap: float, lower_cap: float, tol: float) -> "CapacityPair":
        """Build a pair from backend output, absorbing up to ``tol`` of numerical
        violation of the [0, 1] bounds and of the ordering."""
        if upper_cap < -tol or upper_cap > 1.0 + tol or lower_cap < -tol or lower_cap > 1.0 + tol:
            raise ValueError(
                f"capacity outside [0,1] beyond tolerance {tol}: "
                f"upper={upper_cap!r}, lower={lower_cap!r}"
            )
        if lower_cap > upper_cap + tol:
            raise ValueError(
                f"lower capacity exceeds upper beyond tolerance {tol}: "
                f"upper={upper_cap!r}, lower={lower_cap!r}"
            )
        hi = min(1.0, max(0.0, upper_cap))
        lo = min(1.0, max(0.0, lower_cap))
        return cls(upper_cap=hi, lower_cap=min(lo, hi))


@dataclass(frozen=True)
class ScalarTestFunction:
    """A scalar test function with local-Lipschitz growth metadata.

    ``evaluator`` must accept numpy arrays (vectorized).  ``growth_order`` is
    the exponent m in the growth bound |f(x)-f(y)| <= C (1+|x|^m+|y|^m)|x-y|;
    it is advisory metadata (used e.g. to size PDE domains) and only enforced
    by spot checks.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    lipschitz_const: float
    growth_order: int = 0
    bounded_flag: bool = True
    name: str = ""

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))

    def check_growth(self, xs: np.ndarray, ys: np.ndarray, rtol: float = 1e-9) -> bool:
        """Spot-check the growth bound on sampled pairs (xs[i], ys[i])."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        lhs = np.abs(self(xs) - self(ys))
        m = self.growth_order
        rhs = self.lipschitz_const * (1.0 + np.abs(xs) ** m + np.abs(ys) ** m) * np.abs(xs - ys)
        return bool(np.all(lhs <= rhs * (1.0 + rtol) + 1e-300))


@dataclass(frozen=True)
class PathFunctional:
    """A path functional in summary-state form, the unit of work of the DPs.

    The walk engines carry the position; ``update`` folds each new position
    into a finite-dimensional summary and ``terminal`` maps the final
    (summary, position) to a real number.  ``summary_dimension`` counts the
    components of the DP state: 1 = position only (terminal functionals),
    2 = position plus one summary component (e.g. the running maximum).

    ``update`` and ``terminal`` must be numpy-vectorized.  ``kind`` names the
    summary recursion so grid backends can pick exact fast paths:

    - "terminal":   no summary, value = terminal(None, S_n)
    - "max_abs":    summary = max_{k<=n} |S_k|  (k = 0 included, so >= 0)
    - "max_signed": summary = max_{k<=n} S_k    (>= 0 since S_0 = 0)
    - "snapshot":   summary = S_{k0} (position recorded at step snapshot_index)
    - "custom":     anything else; grid backends fall back to a generic path

    ``summary_top``/``flat_beyond_top``: if set, the terminal value is constant
    in the summary for summary >= summary_top; grid backends may then truncate
    the summary grid there without error (the truncation is exact).
    """

    init_summary: float | None
    update: Callable | None
    terminal: Callable
    summary_dimension: int
    kind: str = "custom"
    snapshot_index: int | None = None
    summary_top: float | None = None
    flat_beyond_top: bool = False

    def __post_init__(self):
        if self.summary_dimension not in (1, 2):
            raise ValueError(f"summary_dimension must be 1 or 2, got {self.summary_dimension}")

    def value_of_path(self, positions: np.ndarray) -> float:
        """Evaluate the functional on one discrete path S_0..S_n (deterministic)."""
        positions = np.asarray(positions, dtype=float)
        if self.summary_dimension == 1:
            return float(self.terminal(None, positions[-1]))
        s = self.init_summary
        for k in range(1, len(positions)):
            s = self.update(s, k, positions[k])
        return float(self.terminal(s, positions[-1]))


def terminal_functional(phi: Callable, name: str = "") -> PathFunctional:
    """Functional phi(S_n) of the final position only."""
    return PathFunctional(
        init_summary=None,
        update=None,
        terminal=lambda s, x: phi(x),
        summary_dimension=1,
        kind="terminal",
    )


def running_max_abs_functional(
    g: Callable, summary_top: float | None = None, flat_beyond_top: bool = False
) -> PathFunctional:
    """Functional g(max_{k<=n} |S_k|, S_n) of the running absolute maximum.

    ``g`` takes (summary, final position); use ``lambda m, x: ...`` even when
    the final position is unused.
    """
    return PathFunctional(
        init_summary=0.0,
        update=lambda s, k, x: np.maximum(s, np.abs(x)),
        terminal=g,
        summary_dimension=2,
        kind="max_abs",
        summary_top=summary_top,
        flat_beyond_top=flat_beyond_top,
    )


def running_max_functional(
    g: Callable, summary_top: float | None = None, flat_beyond_top: bool = False
) -> PathFunctional:
    """Functional g(max_{k<=n} S_k, S_n) of the running (signed) maximum."""
    return PathFunctional(
        init_summary=0.0,
        update=lambda s, k, x: np.maximum(s, x),
        terminal=g,
        summary_dimension=2,
        kind="max_signed",
        summary_top=summary_top,
        flat_beyond_top=flat_beyond_top,
    )


def snapshot_functional(phi2: Callable, snapshot_index: int) -> PathFunctional:
    """Two-time functional phi2(S_{k0}, S_n) with the position recorded at k0."""
    k0 = int(snapshot_index)
    return PathFunctional(
        init_summary=0.0,
        update=lambda s, k, x: np.where(k == k0, x, s),
        terminal=phi2,
        summary_dimension=2,
        kind="snapshot",
        snapshot_index=k0,
    )


def g_eval(band: VolatilityBand, alpha):
    """Generator of the nonlinear heat flow: (hi^2 * a+ - lo^2 * a-) / 2.

    Positively homogeneous in ``alpha``; accepts scalars or arrays.
    """
    a = np.asarray(alpha, dtype=float)
    out = 0.5 * (band.sigma_hi**2 * np.maximum(a, 0.0) - band.sigma_lo**2 * np.maximum(-a, 0.0))
    return float(out) if np.isscalar(alpha) or out.ndim == 0 else out


def conjugate(upper_of_negated: float) -> float:
    """Lower expectation from the upper expectation of the negated functional."""
    return -upper_of_negated


def _ramp_up(a: float, b: float) -> Callable:
    # 0 on (-inf, a], linear on [a, b], 1 on [b, inf)
    w = b - a
    return lambda y: np.clip((np.asarray(y, dtype=float) - a) / w, 0.0, 1.0)


def _ramp_down(a: float, b: float) -> Callable:
    # 1 on (-inf, a], linear on [a, b], 0 on [b, inf)
    w = b - a
    return lambda y: np.clip((b - np.asarray(y, dtype=float)) / w, 0.0, 1.0)


def mollified_indicator(
    threshold: float,
    direction: str,
    delta: float,
    absolute: bool = False,
) -> tuple[ScalarTestFunction, ScalarTestFunction]:
    """Outer and inner Lipschitz ramps bracketing a threshold indicator.

    For ``direction="above"`` (event {y >= threshold}) the ramps satisfy,
    pointwise,

        I{y >= t+w}  <=  inner  <=  I{y >= t}  <=  outer  <=  I{y >= t-w}

    with width w = |threshold| * delta (or w = delta when ``absolute``), and
    analogously for ``direction="below"``.  Both ramps are piecewise linear
    with Lipschitz constant 1/w, so the ordering is exactly checkable.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta!r}")
    if direction not in ("above", "below"):
        raise ValueError(f"direction must be 'above' or 'below', got {direction!r}")
    if absolute:
        w = float(delta)
    else:
        if threshold == 0.0:
            raise ValueError(
                "multiplicative mollifier width is zero at threshold 0; "
                "call with absolute=True to use an absolute width"
            )
        w = abs(threshold) * float(delta)
    t = float(threshold)
    if direction == "above":
        outer_eval, inner_eval = _ramp_up(t - w, t), _ramp_up(t, t + w)
    else:
        outer_eval, inner_eval = _ramp_down(t, t + w), _ramp_down(t - w, t)
    lip = 1.0 / w
    outer = ScalarTestFunction(outer_eval, lipschitz_const=lip, growth_order=0,
                               bounded_flag=True, name=f"outer[{direction}@{t:g}]")
    inner = ScalarTestFunction(inner_eval, lipschitz_const=lip, growth_order=0,
                               bounded_flag=True, name=f"inner[{direction}@{t:g}]")
    return outer, inner


@dataclass(frozen=True)
class AxiomSample:
    """Upper expectations of one functional family from a single backend run.

    Fields hold E^[phi], E^[psi], E^[phi+psi], E^[lam*phi] and E^[phi+shift]
    computed by the same backend on the same model.  ``phi_dominates`` records
    whether phi >= psi pointwise on the model's support (checked by the
    caller), enabling the monotonicity comparison.
    """

    upper_phi: float
    upper_psi: float
    upper_sum: float
    lam: float
    upper_scaled: float
    shift: float
    upper_shifted: float
    phi_dominates: bool = False
    const_value: float | None = None
    upper_const: float | None = None


@dataclass(frozen=True)
class AxiomReport:
    """Worst-case violations of the sublinear-expectation axioms over a battery."""

    tol: float
    n_samples: int
    n_dominated_pairs: int
    worst_monotonicity: float
    worst_constant: float
    worst_subadditivity: float
    worst_homogeneity: float
    worst_translation: float

    @property
    def monotonicity_ok(self) -> bool:
        return self.worst_monotonicity <= self.tol

    @property
    def constant_ok(self) -> bool:
        return self.worst_constant <= self.tol

    @property
    def subadditivity_ok(self) -> bool:
        return self.worst_subadditivity <= self.tol

    @property
    def homogeneity_ok(self) -> bool:
        return self.worst_homogeneity <= self.tol

    @property
    def translation_ok(self) -> bool:
        return self.worst_translation <= self.tol

    @property
    def all_ok(self) -> bool:
        return (
            self.monotonicity_ok
            and self.constant_ok
            and self.subadditivity_ok
            and self.homogeneity_ok
            and self.translation_ok
        )


def axiom_report(samples: Sequence[AxiomSample], tol: float) -> AxiomReport:
    """Check the four axioms plus translation invariance on backend output.

    Monotonicity is only evaluated on samples flagged ``phi_dominates``;
    constant preserving only on samples carrying a constant evaluation.
    Violations are signed so that a positive number means "broken by that
    much"; absolute identities report absolute deviations.
    """
    if len(samples) == 0:
        raise ValueError("axiom_report needs at least one sample")
    mono = 0.0
    const = 0.0
    sub = 0.0
    homog = 0.0
    transl = 0.0
    n_dom = 0
    for s in samples:
        if s.phi_dominates:
            n_dom += 1
            mono = max(mono, s.upper_psi - s.upper_phi)
        if s.const_value is not None and s.upper_const is not None:
            const = max(const, abs(s.upper_const - s.const_value))
        sub = max(sub, s.upper_sum - (s.upper_phi + s.upper_psi))
        if s.lam < 0:
            raise ValueError("positive homogeneity requires lam >= 0")
        homog = max(homog, abs(s.upper_scaled - s.lam * s.upper_phi))
        transl = max(transl, abs(s.upper_shifted - (s.upper_phi + s.shift)))
    return AxiomReport(
        tol=tol,
        n_samples=len(samples),
        n_dominated_pairs=n_dom,
        worst_monotonicity=mono,
        worst_constant=const,
        worst_subadditivity=sub,
        worst_homogeneity=homog,
        worst_translation=transl,
    )
