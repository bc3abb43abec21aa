"""Model parameters, admissibility conditions, and exponential tail integrals.

The damping model is controlled by four numbers:

    a   exponential decay rate of the electric field, e^{-a t}
    a1  smoothness amplitude of the asymptotic profile (Fourier envelope)
    a2  velocity-decay amplitude of the asymptotic profile
    K   number of parameter derivatives the analysis is required to control

From these we derive the field-gradient constant

    C_E = 240 a1 a2 / a + 4 a1

and the earliest admissible start time t0.  Five inequalities (A1)-(A5)
must hold before any of the quantitative bounds downstream are meaningful;
`check_assumptions` evaluates them literally and reports signed margins.

The closed-form tail integrals

    tail_integral(a, t, k)        = int_t^inf s^k e^{-a s} ds
    tail_integral_moment(a, t, k) = int_t^inf (s - t) s^k e^{-a s} ds

are the workhorses of every trajectory estimate.  Both are evaluated by
all-positive-term expansions so no cancellation occurs for large t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class AdmissibilityError(ValueError):
    """Raised when a solve is attempted with parameters failing (A1)-(A5)."""


def _factorial(n: int) -> float:
    return float(math.factorial(n))


@dataclass(frozen=True)
class DampingParams:
    """Validated parameter bundle.  Construct through `derive_constants`."""

    a: float
    a1: float
    a2: float
    K: int
    t0: float
    C_E: float

    def __post_init__(self):
        if not (self.a > 0 and self.a1 > 0 and self.a2 > 0):
            raise ValueError("a, a1, a2 must be positive")
        if self.K < 0 or int(self.K) != self.K:
            raise ValueError("K must be a nonnegative integer")
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")

    def as_dict(self) -> dict:
        return {
            "a": self.a,
            "a1": self.a1,
            "a2": self.a2,
            "K": int(self.K),
            "t0": self.t0,
            "C_E": self.C_E,
        }


def minimal_start_time(a: float, a1: float, K: int) -> float:
    """Smallest t0 admitted by condition (A2): max{2, 4K, log(8 a1)/a}.

    For 8 a1 <= 1 the logarithm is nonpositive and the floor of 2 rules.
    """
    if a <= 0 or a1 <= 0:
        raise ValueError("a and a1 must be positive")
    return max(2.0, 4.0 * K, math.log(8.0 * a1) / a)


def derive_constants(a: float, a1: float, a2: float, K: int,
                     t0: float | None = None) -> DampingParams:
    """Build a DampingParams with C_E and (optionally minimal) t0.

    C_E = 240 a1 a2 / a + 4 a1.  When t0 is omitted, the minimal value
    allowed by (A2) is used.
    """
    if a <= 0 or a1 <= 0 or a2 <= 0:
        raise ValueError("a, a1, a2 must be positive")
    if K < 0 or int(K) != K:
        raise ValueError("K must be a nonnegative integer")
    c_e = 240.0 * a1 * a2 / a + 4.0 * a1
    if t0 is None:
        t0 = minimal_start_time(a, a1, K)
    return DampingParams(a=a, a1=a1, a2=a2, K=int(K), t0=float(t0), C_E=c_e)


@dataclass(frozen=True)
class ConditionCheck:
    """One admissibility inequality, kept as lhs <= rhs with margin = rhs - lhs."""

    name: str
    description: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the five-condition admissibility gate.

    Margins are (rhs - lhs): nonnegative means the condition holds.
    `a3_implied_lhs` records the start-time form (50 C_E / a) t0^3 e^{-a t0},
    which the peak form of (A3) dominates because t^3 e^{-a t} is maximized
    at t = 3/a.  `a3_peak_before_t0` flags configurations with t0 < 3/a,
    where that peak lies inside the excluded early-time window; the implied
    inequality still holds but is then not tight at t0.
    """

    params: DampingParams
    conditions: tuple[ConditionCheck, ...]
    a3_implied_lhs: float
    a3_peak_before_t0: bool

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def failures(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.conditions if not c.passed)

    def condition(self, name: str) -> ConditionCheck:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "conditions": [c.as_dict() for c in self.conditions],
            "a3_implied_lhs": self.a3_implied_lhs,
            "a3_peak_before_t0": self.a3_peak_before_t0,
            "passed": self.passed,
            "failures": list(self.failures),
        }


def check_assumptions(params: DampingParams) -> AssumptionReport:
    """Evaluate the admissibility conditions (A1)-(A5) literally.

    A1:  a  >= max{1, 15 sqrt(a2)}
    A2:  t0 >= max{2, 4K, log(8 a1)/a}
    A3:  (50 C_E / a) (3/a)^3 e^{-3} <= 1
    A4:  8 e <= 1 / (20 a2)
    A5:  8 C_E <= a^2
    """
    a, a1, a2, k, t0 = params.a, params.a1, params.a2, params.K, params.t0
    c_e = params.C_E

    a1_floor = max(1.0, 15.0 * math.sqrt(a2))
    t0_floor = minimal_start_time(a, a1, k)
    a3_lhs = (50.0 * c_e / a) * (3.0 / a) ** 3 * math.exp(-3.0)
    a4_lhs = 8.0 * math.e
    a5_lhs = 8.0 * c_e

    conditions = (
        ConditionCheck("A1", "decay rate large enough: max{1, 15 sqrt(a2)} <= a",
                       a1_floor, a),
        ConditionCheck("A2", "start time late enough: max{2, 4K, log(8 a1)/a} <= t0",
                       t0_floor, t0),
        ConditionCheck("A3", "peak of (50 C_E/a) t^3 e^{-a t} stays below 1",
                       a3_lhs, 1.0),
        ConditionCheck("A4", "profile decay amplitude small: 8e <= 1/(20 a2)",
                       a4_lhs, 1.0 / (20.0 * a2)),
        ConditionCheck("A5", "field-gradient constant small: 8 C_E <= a^2",
                       a5_lhs, a * a),
    )
    implied = (50.0 * c_e / a) * t0 ** 3 * math.exp(-a * t0)
    return AssumptionReport(
        params=params,
        conditions=conditions,
        a3_implied_lhs=implied,
        a3_peak_before_t0=(t0 < 3.0 / a),
    )


def require_admissible(params: DampingParams) -> AssumptionReport:
    """Gate helper: return the report, raising AdmissibilityError on failure."""
    report = check_assumptions(params)
    if not report.passed:
        raise AdmissibilityError(
            "admissibility gate failed: " + ", ".join(report.failures))
    return report


# ---------------------------------------------------------------------------
# Exponential tail integrals
# ---------------------------------------------------------------------------

def tail_integral(a: float, t: float, k: int) -> float:
    """int_t^inf s^k e^{-a s} ds, closed form.

    Equals e^{-a t} * sum_{j=0}^{k} (k! / (j! a^{k-j+1})) t^j.  Every term
    is nonnegative for t >= 0, so the evaluation is cancellation-free.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    if t < 0:
        raise ValueError("t must be nonnegative")
    k = int(k)
    kfact = _factorial(k)
    total = 0.0
    tj = 1.0
    for j in range(k + 1):
        total += kfact / (_factorial(j) * a ** (k - j + 1)) * tj
        tj *= t
    return math.exp(-a * t) * total


def tail_integral_moment(a: float, t: float, k: int) -> float:
    """int_t^inf (s - t) s^k e^{-a s} ds, closed form.

    Expanding and integrating by parts gives

        e^{-a t} [ (k+1)!/a^{k+2}
                   + t * sum_{j=0}^{k-1} (k! (k-j) / (j+1)!) t^j / a^{k-j+1} ].

    All terms are nonnegative; the naive difference
    tail_integral(a,t,k+1) - t*tail_integral(a,t,k) loses leading digits
    for a t >> 1 and is used only as a test oracle.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    if t < 0:
        raise ValueError("t must be nonnegative")
    k = int(k)
    total = _factorial(k + 1) / a ** (k + 2)
    kfact = _factorial(k)
    tj = t  # t^{j+1} for j starting at 0
    for j in range(k):
        total += kfact * (k - j) / _factorial(j + 1) / a ** (k - j + 1) * tj
        tj *= t
    return math.exp(-a * t) * total


@dataclass(frozen=True)
class TailBoundReport:
    """Worst observed ratio of each tail integral to its standard bound.

    For t >= t0 and k <= 2K, under (A1)-(A2):

        int_t^inf (s-t) s^k e^{-a s} ds <= (4/a^2) t^k e^{-a t}
        int_t^inf       s^k e^{-a s} ds <= (2/a)   t^k e^{-a t}

    ratios <= 1 certify the bounds on the sampled window.
    """

    moment_ratios: dict = field(default_factory=dict)   # k -> worst ratio
    plain_ratios: dict = field(default_factory=dict)
    t_window: tuple[float, float] = (0.0, 0.0)

    @property
    def passed(self) -> bool:
        vals = list(self.moment_ratios.values()) + list(self.plain_ratios.values())
        return all(r <= 1.0 for r in vals)

    @property
    def worst(self) -> float:
        vals = list(self.moment_ratios.values()) + list(self.plain_ratios.values())
        return max(vals) if vals else 0.0

    def as_dict(self) -> dict:
        return {
            "moment_ratios": {str(k): v for k, v in self.moment_ratios.items()},
            "plain_ratios": {str(k): v for k, v in self.plain_ratios.items()},
            "t_window": list(self.t_window),
            "worst": self.worst,
            "passed": self.passed,
        }


def verify_tail_bounds(params: DampingParams, t_max: float,
                       samples: int = 101) -> TailBoundReport:
    """Check the 4/a^2 and 2/a tail bounds for k <= 2K on [t0, t_max]."""
    if t_max <= params.t0:
        raise ValueError("t_max must exceed t0")
    a, t0 = params.a, params.t0
    moment_ratios: dict[int, float] = {}
    plain_ratios: dict[int, float] = {}
    ts = [t0 + (t_max - t0) * i / (samples - 1) for i in range(samples)]
    for k in range(2 * params.K + 1):
        worst_m = 0.0
        worst_p = 0.0
        for t in ts:
            scale = t ** k * math.exp(-a * t)
            worst_m = max(worst_m, tail_integral_moment(a, t, k) / (4.0 / a ** 2 * scale))
            worst_p = max(worst_p, tail_integral(a, t, k) / (2.0 / a * scale))
        moment_ratios[k] = worst_m
        plain_ratios[k] = worst_p
    return TailBoundReport(moment_ratios=moment_ratios, plain_ratios=plain_ratios,
                           t_window=(t0, t_max))
