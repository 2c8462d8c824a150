"""Closed-form bounds and the parameter calculus of the packing theorem.

Natural logarithms throughout. The asymptotic constants do not pin a log
base, and the base changes feasibility verdicts, so keep this in mind when
comparing reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "BennettParams",
    "bennett_tail",
    "bennett_tail_raw",
    "bennett_h",
    "order_stat_moment",
    "Params",
    "Check",
    "AssumptionReport",
    "validate_params",
    "harmonic_gap",
]


@dataclass(frozen=True)
class BennettParams:
    N: int
    M: float
    mu: float
    sigma2: float
    t: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not self.M > 0:
            raise ValueError("M must be positive")
        if self.sigma2 < 0 or self.t < 0:
            raise ValueError("sigma2 and t must be non-negative")

    @property
    def u(self) -> float:
        return self.M * self.t / (self.N * self.sigma2)


def bennett_tail(bp: BennettParams) -> float:
    """``exp(-t^2 / (2(N sigma^2 + M t / 3)))``, clamped to [0, 1]."""
    if bp.t == 0:
        return 1.0
    denom = 2.0 * (bp.N * bp.sigma2 + bp.M * bp.t / 3.0)
    if denom == 0:
        return 0.0
    return min(1.0, math.exp(-bp.t * bp.t / denom))


def bennett_h(u: float) -> float:
    """``(1+u) log(1+u) - u``, accurate near 0 via its alternating series."""
    if u < 0.1:
        # sum_{k>=2} (-1)^k u^k / (k(k-1))
        total = 0.0
        power = u
        for k in range(2, 40):
            power *= u
            total += (power if k % 2 == 0 else -power) / (k * (k - 1))
        return total
    return (1.0 + u) * math.log1p(u) - u


def bennett_tail_raw(bp: BennettParams) -> float:
    """``exp(-(N sigma^2 / M^2) h(Mt / (N sigma^2)))`` before the final relaxation."""
    if bp.t == 0:
        return 1.0
    var = bp.N * bp.sigma2
    if var == 0:
        return 0.0
    return min(1.0, math.exp(-(var / (bp.M * bp.M)) * bennett_h(bp.u)))


def order_stat_moment(d: int, r: int, k: int) -> float:
    """k-th moment of the d-th smallest of r i.i.d. uniforms on [0, 1]."""
    if not 1 <= d <= r:
        raise ValueError(f"need 1 <= d <= r, got d={d}, r={r}")
    if k < 1:
        raise ValueError("k must be at least 1")
    value = 1.0
    for j in range(1, k + 1):
        value *= (d + j - 1) / (r + j)
    return value


def harmonic_gap(n: int, m: int) -> tuple[float, bool]:
    """``H_{n-1} - H_{n-m}`` and whether it is at most ``log((n-1)/(n-m))``."""
    if not 1 <= m < n:
        raise ValueError(f"need 1 <= m < n, got n={n}, m={m}")
    gap = math.fsum(1.0 / (n - j) for j in range(1, m))
    return gap, gap <= math.log((n - 1) / (n - m))


@dataclass(frozen=True)
class Params:
    n: int
    p: float
    alpha: float
    eps: float
    Delta: int | None = None
    N: int | None = None

    @property
    def delta(self) -> float:
        return 21.0 * self.p / self.alpha ** 4

    @property
    def tau_max(self) -> float:
        return self.eps * self.p / (60.0 * math.log(self.n))

    @property
    def degree_cap(self) -> float:
        return 2.0 * self.n * self.p


@dataclass(frozen=True)
class Check:
    name: str
    lhs: float
    rhs: float
    holds: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "holds": self.holds}


@dataclass
class AssumptionReport:
    params: Params
    checks: list[Check]
    notes: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return all(c.holds for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        pr = self.params
        return {
            "params": {"n": pr.n, "p": pr.p, "alpha": pr.alpha, "eps": pr.eps,
                       "Delta": pr.Delta, "N": pr.N},
            "derived": {"delta": pr.delta, "tau_max": pr.tau_max, "degree_cap": pr.degree_cap},
            "checks": [c.as_dict() for c in self.checks],
            "feasible": self.feasible,
            "notes": list(self.notes),
        }


def validate_params(n: int, p: float, alpha: float, eps: float,
                    Delta: int | None = None, N: int | None = None) -> AssumptionReport:
    """Evaluate every assumption of the packing theorem; never raises on infeasibility."""
    if n < 3:
        raise ValueError("n must be at least 3")
    for name, x in (("p", p), ("alpha", alpha), ("eps", eps)):
        if not 0 < x < 1:
            raise ValueError(f"{name} must lie in (0, 1), got {x}")
    pr = Params(n, p, alpha, eps, Delta, N)
    logn = math.log(n)
    checks = [
        Check("p_lower", 150.0 * logn ** 2 / (alpha * eps * n), p,
              150.0 * logn ** 2 / (alpha * eps * n) <= p),
        Check("p_upper", p, eps * alpha ** 4 / 128.0, p <= eps * alpha ** 4 / 128.0),
    ]
    delta_cap = min(alpha, eps / math.log(1.0 / alpha)) * eps * n * p / (1600.0 * logn)
    n_cap = (1.0 - eps) * n * p / 2.0
    notes = ["natural logarithm used throughout"]
    if Delta is not None:
        checks.append(Check("Delta_cap", float(Delta), delta_cap, Delta <= delta_cap))
    else:
        notes.append(f"Delta not given; cap would be {delta_cap:.6g}")
    if N is not None:
        checks.append(Check("N_cap", float(N), n_cap, N <= n_cap))
    else:
        notes.append(f"N not given; cap would be {n_cap:.6g}")
    # compare in log space; exp(2 delta) overflows once alpha is small
    e2d = math.exp(2.0 * pr.delta) if 2.0 * pr.delta < 700 else math.inf
    checks.append(Check("exp_2delta", e2d, 1.0 + eps / 2.0, 2.0 * pr.delta <= math.log1p(eps / 2.0)))
    rem = 30.0 * logn / (alpha ** 2 * n)
    checks.append(Check("leftover_uniformity_p", rem, p, rem <= p))
    upper126 = eps * alpha ** 4 / 126.0
    if (p <= upper126) != checks[1].holds:
        notes.append(f"upper bound eps*alpha^4/126 = {upper126:.6g} gives a different verdict"
                     " than the /128 form used here")
    else:
        notes.append("the /126 variant of the upper p bound agrees with the /128 verdict")
    return AssumptionReport(pr, checks, notes)
