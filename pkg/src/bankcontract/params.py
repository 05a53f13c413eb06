"""Model primitives, per-level constants and the standing assumptions.

Levels are indexed by the number of performing loans ``j = 1..I``; every
per-level sequence below is stored 0-based, so ``b[j - 1]`` is ``b_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence


class ParameterError(ValueError):
    """A structural invariant of the model primitives is violated."""


@dataclass(frozen=True)
class PoolParams:
    I: int
    mu: float
    B: float
    epsilon: float
    r: float
    alpha: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if not isinstance(self.I, int) or isinstance(self.I, bool) or self.I < 1:
            raise ParameterError(f"I must be an integer >= 1, got {self.I!r}")
        for name in ("mu", "B", "epsilon"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be > 0, got {value!r}")
        if not (math.isfinite(self.r) and self.r >= 0):
            raise ParameterError(f"r must be >= 0, got {self.r!r}")
        if len(self.alpha) != self.I:
            raise ParameterError(
                f"alpha must have length I={self.I}, got {len(self.alpha)}")
        for j, a in enumerate(self.alpha, start=1):
            if not (math.isfinite(a) and a > 0):
                raise ParameterError(f"alpha_{j} must be > 0, got {a!r}")

    @classmethod
    def reference(cls, r: float = 0.05) -> "PoolParams":
        """Three identical loans used throughout the examples and tests."""
        return cls(I=3, mu=1.0, B=0.1, epsilon=0.5, r=r, alpha=(0.25, 0.25, 0.25))


@dataclass(frozen=True)
class DerivedQuantities:
    """Per-level constants.

    ``b_j = B / (epsilon alpha_j)`` is the minimal expected utility drop on
    default that keeps monitoring incentive compatible, ``lambda_j = j alpha_j``
    the aggregate default intensity with every loan monitored and
    ``alpha_bar_j`` the harmonic mean of ``alpha_1..alpha_j``.
    """

    params: PoolParams
    b: tuple[float, ...]
    lam: tuple[float, ...]
    alpha_bar: tuple[float, ...]
    first_best: float

    @property
    def I(self) -> int:
        return self.params.I

    def b_at(self, j: int) -> float:
        """``b_j`` with the convention ``b_0 = 0``."""
        return 0.0 if j == 0 else self.b[j - 1]

    def lam_at(self, j: int) -> float:
        return self.lam[j - 1]


def derive(params: PoolParams) -> DerivedQuantities:
    p = params
    b = tuple(p.B / (p.epsilon * a) for a in p.alpha)
    lam = tuple(j * a for j, a in enumerate(p.alpha, start=1))
    alpha_bar = []
    inv_sum = 0.0
    for j, a in enumerate(p.alpha, start=1):
        inv_sum += 1.0 / a
        alpha_bar.append(j / inv_sum)
    first_best = p.I * p.mu / alpha_bar[-1]
    return DerivedQuantities(params=p, b=b, lam=lam, alpha_bar=tuple(alpha_bar),
                             first_best=first_best)


@dataclass(frozen=True)
class AssumptionReport:
    # (name, holds, margin); positive margin means satisfied
    conditions: tuple[tuple[str, bool, float], ...] = field(default_factory=tuple)

    @property
    def overall(self) -> bool:
        return all(holds for _, holds, _ in self.conditions)

    def failures(self) -> list[tuple[str, bool, float]]:
        return [c for c in self.conditions if not c[1]]

    def format(self) -> str:
        lines = []
        for name, holds, margin in self.conditions:
            lines.append(f"{name:<28s} {'ok' if holds else 'FAIL':<5s} margin={margin:+.6g}")
        lines.append(f"overall: {'ok' if self.overall else 'FAIL'}")
        return "\n".join(lines)


def check_assumptions(params: PoolParams, derived: DerivedQuantities | None = None
                      ) -> AssumptionReport:
    """Profitability, monitoring efficiency and contagion conditions.

    Margins are the literal differences (right side minus left side), so a
    failed condition always carries a negative margin.
    """
    d = derive(params) if derived is None else derived
    p = params
    conds: list[tuple[str, bool, float]] = []

    m = p.mu - d.alpha_bar[-1]
    conds.append(("profitability", m >= 0, m))

    rhs = (p.mu * p.epsilon - p.B) / p.B * (p.epsilon / (1.0 + p.epsilon))
    for j in range(1, p.I + 1):
        m = rhs - p.r / d.alpha_bar[j - 1]
        conds.append((f"monitoring_efficiency[j={j}]", m >= 0, m))

    for j in range(2, p.I + 1):
        m = p.alpha[j - 2] - p.alpha[j - 1]
        conds.append((f"contagion[j={j}]", m >= 0, m))
    return AssumptionReport(tuple(conds))


def _check_beta(beta: float) -> None:
    if not (0.0 < beta <= 1.0):
        raise ValueError(f"beta must lie in (0, 1], got {beta!r}")


def _log_ratio_over_x(x: float, beta: float) -> float:
    # ln((1 + x) / (1 + (1 + beta) x)) / x
    return (math.log1p(x) - math.log1p((1.0 + beta) * x)) / x


def phi_beta(x: float, beta: float) -> float:
    """``((1 + x) / (1 + (1 + beta) x)) ** (1/x - 1)`` evaluated in log space."""
    _check_beta(beta)
    if not x > 0:
        raise ValueError(f"phi_beta needs x > 0, got {x!r}")
    if x < 1e-10:
        return math.exp(-beta)
    return math.exp((1.0 - x) * _log_ratio_over_x(x, beta))


def psi_beta(x: float, beta: float) -> float:
    """Continuous extension of ``(phi - x) / ((1 - x) phi)`` on ``x >= 0``.

    Written as ``(1 + expm1(t L) / t) / phi`` with ``t = 1 - x`` and
    ``L = ln((1+x)/(1+(1+beta)x)) / x``, which has no cancellation at ``x = 1``.
    """
    _check_beta(beta)
    if x < 0:
        raise ValueError(f"psi_beta needs x >= 0, got {x!r}")
    if x < 1e-10:
        return 1.0
    L = _log_ratio_over_x(x, beta)
    t = 1.0 - x
    e = L if t == 0.0 else math.expm1(t * L) / t
    return (1.0 + e) / math.exp(t * L)
