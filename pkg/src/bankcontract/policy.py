"""Feedback form of the optimal contract and its between-default flow.

Between defaults the bank's promised utility follows the linear ODE
``du = (a u + c) dt`` piecewise in ``u`` until it reaches the level's cap,
where it is held by paying fees. A policy is therefore described per level by
ascending flow segments, a cap, a fee rate at the cap and a jump rule at
default. :class:`ContractPolicy` is the optimal contract; the two subclasses
are admissible but suboptimal alternatives used to probe the upper bound.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bankcontract.hjbsolve import ValueFunctions
from bankcontract.params import DerivedQuantities


@dataclass(frozen=True)
class PolicyAction:
    delta: float
    theta: float
    h1: float
    h2: float


@dataclass(frozen=True)
class PostDefault:
    maintained: bool
    new_u: float | None = None


def lin_position(u0, a, c, s):
    """Solution of du/dt = a u + c after time s, starting at u0."""
    u0, s = np.asarray(u0, dtype=float), np.asarray(s, dtype=float)
    if a == 0.0:
        return u0 + c * s
    return u0 + (a * u0 + c) * np.expm1(a * s) / a


def lin_time(u0, u1, a, c):
    """Time for du/dt = a u + c to move from u0 up to u1 (drift assumed > 0)."""
    u0, u1 = np.asarray(u0, dtype=float), np.asarray(u1, dtype=float)
    if a == 0.0:
        return (u1 - u0) / c
    return np.log1p(a * (u1 - u0) / (a * u0 + c)) / a


class ContractPolicy:
    """Optimal contract: probation randomization below ``b_j + b_{j-1}``, a
    drop of exactly ``b_j`` above it and fees only at the cap ``gamma_j``."""

    def __init__(self, derived: DerivedQuantities, gammas, regime: str | None = None,
                 u_tol: float | None = None):
        self.derived = derived
        self.gammas = tuple(float(g) for g in gammas)
        if len(self.gammas) != derived.I:
            raise ValueError("need one cap per level")
        self.r = derived.params.r
        self.regime = regime or ("r=0" if self.r == 0.0 else "r>0")
        self.u_tol = 1e-9 * max(1.0, self.gammas[-1]) if u_tol is None else u_tol

    @classmethod
    def from_value_functions(cls, vf: ValueFunctions) -> "ContractPolicy":
        return cls(vf.derived, vf.gammas, vf.regime)

    @property
    def I(self) -> int:
        return self.derived.I

    def b(self, j: int) -> float:
        return self.derived.b_at(j)

    def cap(self, j: int) -> float:
        return self.gammas[j - 1]

    def _check(self, j: int, u: float) -> None:
        if not 1 <= j <= self.I:
            raise ValueError(f"level j={j} outside 1..{self.I}")
        if not (self.b(j) - self.u_tol <= u <= self.cap(j) + self.u_tol):
            raise ValueError(
                f"u={u!r} outside [b_{j}, cap_{j}] = [{self.b(j)!r}, {self.cap(j)!r}]")

    # -- per-level description used by the simulator ---------------------------

    def segments(self, j: int) -> list[tuple[float, float, float, float]]:
        """Ascending (lo, hi, a, c) pieces of the flow du = (a u + c) dt below the cap."""
        lam = self.derived.lam_at(j)
        if j == 1:
            # the last default ends the pool, so the bank loses all of u
            return [(self.b(1), self.cap(1), self.r + lam, 0.0)]
        return [(self.b(j), self.cap(j), self.r, lam * self.b(j))]

    def fee_rate(self, j: int) -> float:
        """Fee that holds the state at the cap: r cap + lambda_j (h1 + (1-theta) h2)."""
        lam = self.derived.lam_at(j)
        if j == 1:
            return (self.r + lam) * self.cap(1)
        return self.r * self.cap(j) + lam * self.b(j)

    def jump_arrays(self, j: int, u: np.ndarray, unif: np.ndarray):
        """Vectorized default rule: (maintained mask, post-default utility)."""
        b, bp = self.b(j), self.b(j - 1)
        prob = u < b + bp
        theta = np.where(prob, (u - b) / bp, 1.0)
        new_u = np.where(prob, bp, u - b)
        new_u = np.minimum(new_u, self.cap(j - 1))
        return unif < theta, new_u

    # -- scalar operations -----------------------------------------------------

    def policy_eval(self, j: int, u: float) -> PolicyAction:
        self._check(j, u)
        b, bp, g = self.b(j), self.b(j - 1), self.cap(j)
        at_cap = abs(u - g) <= self.u_tol
        delta = self.fee_rate(j) if at_cap else 0.0
        if j == 1:
            theta, h1 = 1.0, u
        elif u < b + bp:
            theta = (u - b) / bp
            h1 = u - bp
        else:
            theta = 1.0
            h1 = b
        return PolicyAction(delta=delta, theta=theta, h1=h1, h2=u - h1)

    def time_to_cap(self, j: int, u0: float) -> float:
        self._check(j, u0)
        u = min(max(u0, self.b(j)), self.cap(j))
        t = 0.0
        for lo, hi, a, c in self.segments(j):
            if u >= hi:
                continue
            t += float(lin_time(max(u, lo), hi, a, c))
            u = hi
        return t

    def drift_position(self, j: int, u0: float, dt: float) -> float:
        if dt < 0:
            raise ValueError("dt must be >= 0")
        self._check(j, u0)
        u = min(u0, self.cap(j))
        rem = dt
        for lo, hi, a, c in self.segments(j):
            if u >= hi or rem <= 0.0:
                continue
            tau = float(lin_time(max(u, lo), hi, a, c))
            if tau >= rem:
                return float(min(lin_position(max(u, lo), a, c, rem), hi))
            u, rem = hi, rem - tau
        return u

    def post_default(self, j: int, u: float, unif: float) -> PostDefault:
        self._check(j, u)
        if j == 1:
            return PostDefault(False)
        maintained, new_u = self.jump_arrays(j, np.array([u]), np.array([unif]))
        if not maintained[0]:
            return PostDefault(False)
        return PostDefault(True, float(new_u[0]))

    # -- vectorized flow ------------------------------------------------------

    def advance(self, j: int, u0: np.ndarray, s: np.ndarray):
        """Flow every path for its own time s.

        Returns the state after s and the time at which the cap was reached
        (``inf`` if it was not), which is when fee payments start.
        """
        u = np.minimum(np.asarray(u0, dtype=float).copy(), self.cap(j))
        rem = np.asarray(s, dtype=float).copy()
        segs = self.segments(j)
        cap = self.cap(j)
        at_cap = u >= cap
        for lo, hi, a, c in segs:
            act = (~at_cap) & (u < hi) & (rem > 0)
            if not act.any():
                continue
            ua = np.maximum(u[act], lo)
            tau = lin_time(ua, hi, a, c)
            done = tau >= rem[act]
            new_u = np.where(done, np.minimum(lin_position(ua, a, c, rem[act]), hi), hi)
            new_rem = np.where(done, 0.0, rem[act] - tau)
            u[act] = new_u
            rem[act] = new_rem
        reached = u >= cap
        u = np.where(reached, cap, u)
        t_cap = np.where(reached, np.asarray(s, dtype=float) - rem, np.inf)
        return u, t_cap


class CapShiftPolicy(ContractPolicy):
    """Same incentive structure with every cap scaled by ``factor`` (floored at
    ``b_j``). Post-default utility above the next cap is paid out at once."""

    def __init__(self, derived: DerivedQuantities, gammas, factor: float, **kw):
        shifted = [max(derived.b_at(j), factor * g) for j, g in enumerate(gammas, start=1)]
        super().__init__(derived, shifted, **kw)
        self.factor = factor

    def jump_arrays(self, j, u, unif):
        b, bp = self.b(j), self.b(j - 1)
        prob = u < b + bp
        theta = np.where(prob, (u - b) / bp, 1.0)
        new_u = np.where(prob, bp, u - b)
        return unif < theta, new_u


class HarshPenaltyPolicy(ContractPolicy):
    """Above the probation range the bank is pushed to the floor ``b_{j-1}`` at
    every default (``h1 = u - b_{j-1} >= b_j``), compensated by a faster drift."""

    def segments(self, j):
        b, bp, cap = self.b(j), self.b(j - 1), self.cap(j)
        lam = self.derived.lam_at(j)
        split = min(b + bp, cap)
        segs = [(b, split, self.r, lam * b)]
        if cap > split:
            segs.append((split, cap, self.r + lam, -lam * bp))
        return segs

    def fee_rate(self, j):
        cap, bp = self.cap(j), self.b(j - 1)
        lam = self.derived.lam_at(j)
        if cap >= self.b(j) + bp:
            return self.r * cap + lam * (cap - bp)
        return self.r * cap + lam * self.b(j)

    def policy_eval(self, j, u):
        act = super().policy_eval(j, u)
        bp = self.b(j - 1)
        if act.theta == 1.0 and j >= 2:
            return PolicyAction(delta=act.delta, theta=1.0, h1=u - bp, h2=bp)
        return act

    def jump_arrays(self, j, u, unif):
        b, bp = self.b(j), self.b(j - 1)
        prob = u < b + bp
        theta = np.where(prob, (u - b) / bp, 1.0)
        return unif < theta, np.full_like(u, bp)
