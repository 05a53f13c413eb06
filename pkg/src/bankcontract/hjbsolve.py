"""Recursive construction of the investors' value functions v_1..v_I.

Level ``j`` solves the linear ODE

    (r u + lambda_j b_j) v_j'(u) + j mu - lambda_j (v_j(u) - v_{j-1}(u - b_j)) = 0

on ``(b_j, gamma_j]``, is linear through the origin on ``[0, b_j]`` and has
slope -1 above the free boundary ``gamma_j``. The ODE is integrated backwards
from ``gamma_j`` with the exact integrating-factor kernel, one grid cell at a
time, so each level is stored as nodal values plus exact nodal derivatives and
evaluated by cubic Hermite interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from bankcontract.params import (
    DerivedQuantities,
    PoolParams,
    check_assumptions,
    derive,
    psi_beta,
)
from bankcontract.quadrature import fixed_gl, integrate

Side = Literal["left", "right"]


class ConditionError(RuntimeError):
    """A solvability condition of the recursion fails."""


class AssumptionError(ConditionError):
    pass


class HypLambdaError(ConditionError):
    def __init__(self, j: int, lhs: float, rhs: float):
        self.j, self.lhs, self.rhs = j, lhs, rhs
        super().__init__(
            f"hyp.lambda violated at level j={j}: "
            f"(v'_{j-1}(b_{j-1}+))^+ b_{j-1}/vbar_{j-1} = {lhs:.10g} > "
            f"psi_1(r/lambda_{j}) = {rhs:.10g}")


@dataclass(frozen=True)
class SolverSettings:
    grid_points: int = 2048
    quad_tol: float = 1e-10
    bisect_tol: float = 1e-12
    gl_order: int = 8


@dataclass(frozen=True, eq=False)
class ValueFunctionLevel:
    """One solved level.

    ``grid[0] = 0``, ``grid[1] = b_j`` and ``grid[-1] = gamma_j``; the nodes in
    between carry the ODE solution. ``deriv_left``/``deriv_right`` differ only
    at ``b_j``, where the slope jumps down.
    """

    j: int
    b: float
    b_prev: float
    gamma: float
    grid: np.ndarray
    values: np.ndarray
    deriv_left: np.ndarray
    deriv_right: np.ndarray
    kinks: tuple[float, ...] = ()
    hyp_lambda: tuple[float, float] | None = None

    @property
    def vbar(self) -> float:
        return float(self.values[1])

    @property
    def v_gamma(self) -> float:
        return float(self.values[-1])

    @property
    def breakpoints(self) -> tuple[float, ...]:
        pts = sorted({0.0, self.b, self.b + self.b_prev, self.gamma})
        return tuple(p for p in pts if p <= self.gamma)

    def _cells(self, u: np.ndarray, side: str):
        x = self.grid[1:]
        i = np.searchsorted(x, u, side=side) - 1
        i = np.clip(i, 0, x.size - 2)
        h = x[i + 1] - x[i]
        t = (u - x[i]) / h
        return i, h, t

    def value(self, u):
        u_arr = np.asarray(u, dtype=float)
        flat = u_arr.ravel()
        out = np.empty_like(flat)
        low = flat <= self.b
        high = (flat >= self.gamma) & ~low
        mid = ~(low | high)
        out[low] = self.vbar * flat[low] / self.b
        out[high] = self.v_gamma - (flat[high] - self.gamma)
        if mid.any():
            um = flat[mid]
            i, h, t = self._cells(um, "right")
            y, dr, dl = self.values[1:], self.deriv_right[1:], self.deriv_left[1:]
            omt = 1.0 - t
            out[mid] = ((1 + 2 * t) * omt**2 * y[i] + t * omt**2 * h * dr[i]
                        + t**2 * (3 - 2 * t) * y[i + 1] + t**2 * (t - 1) * h * dl[i + 1])
        out = out.reshape(u_arr.shape)
        return float(out) if out.ndim == 0 else out

    def deriv(self, u, side: Side = "right"):
        u_arr = np.asarray(u, dtype=float)
        flat = u_arr.ravel()
        out = np.empty_like(flat)
        if side == "left":
            low = flat <= self.b
            high = flat > self.gamma
        else:
            low = flat < self.b
            high = flat >= self.gamma
        high &= ~low
        mid = ~(low | high)
        out[low] = self.vbar / self.b
        out[high] = -1.0
        if mid.any():
            um = flat[mid]
            i, h, t = self._cells(um, side)
            y, dr, dl = self.values[1:], self.deriv_right[1:], self.deriv_left[1:]
            out[mid] = ((6 * t**2 - 6 * t) * (y[i] - y[i + 1]) / h
                        + (3 * t**2 - 4 * t + 1) * dr[i] + (3 * t**2 - 2 * t) * dl[i + 1])
        out = out.reshape(u_arr.shape)
        return float(out) if out.ndim == 0 else out

    def region(self, u: float) -> str:
        if u < self.b:
            return "linear-low"
        if u >= self.gamma:
            return "linear-high"
        if u < self.b + self.b_prev:
            return "probation"
        return "interior"


@dataclass(frozen=True, eq=False)
class ValueFunctions:
    levels: tuple[ValueFunctionLevel, ...]
    derived: DerivedQuantities
    settings: SolverSettings = field(default_factory=SolverSettings)
    regime: str = "r>0"

    @property
    def I(self) -> int:
        return len(self.levels)

    @property
    def gammas(self) -> tuple[float, ...]:
        return tuple(lv.gamma for lv in self.levels)

    @property
    def vbars(self) -> tuple[float, ...]:
        return tuple(lv.vbar for lv in self.levels)

    def level(self, j: int) -> ValueFunctionLevel:
        if not 1 <= j <= self.I:
            raise ValueError(f"unknown level j={j}; levels are 1..{self.I}")
        return self.levels[j - 1]

    def eval(self, j: int, u):
        if np.any(np.asarray(u) < 0):
            raise ValueError("value functions are defined for u >= 0")
        if j == 0:
            return 0.0 if np.ndim(u) == 0 else np.zeros(np.shape(u))
        return self.level(j).value(u)

    def eval_deriv(self, j: int, u, side: Side = "right"):
        if np.any(np.asarray(u) < 0):
            raise ValueError("value functions are defined for u >= 0")
        if j == 0:
            return 0.0 if np.ndim(u) == 0 else np.zeros(np.shape(u))
        return self.level(j).deriv(u, side)


def _level_constants(derived: DerivedQuantities, j: int):
    return derived.b_at(j), derived.lam_at(j), derived.params.mu


def _kernel(r: float, lam: float, b: float):
    """Integrating-factor kernel K(u, x) = ((r u + lam b) / (r x + lam b))^(lam/r)
    and the weight 1/(r x + lam b); the r = 0 limit is exp((u - x)/b)."""
    if r == 0.0:
        def K(u, x):
            return np.exp((u - x) / b)
    else:
        p = lam / r

        def K(u, x):
            return np.exp(p * np.log1p(r * (u - x) / (r * x + lam * b)))

    def inv_w(x):
        return 1.0 / (r * x + lam * b)

    return K, inv_w


def solve_v1(derived: DerivedQuantities, r: float) -> ValueFunctionLevel:
    """Single loan: v_1(u) = b_1 - u + (mu - b_1 (r + lambda_1)) / lambda_1 above b_1."""
    b, lam, mu = _level_constants(derived, 1)
    vbar = (mu - b * (r + lam)) / lam
    s = vbar / b
    return ValueFunctionLevel(
        j=1, b=b, b_prev=0.0, gamma=b,
        grid=np.array([0.0, b]), values=np.array([0.0, vbar]),
        deriv_left=np.array([s, s]), deriv_right=np.array([s, -1.0]),
        kinks=(b,),
    )


def _shifted_kinks(prev: ValueFunctionLevel, shift: float, lo: float, hi: float) -> list[float]:
    return [shift + k for k in prev.kinks if lo < shift + k < hi]


def eval_candidate(j: int, u: float, gamma: float, prev: ValueFunctionLevel,
                   derived: DerivedQuantities, r: float, quad_tol: float = 1e-10) -> float:
    """Closed-form ODE solution on (b_j, gamma] for a trial free boundary gamma.

    Evaluated by adaptive quadrature split at the kinks of v_{j-1}(. - b_j);
    independent of the gridded recursion used by :func:`build_all`.
    """
    b, lam, mu = _level_constants(derived, j)
    if not (b < u <= gamma):
        raise ValueError(f"u={u!r} outside (b_{j}, gamma] = ({b!r}, {gamma!r}]")
    K, inv_w = _kernel(r, lam, b)
    v_gamma = prev.value(gamma - b) + (j * mu - (r * gamma + lam * b)) / lam

    def f(x):
        return K(u, x) * (j * mu + lam * prev.value(x - b)) * inv_w(x)

    kinks = _shifted_kinks(prev, b, u, gamma)
    return float(K(u, gamma) * v_gamma + integrate(f, u, gamma, kinks, tol=quad_tol))


def find_gamma(j: int, prev: ValueFunctionLevel, derived: DerivedQuantities, r: float,
               bisect_tol: float = 1e-12) -> float:
    """Free boundary from r/lambda_j - 1 in the subdifferential of v_{j-1} at gamma_j - b_j."""
    b, lam, _ = _level_constants(derived, j)
    target = r / lam - 1.0
    ceiling = prev.vbar / prev.b
    if target > ceiling:
        raise ConditionError(
            f"continuation decision violated at level j={j}: "
            f"r/lambda_{j} - 1 = {target:.10g} > vbar_{j-1}/b_{j-1} = {ceiling:.10g}")
    if target >= prev.deriv(prev.b, "right"):
        return b + prev.b
    if target <= prev.deriv(prev.gamma, "left"):
        return b + prev.gamma
    lo, hi = prev.b, prev.gamma
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        if prev.deriv(mid, "right") > target:
            lo = mid
        else:
            hi = mid
    return b + 0.5 * (lo + hi)


def _merge_close(points: list[float], keep: tuple[float, ...], rtol: float = 1e-12) -> list[float]:
    pts = sorted(set(points))
    out: list[float] = []
    for p in pts:
        if out and p - out[-1] <= rtol * max(1.0, abs(p)):
            if p in keep:
                out[-1] = p
            continue
        out.append(p)
    return out


def _make_grid(kinks: list[float], n_points: int) -> np.ndarray:
    """Nodes on [kinks[0], kinks[-1]] including every kink, half uniform and
    half cosine-clustered toward the kinks within each segment."""
    total = kinks[-1] - kinks[0]
    pieces = []
    for a, c in zip(kinks[:-1], kinks[1:]):
        n = max(8, int(round(n_points * (c - a) / total)))
        k = np.arange(n + 1) / n
        s = 0.5 * k + 0.25 * (1.0 - np.cos(np.pi * k))
        seg = a + (c - a) * s
        seg[-1] = c
        pieces.append(seg if not pieces else seg[1:])
    return np.concatenate(pieces)


def _build_level(j: int, prev: ValueFunctionLevel, derived: DerivedQuantities, r: float,
                 settings: SolverSettings) -> ValueFunctionLevel:
    b, lam, mu = _level_constants(derived, j)
    gamma = find_gamma(j, prev, derived, r, settings.bisect_tol)

    lhs = max(prev.deriv(prev.b, "right"), 0.0) * prev.b / prev.vbar
    rhs = psi_beta(r / lam, 1.0)
    if lhs > rhs:
        raise HypLambdaError(j, lhs, rhs)

    kinks = _merge_close([b, gamma, *_shifted_kinks(prev, b, b, gamma)], keep=(b, gamma))
    x = _make_grid(kinks, settings.grid_points)
    K, inv_w = _kernel(r, lam, b)

    v_gamma = prev.value(gamma - b) + (j * mu - (r * gamma + lam * b)) / lam
    lo, hi = x[:-1], x[1:]
    transfer = K(lo, hi)

    def cell_integrand(pts):
        return K(lo[:, None], pts) * (j * mu + lam * prev.value(pts - b)) * inv_w(pts)

    n = settings.gl_order
    coarse = fixed_gl(cell_integrand, lo, hi, n)
    source = fixed_gl(cell_integrand, lo, hi, 2 * n)
    cell_tol = settings.quad_tol * (hi - lo) / (gamma - b)
    for i in np.flatnonzero(np.abs(source - coarse) > cell_tol):
        ui = lo[i]
        source[i] = integrate(lambda t: K(ui, t) * (j * mu + lam * prev.value(t - b)) * inv_w(t),
                              ui, hi[i], tol=cell_tol[i], n=n)

    v = np.empty_like(x)
    v[-1] = v_gamma
    for i in range(x.size - 2, -1, -1):
        v[i] = transfer[i] * v[i + 1] + source[i]

    d = (lam * (v - prev.value(x - b)) - j * mu) / (r * x + lam * b)
    d[-1] = -1.0
    vbar = v[0]
    slope_low = vbar / b
    grid = np.concatenate([[0.0], x])
    values = np.concatenate([[0.0], v])
    deriv_right = np.concatenate([[slope_low], d])
    deriv_left = deriv_right.copy()
    deriv_left[1] = slope_low
    return ValueFunctionLevel(
        j=j, b=b, b_prev=prev.b, gamma=gamma, grid=grid, values=values,
        deriv_left=deriv_left, deriv_right=deriv_right,
        kinks=tuple(kinks), hyp_lambda=(lhs, rhs),
    )


def build_all(params: PoolParams, derived: DerivedQuantities | None = None,
              settings: SolverSettings | None = None) -> ValueFunctions:
    d = derive(params) if derived is None else derived
    settings = SolverSettings() if settings is None else settings
    report = check_assumptions(params, d)
    if not report.overall:
        failed = ", ".join(f"{n} (margin {m:+.6g})" for n, _, m in report.failures())
        raise AssumptionError(f"standing assumptions fail: {failed}")
    r = params.r
    levels = [solve_v1(d, r)]
    for j in range(2, params.I + 1):
        levels.append(_build_level(j, levels[-1], d, r, settings))
    return ValueFunctions(levels=tuple(levels), derived=d, settings=settings,
                          regime="r=0" if r == 0.0 else "r>0")


def hjb_residual(vf: ValueFunctions, j: int, u):
    """ODE residual of level j at u > b_j (zero up to gamma_j, <= 0 above).

    At j = 1 a default empties the pool, so the bank loses its whole
    continuation utility u rather than b_1.
    """
    u = np.asarray(u, dtype=float)
    b, lam, mu = _level_constants(vf.derived, j)
    if np.any(u <= b):
        raise ValueError(f"hjb_residual needs u > b_{j} = {b!r}")
    r = vf.derived.params.r
    lv = vf.level(j)
    v = lv.value(u)
    dv = lv.deriv(u, "right")
    if j == 1:
        res = (r * u + lam * u) * dv + mu - lam * v
    else:
        res = (r * u + lam * b) * dv + j * mu - lam * (v - vf.eval(j - 1, u - b))
    return float(res) if np.ndim(res) == 0 else res


@dataclass(frozen=True)
class SupResult:
    sup_value: float
    theta: float
    z: float
    d_theta: float
    d_z: float


def brute_force_sup(vf: ValueFunctions, j: int, u: float, n_theta: int = 200,
                    n_z: int = 200) -> SupResult:
    """Grid maximum of the reparametrized HJB bracket over (theta, z) with fee 0."""
    lv = vf.level(j)
    b, lam, mu = _level_constants(vf.derived, j)
    if not (j >= 2 and b < u <= lv.gamma):
        raise ValueError(f"u={u!r} outside (b_{j}, gamma_{j}] for level {j}")
    r = vf.derived.params.r
    bp = vf.derived.b_at(j - 1)
    theta_max = min(1.0, (u - b) / bp)
    theta = np.linspace(0.0, theta_max, n_theta)
    frac = np.linspace(0.0, 1.0, n_z)
    z_lo = bp * theta
    z = z_lo[:, None] + (u - b - z_lo)[:, None] * frac[None, :]
    th = np.broadcast_to(theta[:, None], z.shape)

    prev = vf.level(j - 1)
    safe = np.where(th > 0, th, 1.0)
    # theta v(z/theta) -> -z as theta -> 0 (slope -1 at infinity)
    persp = np.where(th > 0, th * prev.value(z / safe), -z)
    v = lv.value(u)
    dv = lv.deriv(u, "left" if u >= lv.gamma else "right")
    bracket = (r * u + lam * (u - z)) * dv + j * mu - lam * (v - persp)
    k = int(np.argmax(bracket))
    i, m = np.unravel_index(k, bracket.shape)
    d_theta = theta_max / (n_theta - 1)
    d_z = (u - b - z_lo[i]) / (n_z - 1)
    return SupResult(float(bracket[i, m]), float(theta[i]), float(z[i, m]), d_theta, d_z)


@dataclass
class ShapeReport:
    # level -> property -> max violation (0 means clean)
    levels: dict[int, dict[str, float]]

    def max_violation(self, prop: str | None = None) -> float:
        vals = [v for props in self.levels.values() for k, v in props.items()
                if prop is None or k == prop]
        return max(vals, default=0.0)

    def passed(self, tol: float = 1e-8) -> bool:
        return self.max_violation() <= tol


def _fd_right_derivative(x: np.ndarray, y: np.ndarray, npts: int = 6) -> float:
    xs = x[:npts] - x[0]
    scale = xs[-1]
    coef = np.polyfit(xs / scale, y[:npts], npts - 1)
    return float(coef[-2] / scale)


def check_shape(vf: ValueFunctions) -> ShapeReport:
    """Concavity, slope bounds, the derivative ordering v_j' <= v_{j-1}'(. - b_j)
    and the boundary-derivative identity at b_j, as max violations per level."""
    mu = vf.derived.params.mu
    r = vf.derived.params.r
    out: dict[int, dict[str, float]] = {}
    for lv in vf.levels:
        j, b = lv.j, lv.b
        lam = vf.derived.lam_at(j)
        x, y = lv.grid[1:], lv.values[1:]
        dl, dr = lv.deriv_left[1:], lv.deriv_right[1:]
        props: dict[str, float] = {}

        conc = max(0.0, float(lv.deriv_right[1] - lv.deriv_left[1]))
        if x.size > 1:
            sec = np.diff(y) / np.diff(x)
            conc = max(conc, float(np.max(dl[1:] - dr[:-1], initial=0.0)),
                       float(np.max(sec - dr[:-1], initial=0.0)),
                       float(np.max(dl[1:] - sec, initial=0.0)))
        props["concavity"] = conc

        below = x < lv.gamma
        slope = float(np.max(-1.0 - dr[below], initial=0.0))
        slope = max(slope, abs(float(dr[-1]) + 1.0))
        if lv.gamma > b:
            slope = max(slope, abs(float(dl[-1]) + 1.0))
        props["slope_bounds"] = slope

        if j >= 2:
            tail = lv.gamma + lv.gamma * np.array([0.1, 0.5, 1.0])
            pts = np.concatenate([x, tail])
            right = lv.deriv(pts, "right") - vf.eval_deriv(j - 1, pts - b, "right")
            left = lv.deriv(pts[1:], "left") - vf.eval_deriv(j - 1, pts[1:] - b, "left")
            props["propz"] = max(float(np.max(right)), float(np.max(left)), 0.0)

        identity = (lam * lv.vbar - j * mu) / (b * (r + lam))
        if x.size >= 6:
            est = _fd_right_derivative(x, y)
        else:
            est = float(dr[0])
        props["boundary_identity"] = abs(est - identity)
        out[j] = props
    return ShapeReport(out)
