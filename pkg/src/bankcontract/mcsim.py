"""Event-driven Monte Carlo of the contract.

Only default times and liquidation coin flips are random; everything between
two defaults (the utility flow, fees, private benefit, loan income) has a
closed form. Every path starts with all ``I`` loans performing, so in round
``m`` every surviving path sits at level ``I - m`` and a whole batch of paths
can be advanced with array operations.

Random numbers come in fixed-size blocks of paths. Block ``k`` draws from
``SeedSequence(seed, spawn_key=(k,))`` an ``(I, BLOCK)`` array of standard
exponentials followed by an ``(I, BLOCK)`` array of uniforms, and path ``i``
uses column ``i % BLOCK`` of block ``i // BLOCK``. Results therefore depend
only on the seed and path index, never on how blocks are spread over workers.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from bankcontract.hjbsolve import ValueFunctions
from bankcontract.params import PoolParams
from bankcontract.policy import ContractPolicy

BLOCK = 8192


@dataclass(frozen=True)
class SimConfig:
    """``shirk[j - 1]`` is the number of loans left unmonitored at level j.

    ``epsilon_true`` replaces epsilon in the default intensity only, while the
    contract keeps being built from the nominal parameters; it exists to run
    deliberately mis-specified controls.
    """

    n_paths: int = 100_000
    seed: int = 42
    u0: float | None = None
    shirk: tuple[int, ...] | None = None
    horizon_cap: float = 1e4
    workers: int = 1
    epsilon_true: float | None = None

    def __post_init__(self):
        if not (isinstance(self.n_paths, int) and self.n_paths >= 1):
            raise ValueError(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.horizon_cap > 0:
            raise ValueError("horizon_cap must be > 0")
        if self.shirk is not None:
            object.__setattr__(self, "shirk", tuple(int(k) for k in self.shirk))
            for j, k in enumerate(self.shirk, start=1):
                if not 0 <= k <= j:
                    raise ValueError(f"shirk at level {j} must lie in 0..{j}, got {k}")

    def shirk_profile(self, I: int) -> tuple[int, ...]:
        if self.shirk is None:
            return (0,) * I
        if len(self.shirk) != I:
            raise ValueError(f"shirk profile needs {I} entries, got {len(self.shirk)}")
        return self.shirk


@dataclass
class PathRecord:
    tau: float
    # (time, level before the default, maintained)
    defaults: list[tuple[float, int, bool]]
    bank_payoff: float
    investor_payoff: float
    lump: float
    fees_undiscounted: float
    private_benefit: float
    flagged: bool = False
    events: list[tuple] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class SimResult:
    mean_bank: float
    se_bank: float
    mean_investor: float
    se_investor: float
    n_paths: int
    n_flagged: int
    u0: float
    config: SimConfig
    samples: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def bank_within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.mean_bank - target) <= n_se * self.se_bank

    def investor_within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.mean_investor - target) <= n_se * self.se_investor


def block_draws(seed: int, block: int, I: int) -> tuple[np.ndarray, np.ndarray]:
    ss = np.random.SeedSequence(seed, spawn_key=(block,))
    gen = np.random.Generator(np.random.PCG64(ss))
    expo = gen.standard_exponential((I, BLOCK))
    unif = gen.random((I, BLOCK))
    return expo, unif


def resolve_u0(pol: ContractPolicy, u0: float | None) -> tuple[float, float]:
    """Starting state and the lump paid at time 0 when u0 exceeds the top cap."""
    I = pol.I
    if u0 is None:
        return pol.cap(I), 0.0
    if u0 < pol.b(I) - pol.u_tol:
        raise ValueError(f"u0={u0!r} below the limited-liability floor b_I={pol.b(I)!r}")
    if u0 > pol.cap(I):
        return pol.cap(I), u0 - pol.cap(I)
    return max(u0, pol.b(I)), 0.0


def _intensities(params: PoolParams, cfg: SimConfig) -> np.ndarray:
    eps = params.epsilon if cfg.epsilon_true is None else cfg.epsilon_true
    k = cfg.shirk_profile(params.I)
    return np.array([a * (j + eps * kj)
                     for j, (a, kj) in enumerate(zip(params.alpha, k), start=1)])


def _disc_integral(r: float, t0, t1):
    """Integral of exp(-r t) over [t0, t1], elementwise."""
    if r == 0.0:
        return t1 - t0
    return np.exp(-r * t0) * (-np.expm1(-r * (t1 - t0))) / r


def _run_block(params: PoolParams, pol: ContractPolicy, cfg: SimConfig, block: int,
               n: int) -> dict[str, np.ndarray]:
    I, r, mu, B = params.I, params.r, params.mu, params.B
    expo, unif = block_draws(cfg.seed, block, I)
    rates = _intensities(params, cfg)
    shirk = cfg.shirk_profile(I)
    u_start, lump0 = resolve_u0(pol, cfg.u0)

    t = np.zeros(n)
    u = np.full(n, u_start)
    alive = np.ones(n, dtype=bool)
    bank = np.full(n, lump0)
    investor = np.full(n, -lump0)
    fees = np.zeros(n)
    lumps = np.full(n, lump0)
    benefit = np.zeros(n)
    n_def = np.zeros(n, dtype=np.int64)
    tau = np.full(n, np.inf)

    for m in range(I):
        j = I - m
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        s = expo[j - 1, idx] / rates[j - 1]
        t0 = t[idx]
        u_end, t_cap = pol.advance(j, u[idx], s)

        fee = pol.fee_rate(j)
        pinned = np.isfinite(t_cap)
        fee_disc = np.where(pinned, fee * _disc_integral(r, t0 + np.where(pinned, t_cap, 0.0),
                                                         t0 + s), 0.0)
        fee_und = np.where(pinned, fee * (s - np.where(pinned, t_cap, 0.0)), 0.0)
        pb = B * shirk[j - 1] * _disc_integral(r, t0, t0 + s)
        bank[idx] += fee_disc + pb
        benefit[idx] += pb
        fees[idx] += fee_und
        investor[idx] += j * mu * s - fee_und
        t1 = t0 + s
        t[idx] = t1
        n_def[idx] += 1

        if j == 1:
            maintained = np.zeros(idx.size, dtype=bool)
            new_u = np.zeros(idx.size)
        else:
            maintained, new_u = pol.jump_arrays(j, u_end, unif[j - 1, idx])
            over = maintained & (new_u > pol.cap(j - 1))
            if over.any():
                extra = new_u[over] - pol.cap(j - 1)
                disc = np.exp(-r * t1[over])
                bank[idx[over]] += extra * disc
                investor[idx[over]] -= extra
                lumps[idx[over]] += extra
                new_u[over] = pol.cap(j - 1)
        u[idx] = np.where(maintained, new_u, u[idx])
        ended = idx[~maintained]
        tau[ended] = t1[~maintained]
        alive[ended] = False

    flagged = tau > cfg.horizon_cap
    return {"bank": bank, "investor": investor, "tau": tau, "fees": fees,
            "lump": lumps, "benefit": benefit, "n_defaults": n_def, "flagged": flagged}


def run_paths(params: PoolParams, pol: ContractPolicy, cfg: SimConfig) -> dict[str, np.ndarray]:
    """Per-path outcome arrays ordered by path index."""
    n_blocks = -(-cfg.n_paths // BLOCK)
    sizes = [min(BLOCK, cfg.n_paths - k * BLOCK) for k in range(n_blocks)]

    def job(k):
        return _run_block(params, pol, cfg, k, sizes[k])

    if cfg.workers == 1 or n_blocks == 1:
        parts = [job(k) for k in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(job, range(n_blocks)))
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if x.size == 0:
        return math.nan, math.inf
    if x.size == 1:
        return float(x[0]), math.inf
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def summarize(samples: dict[str, np.ndarray], cfg: SimConfig, u0: float) -> SimResult:
    keep = ~samples["flagged"]
    mb, sb = _mean_se(samples["bank"][keep])
    mi, si = _mean_se(samples["investor"][keep])
    return SimResult(mean_bank=mb, se_bank=sb, mean_investor=mi, se_investor=si,
                     n_paths=int(keep.sum()), n_flagged=int((~keep).sum()), u0=u0,
                     config=cfg, samples=samples)


def starting_utility(pol: ContractPolicy, cfg: SimConfig) -> float:
    """The promised utility u0 the bank is owed (including any lump)."""
    u, lump = resolve_u0(pol, cfg.u0)
    return u + lump


def estimate(params: PoolParams, vf: ValueFunctions | None, pol: ContractPolicy,
             cfg: SimConfig) -> SimResult:
    """Means and standard errors of both payoffs under full monitoring."""
    if any(cfg.shirk_profile(params.I)):
        raise ValueError("estimate runs the monitoring profile; use deviation_utility")
    samples = run_paths(params, pol, cfg)
    return summarize(samples, cfg, starting_utility(pol, cfg))


def deviation_utility(params: PoolParams, vf: ValueFunctions | None, pol: ContractPolicy,
                      cfg: SimConfig) -> SimResult:
    """Bank payoff when ``cfg.shirk`` loans go unmonitored at each level."""
    if not any(cfg.shirk_profile(params.I)):
        raise ValueError("deviation_utility needs some k_j > 0")
    samples = run_paths(params, pol, cfg)
    return summarize(samples, cfg, starting_utility(pol, cfg))


def investor_target(vf: ValueFunctions, u0: float) -> float:
    return float(vf.eval(vf.I, u0))


def simulate_path(params: PoolParams, pol: ContractPolicy, cfg: SimConfig,
                  path_index: int, record_events: bool = False) -> PathRecord:
    """One path, scalar code, same random numbers as the batched engine."""
    if not 0 <= path_index < cfg.n_paths:
        raise ValueError("path_index outside 0..n_paths-1")
    I, r, mu, B = params.I, params.r, params.mu, params.B
    expo, unif = block_draws(cfg.seed, path_index // BLOCK, I)
    col = path_index % BLOCK
    rates = _intensities(params, cfg)
    shirk = cfg.shirk_profile(I)
    u, lump = resolve_u0(pol, cfg.u0)

    bank, investor = lump, -lump
    fees = benefit = 0.0
    t = 0.0
    defaults: list[tuple[float, int, bool]] = []
    events: list[tuple] = []
    for m in range(I):
        j = I - m
        s = float(expo[j - 1, col] / rates[j - 1])
        tc = pol.time_to_cap(j, u)
        if tc < s:
            fee = pol.fee_rate(j)
            fd = fee * float(_disc_integral(r, t + tc, t + s))
            bank += fd
            fees += fee * (s - tc)
            investor -= fee * (s - tc)
            if record_events and tc > 0:
                events.append((path_index, t + tc, j, "cap-reached", u, pol.cap(j)))
            u = pol.cap(j)
        else:
            u = pol.drift_position(j, u, s)
        pb = B * shirk[j - 1] * float(_disc_integral(r, t, t + s))
        bank += pb
        benefit += pb
        investor += j * mu * s
        t += s
        u_pre = u
        if j == 1:
            ok, new_u = False, 0.0
        else:
            mask, arr = pol.jump_arrays(j, np.array([u]), np.array([unif[j - 1, col]]))
            ok, new_u = bool(mask[0]), float(arr[0])
            if ok and new_u > pol.cap(j - 1):
                extra = new_u - pol.cap(j - 1)
                bank += extra * math.exp(-r * t)
                investor -= extra
                lump += extra
                new_u = pol.cap(j - 1)
        defaults.append((t, j, ok))
        if record_events:
            kind = "default-maintained" if ok else "default-liquidated"
            events.append((path_index, t, j, kind, u_pre, new_u if ok else 0.0))
        if not ok:
            break
        u = new_u
    return PathRecord(tau=t, defaults=defaults, bank_payoff=bank, investor_payoff=investor,
                      lump=lump, fees_undiscounted=fees, private_benefit=benefit,
                      flagged=t > cfg.horizon_cap, events=events)


EVENT_COLUMNS = ("pathIndex", "eventTime", "level_before", "event", "u_before", "u_after")


def write_events(path, records: Sequence[PathRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(EVENT_COLUMNS)
        for rec in records:
            for pi, et, j, kind, ub, ua in rec.events:
                w.writerow([pi, f"{et:.17e}", j, kind, f"{ub:.17e}", f"{ua:.17e}"])


def with_overrides(cfg: SimConfig, **kw) -> SimConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
