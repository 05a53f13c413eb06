"""Command-line entry point: ``bankcontract {check,solve,simulate,ictest,export}``.

Configuration is a flat ``key=value`` text file. ``#`` starts a comment and
blank lines are ignored. A run manifest written by ``solve`` is itself a valid
configuration: its ``config.``-prefixed keys are read and the rest skipped.

Exit codes: 0 pass, 1 assumption or solvability failure, 2 statistical
failure, 3 I/O, parse or parameter error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from bankcontract import __version__
from bankcontract.hjbsolve import (
    ConditionError,
    SolverSettings,
    ValueFunctionLevel,
    ValueFunctions,
    build_all,
)
from bankcontract.mcsim import (
    SimConfig,
    deviation_utility,
    estimate,
    simulate_path,
    write_events,
)
from bankcontract.params import ParameterError, PoolParams, check_assumptions
from bankcontract.policy import ContractPolicy

EXIT_OK, EXIT_CONDITION, EXIT_STAT, EXIT_IO = 0, 1, 2, 3

REQUIRED = ("I", "mu", "B", "epsilon", "r", "alpha")
DEFAULTS = {
    "grid_points": "2048",
    "quad_tol": "1e-10",
    "bisect_tol": "1e-12",
    "n_paths": "100000",
    "seed": "42",
    "u0": "auto",
    "shirk": "",
}
VALUES_COLUMNS = ("j", "u", "v", "dv_left", "dv_right", "region")
BOUNDARY_COLUMNS = ("j", "b_j", "b_j+b_{j-1}", "gamma_j", "vbar_j")


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass(frozen=True)
class RunConfig:
    params: PoolParams
    settings: SolverSettings
    sim: SimConfig
    raw: dict[str, str]


def _floats(text: str, key: str, line: int | None) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{key} must be a comma-separated list of numbers, got {text!r}",
                          line) from None


def parse_config(path) -> RunConfig:
    """Read a key=value file into model parameters, solver settings and a SimConfig.

    ``shirk`` is listed from the full pool downwards: ``shirk=k_I,...,k_1``.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc

    raw: dict[str, str] = {}
    where: dict[str, int] = {}
    is_manifest = any(ln.strip().startswith("config.") for ln in text.splitlines())
    for n, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected key=value, got {body!r}", n)
        key, value = (s.strip() for s in body.split("=", 1))
        if is_manifest:
            if not key.startswith("config."):
                continue
            key = key[len("config."):]
        if key not in REQUIRED and key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}", n)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first set on line {where[key]})", n)
        raw[key] = value
        where[key] = n

    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    for k, v in DEFAULTS.items():
        raw.setdefault(k, v)

    def num(key, kind=float):
        try:
            return kind(raw[key])
        except ValueError:
            raise ConfigError(f"{key} must be {'an integer' if kind is int else 'a number'}, "
                              f"got {raw[key]!r}", where.get(key)) from None

    I = num("I", int)
    alpha = _floats(raw["alpha"], "alpha", where.get("alpha"))
    if len(alpha) != I:
        raise ConfigError(f"alpha has {len(alpha)} entries, expected I={I}", where.get("alpha"))
    params = PoolParams(I=I, mu=num("mu"), B=num("B"), epsilon=num("epsilon"), r=num("r"),
                        alpha=alpha)
    settings = SolverSettings(grid_points=num("grid_points", int), quad_tol=num("quad_tol"),
                              bisect_tol=num("bisect_tol"))
    u0 = None if raw["u0"].lower() == "auto" else num("u0")
    shirk = None
    if raw["shirk"]:
        ks = _floats(raw["shirk"], "shirk", where.get("shirk"))
        if len(ks) != I or any(k != int(k) for k in ks):
            raise ConfigError(f"shirk needs {I} integers k_I,...,k_1", where.get("shirk"))
        shirk = tuple(int(k) for k in reversed(ks))
    try:
        sim = SimConfig(n_paths=num("n_paths", int), seed=num("seed", int), u0=u0, shirk=shirk)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(params, settings, sim, raw)


# -- export ---------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17e}"


def export_plotdata(vf: ValueFunctions, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    values_path, bounds_path = out / "values.csv", out / "boundaries.csv"
    with open(values_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VALUES_COLUMNS)
        for lv in vf.levels:
            for u, v, dl, dr in zip(lv.grid, lv.values, lv.deriv_left, lv.deriv_right):
                w.writerow([lv.j, _fmt(u), _fmt(v), _fmt(dl), _fmt(dr), lv.region(u)])
    with open(bounds_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOUNDARY_COLUMNS)
        for lv in vf.levels:
            w.writerow([lv.j, _fmt(lv.b), _fmt(lv.b + lv.b_prev), _fmt(lv.gamma), _fmt(lv.vbar)])
    return values_path, bounds_path


def read_plotdata(out_dir) -> dict[int, ValueFunctionLevel]:
    """Rebuild interpolating levels from exported CSVs."""
    out = Path(out_dir)
    rows: dict[int, list[list[float]]] = {}
    with open(out / "values.csv", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(int(rec["j"]), []).append(
                [float(rec[c]) for c in ("u", "v", "dv_left", "dv_right")])
    bounds = {}
    with open(out / "boundaries.csv", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            bounds[int(rec["j"])] = rec
    levels = {}
    for j, data in rows.items():
        a = np.array(data)
        b = float(bounds[j]["b_j"])
        levels[j] = ValueFunctionLevel(
            j=j, b=b, b_prev=float(bounds[j]["b_j+b_{j-1}"]) - b,
            gamma=float(bounds[j]["gamma_j"]), grid=a[:, 0], values=a[:, 1],
            deriv_left=a[:, 2], deriv_right=a[:, 3])
    return levels


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, cfg: RunConfig, vf: ValueFunctions, values_csv, timings) -> None:
    report = check_assumptions(cfg.params, vf.derived)
    lines = [f"tool_version={__version__}"]
    lines += [f"config.{k}={cfg.raw[k]}" for k in (*REQUIRED, *DEFAULTS)]
    s = cfg.settings
    lines += [f"solver.grid_points={s.grid_points}", f"solver.quad_tol={s.quad_tol!r}",
              f"solver.bisect_tol={s.bisect_tol!r}", f"solver.gl_order={s.gl_order}",
              f"regime={vf.regime}",
              "gammas=" + ",".join(repr(g) for g in vf.gammas),
              "vbars=" + ",".join(repr(v) for v in vf.vbars)]
    lines += [f"assumption.{name}={'ok' if ok else 'FAIL'} margin={m!r}"
              for name, ok, m in report.conditions]
    lines += [f"timing.{k}_seconds={v:.6f}" for k, v in timings.items()]
    lines.append(f"sha256={sha256_file(values_csv)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- commands -------------------------------------------------------------------

def _solve(cfg: RunConfig) -> ValueFunctions:
    return build_all(cfg.params, settings=cfg.settings)


def cmd_check(cfg: RunConfig, args) -> int:
    report = check_assumptions(cfg.params)
    print(report.format())
    return EXIT_OK if report.overall else EXIT_CONDITION


def _print_levels(vf: ValueFunctions) -> None:
    print(f"regime: {vf.regime}")
    for lv in vf.levels:
        print(f"j={lv.j}  b_j={lv.b:.12g}  gamma_j={lv.gamma:.12g}  vbar_j={lv.vbar:.12g}  "
              f"v_j(gamma_j)={lv.v_gamma:.12g}")


def cmd_solve(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    vf = _solve(cfg)
    t1 = time.perf_counter()
    _print_levels(vf)
    if args.out:
        values_csv, _ = export_plotdata(vf, args.out)
        t2 = time.perf_counter()
        write_manifest(Path(args.out) / "manifest.txt", cfg, vf, values_csv,
                       {"solve": t1 - t0, "export": t2 - t1})
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_export(cfg: RunConfig, args) -> int:
    if not args.out:
        raise ConfigError("export needs --out")
    vf = _solve(cfg)
    values_csv, bounds_csv = export_plotdata(vf, args.out)
    print(f"wrote {values_csv} and {bounds_csv}")
    return EXIT_OK


def _sim_config(cfg: RunConfig, args, **extra) -> SimConfig:
    kw = {}
    if args.paths is not None:
        kw["n_paths"] = args.paths
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.u0 is not None:
        kw["u0"] = None if args.u0.lower() == "auto" else float(args.u0)
    kw["workers"] = args.workers
    kw.update(extra)
    return replace(cfg.sim, **kw)


def _report(label: str, mean: float, se: float, target: float) -> bool:
    ok = abs(mean - target) <= 3 * se
    print(f"{label:<9s} mean={mean:.10f}  se={se:.10f}  target={target:.10f}  "
          f"z={(mean - target) / se if se > 0 else float('nan'):+.3f}  {'PASS' if ok else 'FAIL'}")
    return ok


def _maybe_events(cfg: RunConfig, pol, sim: SimConfig, args) -> None:
    if args.events is None:
        return
    n = min(args.events, sim.n_paths)
    recs = [simulate_path(cfg.params, pol, sim, i, record_events=True) for i in range(n)]
    path = Path(args.out or ".") / "events.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_events(path, recs)
    print(f"wrote {path} ({n} paths)")


def cmd_simulate(cfg: RunConfig, args) -> int:
    vf = _solve(cfg)
    pol = ContractPolicy.from_value_functions(vf)
    sim = _sim_config(cfg, args, shirk=None)
    res = estimate(cfg.params, vf, pol, sim)
    u0 = res.u0
    print(f"paths={res.n_paths}  flagged={res.n_flagged}  seed={sim.seed}  u0={u0:.12g}")
    ok_b = _report("bank", res.mean_bank, res.se_bank, u0)
    ok_i = _report("investor", res.mean_investor, res.se_investor, float(vf.eval(vf.I, u0)))
    _maybe_events(cfg, pol, sim, args)
    return EXIT_OK if ok_b and ok_i else EXIT_STAT


def cmd_ictest(cfg: RunConfig, args) -> int:
    vf = _solve(cfg)
    pol = ContractPolicy.from_value_functions(vf)
    I = cfg.params.I
    profiles = []
    if cfg.sim.shirk is not None and any(cfg.sim.shirk):
        profiles.append(("configured", cfg.sim.shirk))
    profiles.append(("full", tuple(range(1, I + 1))))
    all_ok = True
    for name, shirk in profiles:
        sim = _sim_config(cfg, args, shirk=shirk)
        res = deviation_utility(cfg.params, vf, pol, sim)
        u0 = res.u0
        ok = res.mean_bank <= u0 + 3 * res.se_bank
        all_ok &= ok
        ks = ",".join(str(k) for k in reversed(shirk))
        print(f"profile={name} shirk(k_I..k_1)={ks}  mean_bank={res.mean_bank:.10f}  "
              f"se={res.se_bank:.10f}  u0={u0:.10f}  {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if all_ok else EXIT_STAT


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "simulate": cmd_simulate,
            "ictest": cmd_ictest, "export": cmd_export}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bankcontract", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="key=value configuration or manifest")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--paths", type=int, help="override n_paths")
    ap.add_argument("--seed", type=int, help="override seed")
    ap.add_argument("--u0", help="override u0 (number or 'auto')")
    ap.add_argument("--workers", type=int, default=1, help="threads for simulation")
    ap.add_argument("--events", type=int, nargs="?", const=10, default=None,
                    help="write events.csv for the first N paths (default 10)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConditionError as exc:
        print(f"condition failure: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
