"""Config-driven command line front-end.

Usage::

    isocomplexity [--config run.yaml] {complexity,total,rates,sweep,verify} [overrides]

Exit codes: 0 success, 2 configuration error, 3 theorem-hypothesis violation,
4 verification failure.  The default thread count for solver grid evaluation and
Monte Carlo chunks comes from the ``ISOCOMPLEXITY_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .complexity import (
    SHELL_MODES,
    TOTAL_MODES,
    ComplexityQuery,
    ComplexityResult,
    HypothesisError,
    _jsonable,
    solve_complexity,
    total_complexity,
)
from .mc_verifier import run_verify
from .rate_functions import rate_bundle
from .semicircle import SQRT2, psi_star_potential, quantile_s_gamma, rate_j1, stieltjes_m
from .structure_function import AssumptionError, FieldParams, make_builtin

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_VERIFY = 0, 2, 3, 4
SWEEP_COLUMNS = ["variable", "value", "s_gamma", "complexity", "rho0", "u0", "y0", "branch"]
RESULT_COLUMNS = ["mode", "mu", "k", "gamma", "value", "rho0", "u0", "y0", "branch"]
RATE_COLUMNS = ["y", "s", "psi_star", "m", "j1", "lambda_star", "tau", "lambda", "branch"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    correlator: dict = field(default_factory=lambda: {"name": "log-correlator", "params": [1.0, 1.0]})
    mu: float = 0.0
    mode: str = "minima"
    k: int | None = None
    gamma: float | None = None
    energy_window: Any = "all"
    shell: tuple[float, float] = (0.0, math.inf)
    domain_constant: float | None = None
    sweep: dict | None = None
    verify: dict | None = None
    rates: dict | None = None
    output: dict = field(default_factory=lambda: {"format": "json", "path": None})

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**{k: v for k, v in d.items() if v is not None})
        cfg.validate()
        return cfg

    def validate(self) -> None:
        corr = self.correlator
        if not isinstance(corr, dict) or (("name" in corr) == ("table" in corr)):
            raise ConfigError("correlator needs exactly one of 'name' or 'table'")
        if self.mode not in SHELL_MODES + TOTAL_MODES:
            raise ConfigError(f"mode must be one of {SHELL_MODES + TOTAL_MODES}")
        try:
            self.mu = float(self.mu)
            r1, r2 = self.shell
            self.shell = (float(r1), float(r2))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad numeric field: {exc}") from exc
        fmt = self.output.get("format", "json")
        if fmt not in ("json", "csv"):
            raise ConfigError("output.format must be json or csv")
        if self.sweep is not None:
            if self.sweep.get("variable") not in ("mu", "gamma", "k", "r2"):
                raise ConfigError("sweep.variable must be one of mu, gamma, k, r2")
            if not isinstance(self.sweep.get("values"), list) or not self.sweep["values"]:
                raise ConfigError("sweep.values must be a non-empty list")

    def field_params(self) -> FieldParams:
        corr = self.correlator
        try:
            if "table" in corr:
                D = make_builtin("user-table", table=corr["table"])
            else:
                D = make_builtin(corr["name"], corr.get("params", []))
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from exc
        return FieldParams(D, self.mu)

    def query(self, **override) -> ComplexityQuery:
        vals = {"mu": self.mu, "k": self.k, "gamma": self.gamma, "r2": self.shell[1], **override}
        fp = self.field_params()
        if vals["mu"] != fp.mu:
            fp = FieldParams(fp.D, float(vals["mu"]))
        try:
            return ComplexityQuery(
                fp=fp, mode=self.mode, k=None if vals["k"] is None else int(vals["k"]),
                gamma=None if vals["gamma"] is None else float(vals["gamma"]),
                energy_window=self.energy_window, r1=self.shell[0], r2=float(vals["r2"]),
                domain_constant=self.domain_constant,
            )
        except HypothesisError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return data


def fmt_float(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt_float(r.get(c)) for c in columns])
    return buf.getvalue()


def write_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True) + "\n"


def _emit(text: str, cfg: RunConfig) -> None:
    path = cfg.output.get("path")
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _solve(cfg: RunConfig, **override) -> ComplexityResult:
    q = cfg.query(**override)
    try:
        return total_complexity(q) if q.mode in TOTAL_MODES else solve_complexity(q)
    except AssumptionError as exc:
        raise HypothesisError(str(exc)) from exc


def _result_row(cfg: RunConfig, res: ComplexityResult, **override) -> dict:
    rho0, u0, y0 = res.optimizer
    return {"mode": cfg.mode, "mu": override.get("mu", cfg.mu), "k": override.get("k", cfg.k),
            "gamma": override.get("gamma", cfg.gamma), "value": res.value, "rho0": rho0, "u0": u0,
            "y0": y0, "branch": res.branch}


def cmd_complexity(cfg: RunConfig) -> int:
    if cfg.mode in TOTAL_MODES:
        raise ConfigError("use the 'total' subcommand for total-count modes")
    return _single(cfg)


def cmd_total(cfg: RunConfig) -> int:
    if cfg.mode not in TOTAL_MODES:
        raise ConfigError("the 'total' subcommand needs a total_* mode")
    return _single(cfg)


def _single(cfg: RunConfig) -> int:
    res = _solve(cfg)
    if cfg.output.get("format") == "csv":
        _emit(write_csv([_result_row(cfg, res)], RESULT_COLUMNS), cfg)
    else:
        _emit(res.to_json() + "\n", cfg)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep needs a 'sweep' section or --sweep-variable/--sweep-values")
    var = cfg.sweep["variable"]
    rows = []
    for value in cfg.sweep["values"]:
        value = int(value) if var == "k" else float(value)
        res = _solve(cfg, **{var: value})
        gamma = value if var == "gamma" else cfg.gamma
        s_g = quantile_s_gamma(gamma) if gamma is not None else None
        rho0, u0, y0 = res.optimizer
        rows.append({"variable": var, "value": value, "s_gamma": s_g, "complexity": res.value,
                     "rho0": rho0, "u0": u0, "y0": y0, "branch": res.branch})
    if cfg.output.get("format") == "json":
        _emit("".join(write_json(r) for r in rows), cfg)
    else:
        _emit(write_csv(rows, SWEEP_COLUMNS), cfg)
    return EXIT_OK


def cmd_rates(cfg: RunConfig) -> int:
    spec = cfg.rates or {}
    ys = [float(y) for y in spec.get("y", [-2.0])]
    ss = [float(s) for s in spec.get("s", list(np.linspace(-1.0, 0.5, 7)))]
    rows = []
    for y in ys:
        if y > -SQRT2:
            raise ConfigError("rates grid needs y <= -sqrt(2)")
        for s in ss:
            rb = rate_bundle(y, s)
            rows.append({"y": y, "s": s, "psi_star": psi_star_potential(y), "m": stieltjes_m(y), "j1": rate_j1(y),
                         "lambda_star": rb.lambda_star, "tau": rb.tau, "lambda": rb.lambda_value,
                         "branch": rb.branch.value})
    if cfg.output.get("format") == "json":
        _emit("".join(write_json(r) for r in rows), cfg)
    else:
        _emit(write_csv(rows, RATE_COLUMNS), cfg)
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    spec = cfg.verify or {}
    try:
        outcomes = run_verify(cfg.field_params(), checks=spec.get("checks"), seed=int(spec.get("seed", 0)),
                              n_samples=spec.get("n_samples"), n_dims=spec.get("n_dims"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _emit("".join(o.to_json() + "\n" for o in outcomes), cfg)
    return EXIT_OK if all(o.passed for o in outcomes) else EXIT_VERIFY


COMMANDS = {"complexity": cmd_complexity, "total": cmd_total, "rates": cmd_rates, "sweep": cmd_sweep,
            "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isocomplexity", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="YAML or JSON run file")
    p.add_argument("--correlator", help="built-in correlator name")
    p.add_argument("--params", type=float, nargs="+", help="correlator parameters c s")
    p.add_argument("--table", help="CSV table r,D(r) for a user correlator")
    p.add_argument("--mu", type=float)
    p.add_argument("--mode", choices=SHELL_MODES + TOTAL_MODES)
    p.add_argument("--k", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--energy-window", nargs="+", help="'all' or LO HI")
    p.add_argument("--shell", nargs=2, help="R1 R2 (R2 may be inf)")
    p.add_argument("--domain-constant", type=float)
    p.add_argument("--sweep-variable", choices=["mu", "gamma", "k", "r2"])
    p.add_argument("--sweep-values", type=float, nargs="+")
    p.add_argument("--checks", nargs="+")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--format", choices=["json", "csv"])
    p.add_argument("--output", help="output file (default stdout)")
    return p


def merge_overrides(data: dict, args: argparse.Namespace) -> dict:
    d = dict(data)
    if args.correlator or args.table:
        d["correlator"] = {"table": args.table} if args.table else {"name": args.correlator,
                                                                   "params": args.params or [1.0, 1.0]}
    elif args.params:
        d.setdefault("correlator", {"name": "log-correlator"})
        d["correlator"] = {**d["correlator"], "params": args.params}
    for key in ("mu", "mode", "k", "gamma", "domain_constant"):
        if getattr(args, key) is not None:
            d[key] = getattr(args, key)
    if args.energy_window:
        ew = args.energy_window
        d["energy_window"] = "all" if ew == ["all"] else [float(x) for x in ew]
    if args.shell:
        d["shell"] = [float(x) for x in args.shell]
    if args.sweep_variable or args.sweep_values:
        sw = dict(d.get("sweep") or {})
        if args.sweep_variable:
            sw["variable"] = args.sweep_variable
        if args.sweep_values:
            sw["values"] = list(args.sweep_values)
        d["sweep"] = sw
    if args.checks or args.seed is not None or args.n_samples is not None:
        v = dict(d.get("verify") or {})
        if args.checks:
            v["checks"] = args.checks
        if args.seed is not None:
            v["seed"] = args.seed
        if args.n_samples is not None:
            v["n_samples"] = args.n_samples
        d["verify"] = v
    out = dict(d.get("output") or {"format": "json", "path": None})
    if args.format:
        out["format"] = args.format
    if args.output:
        out["path"] = args.output
    d["output"] = out
    return d


def _fail(kind: str, code: int, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": message}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_dict(merge_overrides(load_config(args.config), args))
        return COMMANDS[args.command](cfg)
    except HypothesisError as exc:
        return _fail("hypothesis", EXIT_HYPOTHESIS, str(exc))
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, str(exc))


if __name__ == "__main__":
    sys.exit(main())
