"""Batch command-line front end.

Runs are described by a flat key-value config file (one `key = value` per
line, `#` comments) so experiment records stay hermetic and diffable.
Commands: price, converge, table, eer, diagnose.  Numeric output uses nine
significant digits; identical configs produce byte-identical CSV files.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .experiments import (ConvergenceStudy, RoiSpec, bilinear_interp,
                          convergence_order, default_spots, extract_eer,
                          value_table)
from .grid import default_spec, dump_nodes_csv, nu_for_target_m
from .model import ModelParams, OptionSpec, PayoffKind, PARAMETER_SETS, parameter_set
from .problem import discretize_preset_grid
from .stepping import Method, MethodConfig, PenaltyConvergenceError, run

__all__ = ["RunConfig", "ConfigError", "parse_config", "serialize_config",
           "run_command", "main"]

COMMANDS = ("price", "converge", "table", "eer", "diagnose")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str = "price"
    preset: str | None = "set1"
    payoff: PayoffKind = PayoffKind.PUT_ON_MIN
    # explicit model parameters; all must be given together when no preset is set
    r: float | None = None
    sigma1: float | None = None
    sigma2: float | None = None
    rho: float | None = None
    lam: float | None = None
    gamma1: float | None = None
    gamma2: float | None = None
    rho_hat: float | None = None
    delta1: float | None = None
    delta2: float | None = None
    strike: float | None = None
    maturity: float | None = None
    # method
    method: Method = Method.MCS2_IT
    kappa: int = 2
    theta: float | None = None
    temporal_grid: str | None = None
    penalty_tol: float = 1e-7
    penalty_large: float = 1e7
    # grid
    nu: int | None = None
    m: int | None = None
    s_max_mult: float = 8.0
    log_safety: float = 1.0
    # stepping
    n_steps: int | None = None
    dt: float | None = None
    # converge
    m_list: tuple[int, ...] = ()
    roi: str = "small"
    reference: Method = Method.CNFI_P
    # table
    interior_width: float = 0.40
    spots: tuple[tuple[float, float], ...] = ()
    # eer
    eer_tol: float = 1e-4
    # output
    out: str = "out"
    jobs: int = 1
    verbose: bool = False

    def model_and_option(self) -> tuple[ModelParams, OptionSpec]:
        if self.preset is not None:
            return parameter_set(self.preset, self.payoff)
        names = ("r", "sigma1", "sigma2", "rho", "lam", "gamma1", "gamma2",
                 "rho_hat", "delta1", "delta2", "strike", "maturity")
        missing = [k for k in names if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"no preset given and model keys missing: {', '.join(missing)}")
        params = ModelParams(r=self.r, sigma1=self.sigma1, sigma2=self.sigma2,
                             rho=self.rho, lam=self.lam, gamma1=self.gamma1,
                             gamma2=self.gamma2, rho_hat=self.rho_hat,
                             delta1=self.delta1, delta2=self.delta2)
        option = OptionSpec(strike=self.strike, maturity=self.maturity,
                            payoff_kind=self.payoff)
        return params, option

    @property
    def set_label(self) -> str:
        return self.preset if self.preset is not None else "custom"


_ENUM_HINTS = {
    "method": sorted(m.value for m in Method),
    "reference": [Method.CNFI_P.value, Method.MCS2_IT.value],
    "payoff": sorted(p.value for p in PayoffKind),
    "command": list(COMMANDS),
    "temporal_grid": ["uniform", "quadratic"],
}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key == "command":
            if raw not in COMMANDS:
                raise ValueError
            return raw
        if key == "preset":
            if raw.lower() in ("none", ""):
                return None
            if raw.lower() not in PARAMETER_SETS:
                raise ValueError
            return raw.lower()
        if key == "payoff":
            return PayoffKind(raw.lower())
        if key in ("method", "reference"):
            return Method(raw.lower())
        if key == "temporal_grid":
            if raw not in ("uniform", "quadratic"):
                raise ValueError
            return raw
        if key in ("kappa", "nu", "m", "n_steps", "jobs"):
            return int(raw)
        if key == "m_list":
            return tuple(int(tok) for tok in raw.split(",") if tok.strip())
        if key == "spots":
            pairs = []
            for tok in raw.split(","):
                if not tok.strip():
                    continue
                a, b = tok.split(":")
                pairs.append((float(a), float(b)))
            return tuple(pairs)
        if key == "verbose":
            return raw.lower() in ("1", "true", "yes")
        if key in ("roi", "out"):
            return raw
        return float(raw)
    except (ValueError, KeyError):
        hint = _ENUM_HINTS.get(key)
        suffix = f"; valid options: {', '.join(hint)}" if hint else ""
        raise ConfigError(f"invalid value {raw!r} for key {key!r}{suffix}") from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate a flat key=value configuration document."""
    known = {f.name for f in fields(RunConfig)}
    seen: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = _parse_value(key, raw)
    cfg = RunConfig(**seen)
    cfg.model_and_option()  # validates preset/explicit parameter consistency
    if cfg.command == "converge" and not cfg.m_list:
        raise ConfigError("key 'm_list' is required for the converge command")
    if cfg.kappa < 1:
        raise ConfigError("key 'kappa' must be >= 1")
    if cfg.jobs < 1:
        raise ConfigError("key 'jobs' must be >= 1")
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; parse(serialize(parse(x))) == parse(x)."""
    lines = []
    for f in fields(RunConfig):
        val = getattr(cfg, f.name)
        if val is None:
            continue
        if isinstance(val, PayoffKind) or isinstance(val, Method):
            text = val.value
        elif f.name == "m_list":
            if not val:
                continue
            text = ",".join(str(v) for v in val)
        elif f.name == "spots":
            if not val:
                continue
            text = ",".join(f"{a:.9g}:{b:.9g}" for a, b in val)
        elif isinstance(val, bool):
            text = "true" if val else "false"
        elif isinstance(val, float):
            text = f"{val:.9g}"
        else:
            text = str(val)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _build_problem(cfg: RunConfig):
    params, option = cfg.model_and_option()
    if cfg.nu is not None:
        nu = cfg.nu
    else:
        target = cfg.m if cfg.m is not None else 50
        nu = nu_for_target_m(default_spec(option.strike, 1, cfg.s_max_mult), target)
    return discretize_preset_grid(params, option, nu, cfg.s_max_mult, cfg.log_safety)


def _method_config(cfg: RunConfig, option: OptionSpec) -> MethodConfig:
    if cfg.n_steps is not None:
        n = cfg.n_steps
    else:
        dt = cfg.dt if cfg.dt is not None else 0.01
        n = max(1, round(option.maturity / dt))
    return MethodConfig(cfg.method, n_steps=n, kappa=cfg.kappa, theta=cfg.theta,
                        temporal_grid=cfg.temporal_grid,
                        penalty_tol=cfg.penalty_tol, penalty_large=cfg.penalty_large)


def _roi_for(cfg: RunConfig, option: OptionSpec) -> RoiSpec:
    if cfg.roi == "small":
        return RoiSpec.small(option.strike, option.payoff_kind)
    if cfg.roi == "large":
        return RoiSpec.large(option.strike)
    try:
        lo, hi = cfg.roi.split(":")
        return RoiSpec(float(lo), float(hi))
    except ValueError:
        raise ConfigError(f"invalid value {cfg.roi!r} for key 'roi'; "
                          "use small, large or lo:hi") from None


def _write(out_dir: Path, name: str, text: str, verbose: bool):
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    if verbose:
        print(f"wrote {path}")


def _cmd_price(cfg: RunConfig, out_dir: Path) -> None:
    params, option = cfg.model_and_option()
    problem = _build_problem(cfg)
    mc = _method_config(cfg, option)
    res = run(problem, mc)
    spots = cfg.spots or tuple(default_spots(option.strike))
    lines = ["set,payoff,s1,s2,value"]
    for s1, s2 in spots:
        v = bilinear_interp(problem.grid, res.v, s1, s2)
        lines.append(f"{cfg.set_label},{cfg.payoff.value},{_fmt(s1)},{_fmt(s2)},{_fmt(v)}")
    _write(out_dir, "prices.csv", "\n".join(lines) + "\n", cfg.verbose)
    print(f"jump_matvecs={res.diagnostics.jump_matvecs} "
          f"wall_time={res.diagnostics.wall_time:.3f}s")


def _converge_rows(cfg_text: str, target_m: int):
    cfg = parse_config(cfg_text)
    params, option = cfg.model_and_option()
    study = ConvergenceStudy(params, option, reference_backend=cfg.reference,
                             s_max_mult=cfg.s_max_mult, log_safety=cfg.log_safety)
    roi = _roi_for(cfg, option)
    rows = study.errors_at(cfg.method, cfg.kappa, target_m, {cfg.roi: roi})
    diag = study.run_records[-1][3]
    return [(r.method.value, r.kappa, r.m, r.n_budget, r.n_steps, r.roi, r.error)
            for r in rows], diag.jump_matvecs


def _cmd_converge(cfg: RunConfig, out_dir: Path, cfg_text: str) -> None:
    params, option = cfg.model_and_option()
    all_rows: list[tuple] = []
    total_matvecs = 0
    if cfg.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = {pool.submit(_converge_rows, cfg_text, m): m for m in cfg.m_list}
            for fut in concurrent.futures.as_completed(futures):
                rows, matvecs = fut.result()
                all_rows.extend(rows)
                total_matvecs += matvecs
    else:
        study = ConvergenceStudy(params, option, reference_backend=cfg.reference,
                                 s_max_mult=cfg.s_max_mult, log_safety=cfg.log_safety)
        roi = _roi_for(cfg, option)
        for m in cfg.m_list:
            for r in study.errors_at(cfg.method, cfg.kappa, m, {cfg.roi: roi}):
                all_rows.append((r.method.value, r.kappa, r.m, r.n_budget,
                                 r.n_steps, r.roi, r.error))
        total_matvecs = sum(d.jump_matvecs for *_, d in study.run_records)
    all_rows.sort(key=lambda row: row[2])

    lines = ["method,kappa,m,N,Nprime,roi,error"]
    for meth, kap, m, n, nprime, roi_name, err in all_rows:
        lines.append(f"{meth},{kap},{m},{n},{nprime},{roi_name},{_fmt(err)}")
    _write(out_dir, "errors.csv", "\n".join(lines) + "\n", cfg.verbose)

    ms = [row[2] for row in all_rows]
    errs = [row[6] for row in all_rows]
    order = convergence_order(ms, errs) if len(ms) >= 2 else float("nan")
    order_lines = ["method,kappa,set,payoff,roi,order",
                   f"{cfg.method.value},{cfg.kappa},{cfg.set_label},"
                   f"{cfg.payoff.value},{cfg.roi},{_fmt(order)}"]
    _write(out_dir, "orders.csv", "\n".join(order_lines) + "\n", cfg.verbose)
    print(f"jump_matvecs={total_matvecs} fitted_order={_fmt(order)}")


def _cmd_table(cfg: RunConfig, out_dir: Path) -> None:
    spots = list(cfg.spots) if cfg.spots else None
    rows, res, problem = value_table(cfg.preset or "set1", cfg.payoff,
                                     interior_width=cfg.interior_width,
                                     dt=cfg.dt if cfg.dt is not None else 0.01,
                                     spots=spots, s_max_mult=cfg.s_max_mult)
    lines = ["set,payoff,s1,s2,value"]
    for s1, s2, v in rows:
        lines.append(f"{cfg.set_label},{cfg.payoff.value},{_fmt(s1)},{_fmt(s2)},{v:.3f}")
    _write(out_dir, "table.csv", "\n".join(lines) + "\n", cfg.verbose)
    print(f"jump_matvecs={res.diagnostics.jump_matvecs} "
          f"wall_time={res.diagnostics.wall_time:.3f}s")


def _cmd_eer(cfg: RunConfig, out_dir: Path) -> None:
    params, option = cfg.model_and_option()
    problem = _build_problem(cfg)
    mc = _method_config(cfg, option)
    res = run(problem, mc)
    mask = extract_eer(res.v, problem.payoff_grid, option.strike, cfg.eer_tol)
    s1 = problem.grid.axis(1).s
    s2 = problem.grid.axis(2).s
    lines = ["set,payoff,i,j,s1,s2,exercised"]
    for i in range(mask.shape[0]):
        for j in range(mask.shape[1]):
            lines.append(f"{cfg.set_label},{cfg.payoff.value},{i},{j},"
                         f"{_fmt(s1[i])},{_fmt(s2[j])},{int(mask[i, j])}")
    _write(out_dir, "eer.csv", "\n".join(lines) + "\n", cfg.verbose)
    print(f"jump_matvecs={res.diagnostics.jump_matvecs} "
          f"exercised_nodes={int(mask.sum())}")


def _cmd_diagnose(cfg: RunConfig, out_dir: Path) -> None:
    problem = _build_problem(cfg)
    _write(out_dir, "grid.csv", dump_nodes_csv(problem.grid), cfg.verbose)
    kernel = problem.jump.kernel
    entries = [
        ("kernel_mass", kernel.mass),
        ("kernel_tail_eps", kernel.tail_mass),
        ("norm_bound", problem.jump.norm_bound()),
        ("lam", kernel.lam),
        ("M1", problem.jump.log1.m_pow2),
        ("M2", problem.jump.log2.m_pow2),
        ("dx1", problem.jump.log1.dx),
        ("dx2", problem.jump.log2.dx),
        ("m1", problem.grid.axis(1).m),
        ("m2", problem.grid.axis(2).m),
        ("s_max", problem.grid.axis(1).s_max),
    ]
    lines = ["key,value"] + [f"{k},{_fmt(float(v))}" for k, v in entries]
    _write(out_dir, "jumpdiag.csv", "\n".join(lines) + "\n", cfg.verbose)
    print(f"kernel_tail_eps={_fmt(kernel.tail_mass)}")


def run_command(cfg: RunConfig, cfg_text: str | None = None) -> int:
    out_dir = Path(cfg.out)
    t0 = time.perf_counter()
    try:
        if cfg.command == "price":
            _cmd_price(cfg, out_dir)
        elif cfg.command == "converge":
            _cmd_converge(cfg, out_dir, cfg_text or serialize_config(cfg))
        elif cfg.command == "table":
            _cmd_table(cfg, out_dir)
        elif cfg.command == "eer":
            _cmd_eer(cfg, out_dir)
        elif cfg.command == "diagnose":
            _cmd_diagnose(cfg, out_dir)
        else:  # pragma: no cover - parse_config rejects unknown commands
            raise ConfigError(f"unknown command {cfg.command!r}")
    except (PenaltyConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if cfg.verbose:
        print(f"total_wall_time={time.perf_counter() - t0:.3f}s")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="merton2d",
        description="Batch pricing and convergence studies for American "
                    "two-asset options under Merton jump-diffusion.")
    parser.add_argument("--config", required=True, help="path to a key=value config file")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--jobs", type=int, default=None, help="parallel sweep jobs")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    if args.verbose:
        cfg = replace(cfg, verbose=True)
    return run_command(cfg, serialize_config(cfg))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
