"""Command-line runner: config parsing, orchestration, deterministic output.

Config format is line based:

    [problem]
    p = 1
    q = -0.5
    domain = torus        # torus | disk | rectangle
    tau1 = 6.283185307179586
    tau2 = 6.283185307179586
    upper = (3.14, 3.14)  # semicolon-separated (x,y) pairs
    lower =

    [grid]
    n1 = 256
    n2 = 256

    [solver]
    tol_outer = 1e-8

    [output]
    directory = out
    fields = true
    diagnostics = flux

Unknown keys are rejected with their line number.  Every run writes
report.json (config echo, content hash, iteration history, identity
reports; no wall-clock data) and, when enabled, fields_u.csv/fields_v.csv
(columns x,y,value; row-major; 17 significant digits) plus radial profiles
profile_*.csv (columns r,value).  Outputs are bit-identical across repeat
runs of the same config.

Exit codes: 0 converged and all identities pass; 2 converged with identity
failures; 3 solver failure; 4 infeasible configuration; 1 usage or config
error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .core import (CouplingParams, DomainSpec, VortexConfiguration,
                   build_coupling, require_indefinite, threshold_area)
from .diagnostics import (flux_identities, make_report, max_principle_check,
                          quadrature, threshold_sweep)
from .errors import (ConfigError, DiagnosticOverflow, Infeasible,
                     LineSearchStalled, MaxIterExceeded, Stalled)
from .fullplane import (ContinuationSchedule, decay_fit, domain_continuation,
                        circle_max_profile, lambda_estimate, phi_profile,
                        single_equation_solve)
from .grids import Grid
from .variational import (SolverSettings, make_bounded_problem,
                          nested_minimize, recover_uv, solve_torus)

LN2 = math.log(2.0)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IDENTITY = 2
EXIT_SOLVER = 3
EXIT_INFEASIBLE = 4

_SOLVER_FAILURES = (MaxIterExceeded, LineSearchStalled, Stalled,
                    DiagnosticOverflow)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    p: float = 1.0
    q: float = -0.5
    domain: str = "torus"
    tau1: float = 2.0 * math.pi
    tau2: float = 2.0 * math.pi
    R: float = 8.0
    Lx: float = 8.0
    Ly: float = 8.0
    upper: tuple = ()
    lower: tuple = ()
    n1: int = 128
    n2: int = 128
    tol_outer: float = 1e-8
    tol_inner: float | None = None
    max_outer: int = 5000
    max_inner: int = 60
    epsilon: float | None = None
    window: tuple = (3.0, 6.0)
    factors: tuple = (0.5, 0.9, 0.99, 1.01, 1.1, 2.0)
    directory: str = "out"
    fields: bool = True
    profiles: bool = True
    diagnostics: tuple = ("flux",)
    quiet: bool = False
    raw_text: str = ""

    def params(self) -> CouplingParams:
        return CouplingParams(self.p, self.q)

    def vortices(self) -> VortexConfiguration:
        return VortexConfiguration(self.upper, self.lower)

    def settings(self) -> SolverSettings:
        return SolverSettings(tol_outer=self.tol_outer,
                              tol_inner=self.tol_inner,
                              max_outer=self.max_outer,
                              max_inner=self.max_inner)

    def domain_spec(self) -> DomainSpec:
        if self.domain == "torus":
            return DomainSpec("torus", tau1=self.tau1, tau2=self.tau2)
        if self.domain == "disk":
            return DomainSpec("disk", R=self.R)
        if self.domain == "rectangle":
            return DomainSpec("rectangle", Lx=self.Lx, Ly=self.Ly)
        raise ConfigError(f"unknown domain kind {self.domain!r}")


def _parse_points(text: str, lineno: int) -> tuple:
    text = text.strip()
    if not text:
        return ()
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if not (chunk.startswith("(") and chunk.endswith(")")):
            raise ConfigError(f"line {lineno}: vortex point {chunk!r} is not "
                              "of the form (x,y)")
        body = chunk[1:-1].split(",")
        if len(body) != 2:
            raise ConfigError(f"line {lineno}: vortex point {chunk!r} needs "
                              "exactly two coordinates")
        try:
            pts.append((float(body[0]), float(body[1])))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return tuple(pts)


_SCHEMA = {
    "problem": {"p": float, "q": float, "domain": str, "tau1": float,
                "tau2": float, "R": float, "Lx": float, "Ly": float,
                "upper": "points", "lower": "points"},
    "grid": {"n1": int, "n2": int},
    "solver": {"tol_outer": float, "tol_inner": float, "max_outer": int,
               "max_inner": int, "epsilon": float,
               "window": "pair", "factors": "floats"},
    "output": {"directory": str, "fields": "bool", "profiles": "bool",
               "diagnostics": "names"},
}


def _coerce(kind, value: str, lineno: int):
    value = value.strip()
    try:
        if kind is float:
            return float(value)
        if kind is int:
            return int(value)
        if kind is str:
            return value
        if kind == "bool":
            if value.lower() in ("true", "yes", "1"):
                return True
            if value.lower() in ("false", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if kind == "points":
            return _parse_points(value, lineno)
        if kind == "pair":
            parts = [float(s) for s in value.split(";")]
            if len(parts) != 2:
                raise ValueError("expected two values separated by ';'")
            return tuple(parts)
        if kind == "floats":
            return tuple(float(s) for s in value.split(";") if s.strip())
        if kind == "names":
            return tuple(s.strip() for s in value.split(",") if s.strip())
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: {exc}") from None
    raise ConfigError(f"line {lineno}: unhandled value kind {kind!r}")


def parse_config(text: str) -> RunConfig:
    """Parse and semantically validate a config; first error wins."""
    cfg = RunConfig(raw_text=text)
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section "
                                  f"[{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in "
                              f"[{section}]")
        setattr(cfg, key, _coerce(_SCHEMA[section][key], value, lineno))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    params = cfg.params()                     # raises on p <= 0, q = 0
    require_indefinite(build_coupling(params))  # rejects detK >= 0
    spec = cfg.domain_spec()
    if cfg.n1 < 8 or cfg.n2 < 8:
        raise ConfigError("grid must be at least 8x8")
    if cfg.domain == "disk" and cfg.n1 != cfg.n2:
        raise ConfigError("disk grids are square: n1 must equal n2")
    grid = spec.make_grid(cfg.n1, cfg.n2)
    cfg.vortices().validate_inside(grid)
    if cfg.domain == "torus":
        thr = threshold_area(params, cfg.vortices())
        if spec.area <= thr and not cfg.quiet:
            print(f"warning: cell area {spec.area:g} is at or below the "
                  f"solvability threshold {thr:g}", file=sys.stderr)


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply repeatable --override section.key=value pairs."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, key = key.split(".", 1)
            if section not in _SCHEMA or key not in _SCHEMA[section]:
                raise ConfigError(f"unknown override key {section}.{key}")
            kind = _SCHEMA[section][key]
        else:
            kind = None
            for sec, keys in _SCHEMA.items():
                if key in keys:
                    kind = keys[key]
                    break
            if kind is None:
                raise ConfigError(f"unknown override key {key!r}")
        setattr(cfg, key, _coerce(kind, value, 0))
    _validate(cfg)
    return cfg


# ---------------------------------------------------------------------------
# deterministic output
# ---------------------------------------------------------------------------

def write_field_csv(path: str, values: np.ndarray, grid: Grid) -> None:
    xs, ys = grid.xs(), grid.ys()
    with open(path, "w") as f:
        f.write("x,y,value\n")
        for i in range(grid.n1):
            for j in range(grid.n2):
                f.write("%.17g,%.17g,%.17g\n" % (xs[i], ys[j], values[i, j]))


def read_field_csv(path: str):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    vals = data[:, 2].reshape(len(xs), len(ys))
    return xs, ys, vals


def write_profile_csv(path: str, pairs) -> None:
    with open(path, "w") as f:
        f.write("r,value\n")
        for r, val in pairs:
            f.write("%.17g,%.17g\n" % (r, val))


def _write_report(outdir: str, cfg: RunConfig, payload: dict) -> None:
    payload = dict(payload)
    payload["config"] = cfg.raw_text
    payload["config_sha256"] = hashlib.sha256(
        cfg.raw_text.encode()).hexdigest()
    with open(os.path.join(outdir, "report.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _identity_exit(converged: bool, reports) -> int:
    if not converged:
        return EXIT_SOLVER
    if all(r.passed for r in reports):
        return EXIT_OK
    return EXIT_IDENTITY


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _emit_fields(outdir: str, cfg: RunConfig, grid: Grid, u, v) -> None:
    if cfg.fields:
        write_field_csv(os.path.join(outdir, "fields_u.csv"), u, grid)
        if v is not None:
            write_field_csv(os.path.join(outdir, "fields_v.csv"), v, grid)


def cmd_solve_torus(cfg: RunConfig, outdir: str) -> int:
    params, vort = cfg.params(), cfg.vortices()
    problem, state, report = solve_torus(
        params, vort, cfg.tau1, cfg.tau2, cfg.n1, cfg.n2,
        epsilon=cfg.epsilon, settings=cfg.settings())
    u, v = recover_uv(problem, state)
    idents = flux_identities(u, v, problem.K, vort, problem.grid, params)
    _emit_fields(outdir, cfg, problem.grid, u, v)
    _write_report(outdir, cfg, {
        "subcommand": "solve-torus", "solve": report.to_dict(),
        "identities": [r.to_dict() for r in idents]})
    return _identity_exit(report.converged, idents)


def _solve_disk_common(cfg: RunConfig):
    params, vort = cfg.params(), cfg.vortices()
    grid = Grid.disk(cfg.R, cfg.n1)
    eps = cfg.epsilon
    if eps is None:
        eps = (4.0 * cfg.R / (cfg.n1 - 1)) ** 2  # (2h)^2
    problem = make_bounded_problem(params, vort, grid, eps)
    state, report = nested_minimize(problem, cfg.settings())
    u, v = recover_uv(problem, state)
    return problem, state, report, u, v


def _disk_identities(cfg: RunConfig, problem, u, v):
    idents = list(flux_identities(u, v, problem.K, cfg.vortices(),
                                  problem.grid, cfg.params(), tolerance=0.02))
    if "maxprinciple" in cfg.diagnostics:
        idents.append(max_principle_check(u, v, problem.grid))
    return idents


def cmd_solve_disk(cfg: RunConfig, outdir: str) -> int:
    problem, state, report, u, v = _solve_disk_common(cfg)
    idents = _disk_identities(cfg, problem, u, v)
    _emit_fields(outdir, cfg, problem.grid, u, v)
    _write_report(outdir, cfg, {
        "subcommand": "solve-disk", "solve": report.to_dict(),
        "identities": [r.to_dict() for r in idents]})
    return _identity_exit(report.converged, idents)


def cmd_solve_fullplane(cfg: RunConfig, outdir: str) -> int:
    params, vort = cfg.params(), cfg.vortices()
    schedule = ContinuationSchedule.default(n_finest=cfg.n1, R_finest=cfg.R)
    problem, state, report, indicators = domain_continuation(
        params, vort, schedule, cfg.settings())
    u, v = recover_uv(problem, state)
    grid = problem.grid
    idents = _disk_identities(cfg, problem, u, v)
    payload = {"subcommand": "solve-fullplane", "solve": report.to_dict(),
               "boundary_indicators": indicators,
               "identities": [r.to_dict() for r in idents]}
    if "decay" in cfg.diagnostics or cfg.profiles:
        radii = np.linspace(cfg.window[0], cfg.window[1], 16)
        K = problem.K
        pairs = phi_profile(u, v, grid, radii, K=K)
        fit = decay_fit(u, v, grid, cfg.window)
        payload["decay_fit"] = {
            "rate": fit.rate, "power": fit.power, "C": fit.C,
            "window": list(fit.window), "r2": fit.r2,
            "rate_plain": fit.rate_plain, "r2_plain": fit.r2_plain,
            "rate_gradient": fit.rate_gradient}
        if cfg.profiles:
            write_profile_csv(os.path.join(outdir, "profile_phi.csv"), pairs)
            ymax = circle_max_profile([u + LN2, v + LN2], grid, radii)
            write_profile_csv(os.path.join(outdir, "profile_decay.csv"),
                              zip(radii, ymax))
    _emit_fields(outdir, cfg, grid, u, v)
    _write_report(outdir, cfg, payload)
    return _identity_exit(report.converged, idents)


def cmd_solve_single(cfg: RunConfig, outdir: str) -> int:
    vort = cfg.vortices()
    merged = vort.merged()
    grid, w = single_equation_solve(merged, cfg.R, cfg.n1,
                                    epsilons=None)
    lam = lambda_estimate(w, grid, vort.Nplus)
    mass = quadrature(8.0 * (1.0 - np.exp(w)), grid)
    idents = [
        make_report("lambda-topological", 0.0, lam, 0.05, abs_tolerance=0.05),
        make_report("single-mass", 4.0 * math.pi * vort.Nplus, mass, 0.02,
                    abs_tolerance=1e-6),
    ]
    if cfg.fields:
        write_field_csv(os.path.join(outdir, "fields_u.csv"), w, grid)
    if cfg.profiles:
        xs = grid.xs()
        i0 = int(np.argmin(np.abs(xs)))
        j0 = int(np.argmin(np.abs(grid.ys())))
        write_profile_csv(os.path.join(outdir, "profile_ray.csv"),
                          zip(xs[i0:], w[i0:, j0]))
    _write_report(outdir, cfg, {
        "subcommand": "solve-single", "lambda": lam, "mass": mass,
        "identities": [r.to_dict() for r in idents]})
    return _identity_exit(True, idents)


def cmd_sweep_threshold(cfg: RunConfig, outdir: str) -> int:
    params, vort = cfg.params(), cfg.vortices()
    thr = threshold_area(params, vort)
    areas = [f * thr for f in cfg.factors]
    rows = threshold_sweep(params, vort, areas, settings=cfg.settings(),
                           n=min(cfg.n1, cfg.n2), epsilon=cfg.epsilon)
    # the empirical flip must sit exactly at the closed-form threshold
    flip_ok = all(row["feasible"] == (row["area"] > thr) for row in rows)
    all_feasible_converged = all(row["converged"] for row in rows
                                 if row["feasible"])
    with open(os.path.join(outdir, "sweep.csv"), "w") as f:
        f.write("area,feasible,converged,alpha,beta,"
                "alpha_error,beta_error\n")
        for row in rows:
            f.write("%.17g,%d,%s,%.17g,%.17g,%s,%s\n" % (
                row["area"], row["feasible"],
                "" if row["converged"] is None else int(row["converged"]),
                row["alpha"], row["beta"],
                "" if row["alpha_error"] is None else "%.17g" % row["alpha_error"],
                "" if row["beta_error"] is None else "%.17g" % row["beta_error"]))
    _write_report(outdir, cfg, {
        "subcommand": "sweep-threshold", "threshold_area": thr,
        "rows": rows, "flip_at_threshold": flip_ok,
        "feasible_rows_converged": all_feasible_converged})
    if not all_feasible_converged:
        return EXIT_SOLVER
    return EXIT_OK if flip_ok else EXIT_IDENTITY


def cmd_diagnose(cfg: RunConfig, outdir: str) -> int:
    """Recompute identity reports from previously written field CSVs."""
    path_u = os.path.join(outdir, "fields_u.csv")
    path_v = os.path.join(outdir, "fields_v.csv")
    if not os.path.exists(path_u):
        raise ConfigError(f"no fields_u.csv under {outdir}; run a solve first")
    _, _, u = read_field_csv(path_u)
    v = u
    if os.path.exists(path_v):
        _, _, v = read_field_csv(path_v)
    spec = cfg.domain_spec()
    grid = spec.make_grid(*u.shape)
    params, vort = cfg.params(), cfg.vortices()
    K = build_coupling(params)
    tol = 1e-6 if cfg.domain == "torus" else 0.02
    idents = list(flux_identities(u, v, K, vort, grid, params, tolerance=tol))
    if "maxprinciple" in cfg.diagnostics and cfg.domain != "torus":
        idents.append(max_principle_check(u, v, grid))
    _write_report(outdir, cfg, {
        "subcommand": "diagnose",
        "identities": [r.to_dict() for r in idents]})
    return _identity_exit(True, idents)


def cmd_selftest(cfg: RunConfig, outdir: str) -> int:
    """Fast built-in checks of the ground-state and bookkeeping layers."""
    checks = []

    def check(name, ok):
        checks.append({"name": name, "pass": bool(ok)})

    params = CouplingParams(1.0, -0.5)
    none = VortexConfiguration()
    problem, state, report = solve_torus(params, none, 2 * math.pi, 2 * math.pi,
                                         32, 32, coarsest=32)
    u, v = recover_uv(problem, state)
    check("torus-ground-state",
          report.converged and np.abs(u + LN2).max() < 1e-8
          and np.abs(v + LN2).max() < 1e-8)

    g = Grid.torus(2.0, 3.0, 16, 16)
    check("quadrature-constant",
          abs(quadrature(np.ones(g.shape), g) - 6.0) < 1e-12)

    grid1, w1 = single_equation_solve([], 4.0, 65)
    check("single-no-vortex", float(np.abs(w1).max()) == 0.0)
    check("lambda-zero-field", lambda_estimate(w1, grid1, 0) == 0.0)

    A = grid1.area
    const = np.full(grid1.shape, -LN2)
    lam = lambda_estimate(const, grid1, 0)
    check("lambda-constant", abs(lam - 4.0 / math.pi * A / 2.0) < 1e-12)

    from .fullplane import _quotient
    check("phi-zero-convention",
          float(_quotient(np.zeros(3))[0]) == 1.0)

    _write_report(outdir, cfg, {"subcommand": "selftest", "checks": checks})
    return EXIT_OK if all(c["pass"] for c in checks) else EXIT_IDENTITY


_COMMANDS = {
    "solve-torus": cmd_solve_torus,
    "solve-disk": cmd_solve_disk,
    "solve-fullplane": cmd_solve_fullplane,
    "solve-single": cmd_solve_single,
    "sweep-threshold": cmd_sweep_threshold,
    "diagnose": cmd_diagnose,
    "selftest": cmd_selftest,
}


def run(subcommand: str, cfg: RunConfig, outdir: str | None = None) -> int:
    if subcommand not in _COMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    outdir = outdir or cfg.directory
    os.makedirs(outdir, exist_ok=True)
    try:
        code = _COMMANDS[subcommand](cfg, outdir)
    except Infeasible as exc:
        if not cfg.quiet:
            print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _SOLVER_FAILURES as exc:
        if not cfg.quiet:
            print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if not cfg.quiet:
        print(f"{subcommand}: exit {code}")
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="bivortex",
        description="Indefinite two-layer vortex system solver")
    ap.add_argument("subcommand", choices=sorted(_COMMANDS))
    ap.add_argument("--config", help="path to the run configuration")
    ap.add_argument("--out", help="output directory (default from config)")
    ap.add_argument("--override", action="append", default=[],
                    metavar="KEY=VALUE", help="config override, repeatable")
    ap.add_argument("--quiet", action="store_true")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) and exc.code == 0 \
            else EXIT_USAGE
    try:
        if args.config:
            with open(args.config) as f:
                cfg = parse_config(f.read())
        else:
            cfg = RunConfig()
        cfg = apply_overrides(cfg, args.override)
        cfg.quiet = args.quiet
        return run(args.subcommand, cfg, outdir=args.out)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
