"""Command-line front end: ``verify-kernel``, ``simulate`` and ``optimize``.

Configuration is a flat ``key=value`` file (``#`` starts a comment) merged
with ``--key value`` flags, flags winning.  Every run first writes
``manifest.cfg`` with the fully resolved configuration; feeding that file back
with ``--config`` reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import checks
from .control import ControlTrajectory, OptimizerConfig, optimize, preset
from .discretization import SpaceTimeGrid, sample_paths
from .kernel import CompositeMedium
from .linear import InitialCondition, solve_linear, write_paths_csv, write_stats_csv
from .picard import CoefficientSpec, PicardNonConvergence, euler_oracle, picard_solve

OUT_ENV = "COMPOSITE_SPDE_OUT"
COMMANDS = ("verify-kernel", "simulate", "optimize")
SOLVERS = ("linear", "picard", "euler-oracle")
PRESETS = ("temp-control", "heat-storage")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    command: str = "verify-kernel"
    # medium (simulate / verify-kernel)
    a1: float = 1.0
    a2: float = 4.0
    rho1: float = 1.0
    rho2: float = 1.0
    # grid
    x_min: float = -4.0
    x_max: float = 4.0
    nx: int = 81
    T: float = 1.0
    nt: int = 50
    # Monte Carlo
    n_paths: int = 1000
    seed: int = 12345
    # state equation: b = b_slope y + b_const, sigma = s_slope y + sigma0
    solver: str = "linear"
    sigma0: float = 0.5
    b_slope: float = 0.0
    b_const: float = 0.0
    s_slope: float = 0.0
    ic: str = "zero"
    ic_value: float = 1.0
    ic_center: float = 0.0
    ic_width: float = 0.5
    picard_tol: float = 1e-6
    picard_max_iter: int = 25
    convolution: str = "semigroup"
    write_paths: bool = False
    # control
    preset: str = "temp-control"
    theta: float = 1.0
    gamma: float = 1.0
    gamma1: float = 1.0
    gamma2: float = 1.0
    gamma3: float = 1.0
    u_min: float = 0.1
    u_max: float = 2.0
    u0: float = 0.8
    cost_lo: float = -1.0
    cost_hi: float = 1.0
    eta0: float = 0.1
    armijo: float = 1e-4
    gtol: float = 1e-4
    max_iter: int = 100
    constant_control: bool = False
    out_dir: str = ""

    def validate(self) -> None:
        def positive(*keys):
            for k in keys:
                v = getattr(self, k)
                if not (np.isfinite(v) and v > 0):
                    raise ConfigError(k, f"must be positive, got {v!r}")

        def choice(key, options):
            if getattr(self, key) not in options:
                raise ConfigError(key, f"must be one of {', '.join(options)}")

        choice("command", COMMANDS)
        choice("solver", SOLVERS)
        choice("preset", PRESETS)
        choice("ic", ("zero", "constant", "bump"))
        choice("convolution", ("semigroup", "direct"))
        positive("a1", "a2", "rho1", "rho2", "T", "ic_width", "picard_tol", "eta0", "armijo", "gtol")
        for k in ("sigma0", "b_slope", "b_const", "s_slope", "ic_value", "ic_center", "theta", "gamma",
                  "gamma1", "gamma2", "gamma3", "u_min", "u_max", "u0", "cost_lo", "cost_hi", "x_min", "x_max"):
            if not np.isfinite(getattr(self, k)):
                raise ConfigError(k, "must be finite")
        if self.nx < 3:
            raise ConfigError("nx", "must be at least 3")
        for k in ("nt", "n_paths", "picard_max_iter", "max_iter"):
            if getattr(self, k) < 1:
                raise ConfigError(k, "must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if not self.x_min < 0:
            raise ConfigError("x_min", "must be negative")
        if not self.x_max > 0:
            raise ConfigError("x_max", "must be positive")
        try:
            self.grid()
        except ValueError as exc:
            raise ConfigError("nx", str(exc)) from None
        if self.u_min > self.u_max:
            raise ConfigError("u_min", "must not exceed u_max")
        if self.command == "optimize" and self.u_min <= 0:
            raise ConfigError("u_min", "the control law needs a1 = u > 0")
        if not self.u_min <= self.u0 <= self.u_max:
            raise ConfigError("u0", "must lie in [u_min, u_max]")
        if not self.cost_lo < self.cost_hi:
            raise ConfigError("cost_lo", "must be below cost_hi")

    def medium(self) -> CompositeMedium:
        return CompositeMedium(self.a1, self.a2, self.rho1, self.rho2)

    def grid(self) -> SpaceTimeGrid:
        return SpaceTimeGrid(self.x_min, self.x_max, self.nx, self.T, self.nt)

    def initial_condition(self) -> InitialCondition:
        if self.ic == "zero":
            return InitialCondition.zero()
        if self.ic == "constant":
            return InitialCondition.constant(self.ic_value)
        return InitialCondition.gaussian_bump(self.ic_value, self.ic_center, self.ic_width)

    def coefficients(self) -> CoefficientSpec:
        return CoefficientSpec.affine(self.b_slope, self.b_const, self.s_slope, self.sigma0)


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
DEFAULTS = RunConfig()


def _convert(key: str, raw: str):
    kind = FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {kind}") from None


def parse_text(text: str) -> dict:
    """Flat ``key=value`` pairs; whitespace-separated pairs on one line are allowed."""
    values = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        for token in line.split():
            if "=" not in token:
                raise ConfigError(token, "expected key=value")
            key, raw = token.split("=", 1)
            if key not in FIELD_TYPES:
                raise ConfigError(key, "unknown key")
            values[key] = _convert(key, raw)
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="composite-spde",
        description="Stochastic heat flow in a two-material medium and optimal control of its diffusivity.",
    )
    parser.add_argument("positional_command", nargs="?", metavar="command",
                        help=f"one of {', '.join(COMMANDS)}")
    parser.add_argument("--config", help="flat key=value file; flags override it")
    for f in fields(RunConfig):
        default = getattr(DEFAULTS, f.name)
        help_text = f"(default: {default!r})"
        if f.name == "out_dir":
            help_text = f"output directory (default: ${OUT_ENV} or ./runs)"
        parser.add_argument(f"--{f.name}", dest=f.name, default=None, help=help_text)
    return parser


def parse_config(argv) -> tuple[RunConfig, str]:
    """Resolve defaults < config file < flags; returns the config and the origin of ``out_dir``."""
    args, extra = build_parser().parse_known_args(argv)
    if extra:
        raise ConfigError(extra[0].lstrip("-").split("=", 1)[0], "unknown option")
    values = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
        values.update(parse_text(text))
    if args.positional_command:
        values["command"] = args.positional_command
    for f in fields(RunConfig):
        raw = getattr(args, f.name)
        if raw is not None:
            values[f.name] = _convert(f.name, raw)
    cfg = dataclasses.replace(DEFAULTS, **values)
    origin = "explicit"
    if not cfg.out_dir:
        env = os.environ.get(OUT_ENV)
        cfg.out_dir, origin = (env, "env") if env else ("runs", "default")
    cfg.validate()
    return cfg, origin


def write_manifest(cfg: RunConfig, origin: str, path: Path) -> None:
    lines = [f"{f.name}={_format(getattr(cfg, f.name))}" for f in fields(RunConfig)]
    derived = [f"# out_dir_source={origin}"]
    if cfg.command != "optimize":
        derived.append(f"# lambda={cfg.medium().lam!r}")
    path.write_text("\n".join(lines + derived) + "\n")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def cmd_verify_kernel(cfg: RunConfig, out: Path) -> int:
    media = [cfg.medium()] + [m for m in checks.DEFAULT_MEDIA if m != cfg.medium()]
    rows = checks.run_checks(media)
    checks.write_checks_csv(rows, out / "checks.csv")
    failed = [r for r in rows if not r.passed]
    for r in failed:
        print(f"FAIL {r.check_name} [{r.medium_id}] error={r.max_abs_error:.3e} tol={r.tolerance:.1e}", file=sys.stderr)
    return 0 if not failed else 1


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    grid = cfg.grid()
    medium = cfg.medium()
    ic = cfg.initial_condition()
    paths = sample_paths(cfg.seed, grid, cfg.n_paths)
    if cfg.solver == "linear":
        if cfg.b_slope or cfg.b_const or cfg.s_slope:
            raise ConfigError("solver", "linear needs b_slope = b_const = s_slope = 0")
        field_ = solve_linear(medium, ic, cfg.sigma0, grid, paths)
    elif cfg.solver == "euler-oracle":
        field_ = euler_oracle(medium, cfg.coefficients(), ic, grid, paths)
    else:
        try:
            field_, diag = picard_solve(medium, cfg.coefficients(), ic, grid, paths, cfg.picard_tol,
                                        cfg.picard_max_iter, convolution=cfg.convolution)
        except PicardNonConvergence as exc:
            exc.diagnostics.to_csv(out / "picard.csv")
            print(str(exc), file=sys.stderr)
            return 1
        diag.to_csv(out / "picard.csv")
    write_stats_csv(field_, out / "stats.csv")
    if cfg.write_paths:
        write_paths_csv(field_, out / "paths.csv")
    return 0


def cmd_optimize(cfg: RunConfig, out: Path) -> int:
    grid = cfg.grid()
    setup = preset(cfg.preset, sigma0=cfg.sigma0, theta=cfg.theta, gamma=cfg.gamma, gamma1=cfg.gamma1,
                   gamma2=cfg.gamma2, gamma3=cfg.gamma3, u_min=cfg.u_min, u_max=cfg.u_max,
                   domain=(cfg.cost_lo, cfg.cost_hi))
    paths = sample_paths(cfg.seed, grid, cfg.n_paths)
    u0 = ControlTrajectory.constant(cfg.u0, grid.nt, cfg.u_min, cfg.u_max)
    opt_cfg = OptimizerConfig(eta0=cfg.eta0, armijo=cfg.armijo, gtol=cfg.gtol, max_iter=cfg.max_iter,
                              constant=cfg.constant_control)
    result = optimize(setup.law, setup.cost, u0, setup.coeffs, cfg.initial_condition(), grid, paths, opt_cfg)
    result.trace_to_csv(out / "trace.csv")
    result.u.to_csv(out / "control.csv", grid)
    (out / "status.txt").write_text(f"status={result.status}\niterations={len(result.trace)}\n")
    return 0


def run(cfg: RunConfig, origin: str = "explicit") -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg, origin, out / "manifest.cfg")
    handler = {"verify-kernel": cmd_verify_kernel, "simulate": cmd_simulate, "optimize": cmd_optimize}[cfg.command]
    return handler(cfg, out)


def main(argv=None) -> int:
    try:
        cfg, origin = parse_config(sys.argv[1:] if argv is None else argv)
        return run(cfg, origin)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
