"""Command-line experiment runner.

``carleman-lab <command> --config <path> [--out <dir>] [--seed <u64>]``

Exit status is 0 when every check passes, 1 when a check fails and 2 on
configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .carleman import (
    RatioSweep,
    bump_family,
    carleman_ratio,
    conjugation_residual,
    shifted_bound_check,
    subelliptic_ratio,
)
from .errors import CarlemanLabError, ConfigError, DomainError
from .params import ProblemParams
from .phase_symbols import BoundKind, SamplingSpec, verify_symbol_bounds
from .spectral import Axis, Field, GridSpec, smooth_step
from .ucp import ForwardProblem, solve_forward, solve_forward_array, ucp_experiment

__all__ = ["BetaSweep", "RunConfig", "parse_config", "run_command", "main", "COMMANDS"]

log = logging.getLogger("carleman_lab")

COMMANDS = ("verify-symbols", "subelliptic", "carleman-sweep", "solve-forward", "ucp-demo", "all")
PARAM_KEYS = tuple(f.name for f in dataclasses.fields(ProblemParams))
DEFAULT_GRID = {
    "t": 16,
    "x": 16,
    "z": 16,
    "carleman_xn": 128,
    "conj_x": 32,
    "forward_y": 1024,
    "forward_t": 64,
    "ucp_x": 1024,
}
U64 = 2 ** 64


@dataclass(frozen=True)
class BetaSweep:
    start: float
    stop: float
    count: int
    log: bool = True

    def __post_init__(self):
        if not (isinstance(self.count, int) and self.count >= 1):
            raise ConfigError(f"beta sweep count={self.count!r} must be a positive integer")
        if not (self.start >= 1 and self.stop >= self.start):
            raise ConfigError(f"beta sweep needs 1 <= start <= stop, got {self.start}, {self.stop}")

    def values(self) -> list:
        if self.count == 1:
            return [float(self.start)]
        if self.log:
            return [float(v) for v in np.geomspace(self.start, self.stop, self.count)]
        return [float(v) for v in np.linspace(self.start, self.stop, self.count)]

    @classmethod
    def from_dict(cls, data, name: str) -> "BetaSweep":
        if not isinstance(data, dict):
            raise ConfigError(f"{name} must be an object")
        unknown = set(data) - {"start", "stop", "count", "log"}
        if unknown:
            raise ConfigError(f"{name}: unknown field(s) {sorted(unknown)}")
        try:
            return cls(float(data["start"]), float(data["stop"]), data["count"],
                       bool(data.get("log", True)))
        except KeyError as exc:
            raise ConfigError(f"{name}: missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{name}: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; problem scalars sit at the top level in JSON."""

    params: ProblemParams = field(default_factory=ProblemParams)
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    beta: BetaSweep = BetaSweep(20.0, 160.0, 4)
    ucp_beta: BetaSweep = BetaSweep(50.0, 400.0, 4)
    samples: int = 10_000
    family_size: int = 10
    carleman_fields: int = 5
    seed: int = 0
    out_dir: str = "out"

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        allowed = set(PARAM_KEYS) | {f.name for f in dataclasses.fields(cls)} - {"params"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown config field(s) {unknown}")
        for key in PARAM_KEYS:
            if key in data and (isinstance(data[key], bool)
                                or not isinstance(data[key], (int, float))):
                raise ConfigError(f"{key} must be a number")
        params = ProblemParams(**{k: data[k] for k in PARAM_KEYS if k in data})

        grid = dict(DEFAULT_GRID)
        raw_grid = data.get("grid", {})
        if not isinstance(raw_grid, dict):
            raise ConfigError("grid must be an object")
        for key, value in raw_grid.items():
            if key not in DEFAULT_GRID:
                raise ConfigError(f"grid: unknown axis {key!r}")
            if isinstance(value, bool) or not isinstance(value, int) or value < 2 or value & (value - 1):
                raise ConfigError(f"grid.{key}={value!r} must be a power of two >= 2")
            grid[key] = value

        def count(name, default, minimum=1):
            value = data.get(name, default)
            if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
                raise ConfigError(f"{name}={value!r} must be an integer >= {minimum}")
            return value

        seed = count("seed", 0, 0)
        if seed >= U64:
            raise ConfigError(f"seed={seed} does not fit in 64 bits")
        out_dir = data.get("out_dir", "out")
        if not isinstance(out_dir, str) or not out_dir:
            raise ConfigError("out_dir must be a non-empty string")
        beta = BetaSweep.from_dict(data["beta"], "beta") if "beta" in data else cls.beta
        ucp_beta = (BetaSweep.from_dict(data["ucp_beta"], "ucp_beta")
                    if "ucp_beta" in data else cls.ucp_beta)
        return cls(params, grid, beta, ucp_beta, count("samples", 10_000),
                   count("family_size", 10), count("carleman_fields", 5), seed, out_dir)

    def to_dict(self) -> dict:
        out = self.params.to_dict()
        out.update(
            grid=dict(self.grid),
            beta=dataclasses.asdict(self.beta),
            ucp_beta=dataclasses.asdict(self.ucp_beta),
            samples=self.samples,
            family_size=self.family_size,
            carleman_fields=self.carleman_fields,
            seed=self.seed,
            out_dir=self.out_dir,
        )
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        """Hash of everything that affects results; the output location is left out."""
        body = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def parse_config(path) -> RunConfig:
    """Read a JSON config file; missing fields take their defaults.

    Raises
    ------
    ConfigError
        On unreadable files, malformed JSON or schema violations.
    DomainError
        If a problem scalar is out of range.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return RunConfig.from_dict(data)


# ----------------------------------------------------------------- output


class Writer:
    """Writes artifacts stamped with the config hash and seed."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.root = Path(config.out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.stamp = {"config_hash": config.config_hash(), "seed": config.seed}
        self.manifest = {}

    def _comment(self):
        return f"config_hash={self.stamp['config_hash']} seed={self.stamp['seed']}"

    def csv(self, name: str, text: str, columns):
        (self.root / name).write_text(text)
        self.manifest[name] = list(columns)

    def csv_rows(self, name: str, columns, rows):
        lines = [f"# {self._comment()}", ",".join(columns)]
        lines += [",".join(repr(float(v)) if not isinstance(v, str) else v for v in row)
                  for row in rows]
        self.csv(name, "\n".join(lines) + "\n", columns)

    def json(self, name: str, payload: dict):
        body = {**payload, **self.stamp}
        (self.root / name).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        self.manifest[name] = sorted(body)

    def close(self):
        self.json("manifest.json", {"files": self.manifest})


# ----------------------------------------------------------------- suites


def suite_verify_symbols(cfg: RunConfig, out: Writer) -> bool:
    ok = True
    for kind in BoundKind:
        report = verify_symbol_bounds(kind, cfg.params,
                                      SamplingSpec(count=cfg.samples, seed=cfg.seed))
        out.json(f"bounds_{kind.value}.json", report.to_dict())
        log.info("%s worst ratio %.4g pass=%s", kind.value, report.worst_ratio, report.passed)
        ok &= report.passed
    return ok


def suite_subelliptic(cfg: RunConfig, out: Writer) -> bool:
    g = cfg.grid
    grids = []
    for factor in (1, 2):
        grids.append(GridSpec.build(t=(-1.0, 3.0, g["t"] * factor),
                                    x=[(-1.0, 2.0, g["x"] * factor)] * cfg.params.n,
                                    z=(-1.0, 2.0, g["z"] * factor)))
    sups = []
    for grid in grids:
        family = bump_family(grid, cfg.family_size, seed=cfg.seed, widths=(0.3, 0.6),
                             z_widths=(0.3, 0.6))
        sweep = RatioSweep()
        for idx, u in enumerate(family):
            entry = subelliptic_ratio(u, cfg.params)
            sweep.append(dataclasses.replace(entry, param=idx))
        size = grid.axis("t").count
        out.csv(f"subelliptic_{size}.csv", sweep.to_csv(out._comment()),
                ["param", "lhs", "rhs", "ratio"])
        sups.append(sweep.sup_ratio)
    variation = abs(sups[1] - sups[0]) / sups[0]
    passed = all(math.isfinite(s) for s in sups) and variation <= 0.25
    out.json("subelliptic.json", {"sup_ratio": sups, "variation": variation, "pass": passed})
    log.info("subelliptic sup ratios %s variation %.3g", sups, variation)
    return passed


def carleman_grid(params: ProblemParams, xn_count: int, t_count: int = 16,
                  xp_count: int = 16) -> GridSpec:
    """Grid for the weighted sweep: bumps sit below the origin in ``x_n``."""
    axes = [(-0.5, 1.0, xp_count)] * (params.n - 1) + [(-0.85, 1.0, xn_count)]
    return GridSpec.build(t=(-1.0, 3.0, t_count), x=axes)


def carleman_fields(params: ProblemParams, grid: GridSpec, count: int, seed: int) -> list:
    centre = [0.0] * (params.n - 1) + [-0.3]
    return bump_family(grid, count, seed=seed, centre=centre, centre_spread=0.05,
                       widths=(0.25, 0.35))


def conjugation_check(params: ProblemParams, coarse: int, betas=(0.0, 5.0, 10.0)) -> dict:
    residuals = []
    for count in (coarse, 2 * coarse):
        grid = GridSpec.build(t=(-1.0, 3.0, 32), x=[(-1.0, 2.0, count)] * params.n)
        centre = [0.0] * (params.n - 1) + [-0.2]
        w = bump_family(grid, 1, centre=centre, centre_spread=0.0, widths=(0.5, 0.5))[0]
        residuals.append([conjugation_residual(params, w, b) for b in betas])
    decreasing = all(f < c or f <= 1e-10 for c, f in zip(*residuals))
    small = all(f <= 5e-2 for f in residuals[1])
    return {"beta": list(betas), "coarse": residuals[0], "fine": residuals[1],
            "pass": bool(decreasing and small)}


def shifted_check(betas=(1e2, 1e3, 1e4)) -> tuple:
    grid = GridSpec.build(z=(-4.0, 8.0, 256))
    z = grid.coordinate("z")
    g = Field(grid, np.exp(-z ** 2).astype(complex))
    report = shifted_bound_check(g, betas)
    slopes = {f"{j}{k}": s for (j, k), s in report.upper_slopes().items()}
    passed = max(slopes.values()) <= -0.4 and report.min_lower() >= 0.5
    return report, {"upper_slopes": slopes, "min_lower": report.min_lower(), "pass": passed}


def suite_carleman(cfg: RunConfig, out: Writer) -> bool:
    params = cfg.params
    grid = carleman_grid(params, cfg.grid["carleman_xn"])
    betas = cfg.beta.values()
    slopes = []
    for idx, v in enumerate(carleman_fields(params, grid, cfg.carleman_fields, cfg.seed)):
        sweep = RatioSweep.from_entries(carleman_ratio(v, b, params) for b in betas)
        out.csv(f"carleman_field{idx}.csv", sweep.to_csv(out._comment()),
                ["param", "lhs", "rhs", "ratio"])
        slopes.append(sweep.slope() if len(betas) > 1 else 0.0)
    sweep_ok = max(slopes) <= 0.1
    out.json("carleman_sweep.json", {"slopes": slopes, "pass": sweep_ok})

    conj = conjugation_check(params, cfg.grid["conj_x"])
    out.json("conjugation.json", conj)

    report, shifted = shifted_check()
    for (j, k), sweep in report.upper.items():
        out.csv(f"shifted_{j}{k}_upper.csv", sweep.to_csv(out._comment()),
                ["param", "lhs", "rhs", "ratio"])
        out.csv(f"shifted_{j}{k}_lower.csv", report.lower[(j, k)].to_csv(out._comment()),
                ["param", "lhs", "rhs", "ratio"])
    out.json("shifted_bounds.json", shifted)
    log.info("carleman slopes %s conjugation %s shifted %s", slopes, conj["pass"], shifted["pass"])
    return sweep_ok and conj["pass"] and shifted["pass"]


def mms_problem(params: ProblemParams, count: int) -> tuple:
    """One-dimensional manufactured solution ``t^2 sin(pi y / l)`` on ``[0, l]``."""
    p = params.replace(n=1)
    k = math.pi / p.l
    a = p.alpha

    def exact(t, y):
        return t ** 2 * np.sin(k * y)

    def forcing(t, y):
        return (2.0 * t ** (2.0 - a) / math.gamma(3.0 - a) + k ** 2 * t ** 2) * np.sin(k * y)

    return ForwardProblem(p, (Axis("y1", 0.0, p.l, count),), forcing=forcing), exact


def mms_convergence(params: ProblemParams, count: int, steps=(8, 16, 32, 64)) -> dict:
    problem, exact = mms_problem(params, count)
    T = problem.params.T
    errors = []
    for n_steps in steps:
        _, values = solve_forward_array(problem, T / n_steps, n_steps)
        errors.append(float(np.max(np.abs(values[-1] - exact(T, problem.nodes()[0])))))
    dts = [T / s for s in steps]
    order = float(np.polyfit(np.log(dts), np.log(errors), 1)[0])
    target = 2.0 - params.alpha
    return {"dt": dts, "max_error": errors, "order": order, "target_order": target,
            "pass": abs(order - target) <= 0.2}


def suite_solve_forward(cfg: RunConfig, out: Writer) -> bool:
    result = mms_convergence(cfg.params, cfg.grid["forward_y"])
    out.csv_rows("forward_mms.csv", ["dt", "max_error"], zip(result["dt"], result["max_error"]))
    out.json("forward_mms.json", result)
    log.info("forward order %.3f (target %.3f)", result["order"], result["target_order"])
    return result["pass"]


def _bump(s):
    return smooth_step(1.5 * (1.0 + s)) * smooth_step(1.5 * (1.0 - s))


def ucp_field(params: ProblemParams, t_count: int, y_count: int, y_star: float = 0.02) -> Field:
    """Forward solution under interior forcing, cut off to vanish for ``y <= y_star``."""
    p = params.replace(n=1)

    def forcing(t, y):
        return _bump((t - 0.3 * p.T) / (0.25 * p.T)) * _bump((y - 0.5 * p.l) / (0.2 * p.l))

    problem = ForwardProblem(p, (Axis("y1", 0.0, p.l, y_count),), forcing=forcing)
    u = solve_forward(problem, p.T / t_count)
    y = u.grid.coordinate("y1")
    cut = smooth_step((y - y_star) / 0.04) * (1.0 - smooth_step((y - 0.2) / 0.1))
    return u * cut


def ucp_grid(params: ProblemParams, t_count: int, x_count: int) -> GridSpec:
    return GridSpec((Axis("t", -params.T, 2.0 * params.T, 2 * t_count),
                     Axis("x1", -0.25, 0.75, x_count)))


def suite_ucp(cfg: RunConfig, out: Writer) -> bool:
    params = cfg.params.replace(n=1)
    g = cfg.grid
    u = ucp_field(params, g["forward_t"], g["forward_y"])
    report = ucp_experiment(params, u, cfg.ucp_beta.values(),
                            ucp_grid(params, g["forward_t"], g["ucp_x"]))
    out.csv("ucp.csv", report.to_csv(out._comment()), ["beta", "interior_mass", "bound", "ratio"])
    out.json("ucp.json", {**report.summary(), "n": 1})
    log.info("ucp exponent %s leak %.3g", report.fitted_exponent, report.commutator_leak)
    return report.passed


SUITES = {
    "verify-symbols": suite_verify_symbols,
    "subelliptic": suite_subelliptic,
    "carleman-sweep": suite_carleman,
    "solve-forward": suite_solve_forward,
    "ucp-demo": suite_ucp,
}


def run_command(cmd: str, config: RunConfig) -> int:
    """Run one suite (or all) and return the exit status."""
    if cmd not in COMMANDS:
        log.error("unknown command %r; choose from %s", cmd, ", ".join(COMMANDS))
        return 2
    try:
        out = Writer(config)
    except OSError as exc:
        log.error("cannot create output directory: %s", exc)
        return 2
    names = list(SUITES) if cmd == "all" else [cmd]
    results = {}
    try:
        for name in names:
            results[name] = bool(SUITES[name](config, out))
        if cmd == "all":
            out.json("summary.json", {"results": results, "pass": all(results.values())})
        out.close()
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 2
    return 0 if all(results.values()) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carleman-lab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides out_dir)")
    parser.add_argument("--seed", type=int, help="64-bit seed (overrides seed)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        config = parse_config(args.config)
        overrides = {}
        if args.out:
            overrides["out_dir"] = args.out
        if args.seed is not None:
            if not 0 <= args.seed < U64:
                raise ConfigError(f"seed={args.seed} does not fit in 64 bits")
            overrides["seed"] = args.seed
        config = dataclasses.replace(config, **overrides)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run_command(args.command, config)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CarlemanLabError as exc:
        print(f"check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
