"""Run configuration: plain-text key=value sections parsed with configparser.

Sections: [impact] (family + parameters), [market] (mu/sigma or decay),
[problem] (c0, x0, s0, horizon), [solver], [sim], [compare], [check],
[plot], [output].  Every subcommand states which sections it needs; unknown
keys are rejected so typos fail loudly.  `RunConfig.resolved` holds the
fully-defaulted string mapping that goes into the run manifest, from which
the identical configuration can be rebuilt.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Optional

from .closed_form import MarketParams
from .errors import ConfigError
from .impact import ImpactModel, impact_from_config

_SECTION_KEYS = {
    "market": {"mu", "sigma", "decay"},
    "problem": {"c0", "x0", "s0", "horizon"},
    "solver": {"nt", "nx", "x_max", "y_max", "max_expansions", "refine"},
    "sim": {"n_paths", "n_steps", "seed", "strategy", "log_floor", "path_csv_cap"},
    "compare": {"strategies"},
    "check": {"draws", "seed", "grid_points"},
    "plot": {"x_min", "x_max", "points", "spacing"},
    "output": {"directory", "formats", "schedule_samples"},
}


@dataclass(frozen=True)
class ProblemSpec:
    c0: float
    x0: float
    s0: float
    horizon: float

    def __post_init__(self):
        if self.x0 < 0.0:
            raise ConfigError("problem.x0 must be non-negative")
        if self.s0 < 0.0:
            raise ConfigError("problem.s0 must be non-negative")
        if self.horizon <= 0.0:
            raise ConfigError("problem.horizon must be positive")


@dataclass(frozen=True)
class SolverSettings:
    nt: int = 400
    nx: int = 400
    x_max: Optional[float] = None
    y_max: Optional[float] = None
    max_expansions: int = 2
    refine: bool = True

    def __post_init__(self):
        if self.nt < 2 or self.nx < 2:
            raise ConfigError("solver grids need at least 2 cells per axis")
        if self.x_max is not None and self.x_max <= 0.0:
            raise ConfigError("solver.x_max must be positive")
        if self.y_max is not None and self.y_max <= 0.0:
            raise ConfigError("solver.y_max must be positive")
        if self.max_expansions < 0:
            raise ConfigError("solver.max_expansions must be non-negative")


@dataclass(frozen=True)
class SimSettings:
    n_paths: int = 10000
    n_steps: int = 1000
    seed: int = 0
    strategy: str = "twap"
    log_floor: float = -60.0
    path_csv_cap: int = 0

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ConfigError("sim.n_paths and sim.n_steps must be at least 1")
        if self.seed < 0:
            raise ConfigError("sim.seed must be non-negative")
        if self.path_csv_cap < 0:
            raise ConfigError("sim.path_csv_cap must be non-negative")


@dataclass(frozen=True)
class CheckSettings:
    draws: int = 1000
    seed: int = 0
    grid_points: int = 4001

    def __post_init__(self):
        if self.draws < 1:
            raise ConfigError("check.draws must be at least 1")
        if self.grid_points < 2:
            raise ConfigError("check.grid_points must be at least 2")


@dataclass(frozen=True)
class PlotSettings:
    x_min: float = 0.0
    x_max: Optional[float] = None
    points: int = 512
    spacing: str = "linear"

    def __post_init__(self):
        if self.points < 2:
            raise ConfigError("plot.points must be at least 2")
        if self.spacing not in ("linear", "log"):
            raise ConfigError("plot.spacing must be 'linear' or 'log'")
        if self.spacing == "log" and self.x_min <= 0.0:
            raise ConfigError("log spacing needs plot.x_min > 0")
        if self.x_min < 0.0:
            raise ConfigError("plot.x_min must be non-negative")


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "out"
    formats: tuple = ("json", "csv")
    schedule_samples: int = 200

    def __post_init__(self):
        bad = set(self.formats) - {"json", "csv"}
        if bad:
            raise ConfigError(f"unknown output format(s): {sorted(bad)}")
        if self.schedule_samples < 1:
            raise ConfigError("output.schedule_samples must be at least 1")


@dataclass
class RunConfig:
    model: Optional[ImpactModel]
    market: Optional[MarketParams]
    problem: Optional[ProblemSpec]
    solver: SolverSettings
    sim: SimSettings
    check: CheckSettings
    plot: PlotSettings
    output: OutputSettings
    compare_names: tuple
    resolved: dict = field(default_factory=dict)

    def require(self, *sections):
        present = {
            "impact": self.model is not None,
            "market": self.market is not None,
            "problem": self.problem is not None,
        }
        for s in sections:
            if not present.get(s, True):
                raise ConfigError(f"missing required [{s}] section")


def read_config_file(path: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    return {s: dict(parser.items(s)) for s in parser.sections()}


def apply_overrides(mapping: dict, overrides) -> dict:
    """Apply command-line `section.key=value` assignments on top of a mapping."""
    out = {s: dict(kv) for s, kv in mapping.items()}
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        out.setdefault(section.strip(), {})[key.strip()] = value.strip()
    return out


def _floats(section: str, items: dict, casts: dict) -> dict:
    out = {}
    for key, raw in items.items():
        cast = casts[key]
        try:
            if cast is bool:
                low = raw.strip().lower()
                if low in ("1", "true", "yes", "on"):
                    out[key] = True
                elif low in ("0", "false", "no", "off"):
                    out[key] = False
                else:
                    raise ValueError(raw)
            else:
                out[key] = cast(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{section}.{key} = {raw!r} is not a valid {cast.__name__}") from None
    return out


def _check_keys(section: str, items: dict):
    allowed = _SECTION_KEYS[section]
    unknown = set(items) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")


def _parse_market(items: dict) -> MarketParams:
    _check_keys("market", items)
    vals = _floats("market", items, {"mu": float, "sigma": float, "decay": float})
    has_pair = "mu" in vals or "sigma" in vals
    if has_pair and not ("mu" in vals and "sigma" in vals):
        raise ConfigError("[market] needs both mu and sigma when either is given")
    if not has_pair and "decay" not in vals:
        raise ConfigError("[market] needs either (mu, sigma) or decay")
    if has_pair:
        params = MarketParams.from_drift_vol(vals["mu"], vals["sigma"])
        if "decay" in vals and abs(vals["decay"] - params.decay) > 1e-12 * (1.0 + abs(params.decay)):
            raise ConfigError(
                f"market.decay = {vals['decay']!r} is inconsistent with mu and sigma "
                f"(expected {params.decay!r})"
            )
        return params
    return MarketParams.from_decay(vals["decay"])


def build_run_config(mapping: dict) -> RunConfig:
    """Validate a raw section mapping and materialize all defaults."""
    mapping = {s: dict(kv) for s, kv in mapping.items()}
    known = set(_SECTION_KEYS) | {"impact"}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")

    model = None
    if "impact" in mapping:
        try:
            model = impact_from_config(mapping["impact"])
        except ValueError as exc:
            raise ConfigError(f"[impact]: {exc}") from None

    market = _parse_market(mapping["market"]) if "market" in mapping else None

    problem = None
    if "problem" in mapping:
        _check_keys("problem", mapping["problem"])
        vals = _floats(
            "problem", mapping["problem"], {k: float for k in _SECTION_KEYS["problem"]}
        )
        missing = _SECTION_KEYS["problem"] - set(vals)
        if missing:
            raise ConfigError(f"[problem] missing key(s): {sorted(missing)}")
        problem = ProblemSpec(**vals)

    def build(section, cls, casts):
        items = mapping.get(section, {})
        _check_keys(section, items)
        return cls(**_floats(section, items, casts))

    solver = build(
        "solver",
        SolverSettings,
        {"nt": int, "nx": int, "x_max": float, "y_max": float, "max_expansions": int, "refine": bool},
    )
    sim = build(
        "sim",
        SimSettings,
        {
            "n_paths": int,
            "n_steps": int,
            "seed": int,
            "strategy": str,
            "log_floor": float,
            "path_csv_cap": int,
        },
    )
    check = build("check", CheckSettings, {"draws": int, "seed": int, "grid_points": int})
    plot = build(
        "plot", PlotSettings, {"x_min": float, "x_max": float, "points": int, "spacing": str}
    )

    out_items = dict(mapping.get("output", {}))
    _check_keys("output", out_items)
    formats = out_items.pop("formats", None)
    kwargs = _floats("output", out_items, {"directory": str, "schedule_samples": int})
    if formats is not None:
        kwargs["formats"] = tuple(f.strip() for f in formats.split(",") if f.strip())
    output = OutputSettings(**kwargs)

    comp_items = mapping.get("compare", {})
    _check_keys("compare", comp_items)
    names = tuple(
        s.strip() for s in comp_items.get("strategies", "twap,threshold").split(",") if s.strip()
    )

    cfg = RunConfig(
        model=model,
        market=market,
        problem=problem,
        solver=solver,
        sim=sim,
        check=check,
        plot=plot,
        output=output,
        compare_names=names,
    )
    cfg.resolved = _resolve(cfg, mapping)
    return cfg


def _resolve(cfg: RunConfig, mapping: dict) -> dict:
    """Fully-defaulted string mapping, suitable for the manifest."""
    out = {}
    if cfg.model is not None:
        out["impact"] = cfg.model.to_config()
    if cfg.market is not None:
        out["market"] = {
            "mu": repr(cfg.market.mu),
            "sigma": repr(cfg.market.sigma),
            "decay": repr(cfg.market.decay),
        }
    if cfg.problem is not None:
        out["problem"] = {
            "c0": repr(cfg.problem.c0),
            "x0": repr(cfg.problem.x0),
            "s0": repr(cfg.problem.s0),
            "horizon": repr(cfg.problem.horizon),
        }
    out["solver"] = {
        "nt": str(cfg.solver.nt),
        "nx": str(cfg.solver.nx),
        "max_expansions": str(cfg.solver.max_expansions),
        "refine": str(cfg.solver.refine).lower(),
    }
    if cfg.solver.x_max is not None:
        out["solver"]["x_max"] = repr(cfg.solver.x_max)
    if cfg.solver.y_max is not None:
        out["solver"]["y_max"] = repr(cfg.solver.y_max)
    out["sim"] = {
        "n_paths": str(cfg.sim.n_paths),
        "n_steps": str(cfg.sim.n_steps),
        "seed": str(cfg.sim.seed),
        "strategy": cfg.sim.strategy,
        "log_floor": repr(cfg.sim.log_floor),
        "path_csv_cap": str(cfg.sim.path_csv_cap),
    }
    out["check"] = {
        "draws": str(cfg.check.draws),
        "seed": str(cfg.check.seed),
        "grid_points": str(cfg.check.grid_points),
    }
    out["plot"] = {
        "x_min": repr(cfg.plot.x_min),
        "points": str(cfg.plot.points),
        "spacing": cfg.plot.spacing,
    }
    if cfg.plot.x_max is not None:
        out["plot"]["x_max"] = repr(cfg.plot.x_max)
    out["compare"] = {"strategies": ",".join(cfg.compare_names)}
    out["output"] = {
        "directory": cfg.output.directory,
        "formats": ",".join(cfg.output.formats),
        "schedule_samples": str(cfg.output.schedule_samples),
    }
    return out
