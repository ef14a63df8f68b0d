"""Command-line harness: one config file in, JSON summaries and CSV tables out.

Every run writes `summary.json` (deterministic: identical configs give
byte-identical bytes), the requested CSV tables, and `manifest.json`
(resolved config + version + timestamp) from which `optexec rerun` can
reproduce the run exactly.  Exit codes: 0 ok, 2 config error, 3 hypothesis
violation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys

import numpy as np

from . import __version__
from .closed_form import (
    Schedule,
    extreme_comparison,
    levy_effective_twap_rate,
    mixed_power_solution,
    twap_rate,
    twap_solution,
)
from .config import RunConfig, apply_overrides, build_run_config, read_config_file
from .errors import ConfigError, HypothesisViolation, NumericalFailure
from .hamiltonian import closed_vs_brute_samples
from .hjb import full_value_from_reduced, hjb_residual, solve_reduced_hjb
from .impact import (
    LevyEffectiveImpact,
    MarginalNotInvertibleError,
    MixedPowerImpact,
    ShiftedConvexImpact,
)
from .simulate import (
    CoefficientSet,
    DeterministicStrategy,
    compare_strategies,
    feedback_strategy_from_policy,
    simulate,
)

OUTPUT_ENV_VAR = "OPTEXEC_OUTPUT_DIR"


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _write_artifacts(name: str, cfg: RunConfig, out_dir: str, summary: dict, tables: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    if "json" in cfg.output.formats:
        doc = {"subcommand": name, "version": __version__}
        doc.update(summary)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if "csv" in cfg.output.formats:
        for tname, (header, rows) in tables.items():
            with open(os.path.join(out_dir, f"{tname}.csv"), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_fmt(v) for v in row])
    manifest = {
        "subcommand": name,
        "version": __version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg.resolved,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args, cfg: RunConfig) -> str:
    if getattr(args, "output", None):
        return args.output
    env = os.environ.get(OUTPUT_ENV_VAR)
    if env:
        return env
    return cfg.output.directory


def _load_config(args) -> RunConfig:
    mapping = getattr(args, "_mapping", None)
    if mapping is None:
        mapping = read_config_file(args.config) if args.config else {}
    mapping = apply_overrides(mapping, getattr(args, "set", None))
    if not mapping:
        raise ConfigError("no configuration given; pass --config FILE or --set section.key=value")
    return build_run_config(mapping)


def _schedule_table(schedule: Schedule, n: int):
    t, r = schedule.sample(n)
    return ["t", "rate"], list(zip(t.tolist(), r.tolist()))


def _stats_dict(stats) -> dict:
    from .simulate import QUANTILE_LEVELS

    return {
        "mean": stats.mean,
        "variance": stats.variance,
        "quantiles": {str(q): v for q, v in zip(QUANTILE_LEVELS, stats.quantiles)},
    }


def _build_strategy(spec: str, cfg: RunConfig):
    """Map a strategy spec string to a simulation strategy.

    twap           constant selling at the optimal rate
    threshold      constant selling at the impact threshold
    rate:<v>       constant selling at rate v until inventory is gone
    zero           no trading
    feedback       closed-loop policy from a fresh HJB solve
    """
    model, prob, market = cfg.model, cfg.problem, cfg.market
    horizon, x0 = prob.horizon, prob.x0
    if spec == "twap":
        sol = twap_solution(prob.c0, x0, prob.s0, model, market.decay, horizon)
        return DeterministicStrategy(sol.schedule)
    if spec == "threshold":
        if model.threshold <= 0.0:
            raise ConfigError("threshold strategy needs a model with a positive threshold")
        if x0 > model.threshold * horizon:
            raise HypothesisViolation("threshold strategy cannot finish: x0 > threshold * horizon")
        return DeterministicStrategy(
            Schedule.constant(model.threshold, x0 / model.threshold, horizon)
        )
    if spec.startswith("rate:"):
        rate = float(spec.split(":", 1)[1])
        if rate < 0.0:
            raise ConfigError("rate strategy needs a non-negative rate")
        duration = min(x0 / rate, horizon) if rate > 0.0 else 0.0
        return DeterministicStrategy(Schedule.constant(rate, duration, horizon))
    if spec == "zero":
        return DeterministicStrategy(Schedule.constant(0.0, 0.0, horizon))
    if spec == "feedback":
        surface = _solve_surface(cfg)
        return feedback_strategy_from_policy(surface)
    raise ConfigError(f"unknown strategy spec {spec!r}")


def _solve_surface(cfg: RunConfig):
    prob, solver = cfg.problem, cfg.solver
    x_max = solver.x_max if solver.x_max is not None else 2.0 * prob.x0
    if x_max <= 0.0:
        raise ConfigError("solver.x_max must be positive (set it explicitly when x0 = 0)")
    return solve_reduced_hjb(
        cfg.model,
        cfg.market.decay,
        prob.horizon,
        x_max,
        nt=solver.nt,
        nx=solver.nx,
        y_max=solver.y_max,
        max_expansions=solver.max_expansions,
    )


# -- subcommands ----------------------------------------------------------------


def _cmd_twap(args) -> int:
    cfg = _load_config(args)
    cfg.require("impact", "market", "problem")
    p = cfg.problem
    sol = twap_solution(p.c0, p.x0, p.s0, cfg.model, cfg.market.decay, p.horizon)
    summary = {
        "value": sol.value,
        "rate": sol.rate,
        "marginal_at_rate": sol.marginal_at_rate,
        "sell_duration": sol.schedule.total / sol.rate if sol.rate > 0 else 0.0,
        "decay": cfg.market.decay,
    }
    tables = {"schedule": _schedule_table(sol.schedule, cfg.output.schedule_samples)}
    _write_artifacts("twap", cfg, _out_dir(args, cfg), summary, tables)
    return 0


def _cmd_mixed_power(args) -> int:
    cfg = _load_config(args)
    cfg.require("impact", "market", "problem")
    if not isinstance(cfg.model, MixedPowerImpact):
        raise ConfigError("mixed-power needs [impact] family = mixed_power")
    p = cfg.problem
    sol = mixed_power_solution(p.c0, p.x0, p.s0, cfg.model, cfg.market.decay, p.horizon)
    summary = {
        "regime": sol.regime,
        "value": sol.value,
        "x_large": sol.x_large,
        "x_small": sol.x_small,
        "rate": sol.rate,
        "delta": sol.delta,
    }
    tables = {}
    if sol.schedule is not None:
        tables["schedule"] = _schedule_table(sol.schedule, cfg.output.schedule_samples)
    _write_artifacts("mixed-power", cfg, _out_dir(args, cfg), summary, tables)
    return 0


def _cmd_levy_nu(args) -> int:
    cfg = _load_config(args)
    cfg.require("impact", "market")
    if not isinstance(cfg.model, LevyEffectiveImpact):
        raise ConfigError("levy-nu needs [impact] family = levy_effective")
    m = cfg.model
    rate = levy_effective_twap_rate(m.gamma, m.alpha0, m.alpha1, m.beta1, cfg.market.decay)
    residual = m.excess_impact(rate) - cfg.market.decay
    summary = {"rate": rate, "residual": residual, "decay": cfg.market.decay}
    _write_artifacts("levy-nu", cfg, _out_dir(args, cfg), summary, {})
    return 0


def _cmd_extreme_compare(args) -> int:
    cfg = _load_config(args)
    cfg.require("impact", "market", "problem")
    if not isinstance(cfg.model, ShiftedConvexImpact):
        raise ConfigError("extreme-compare needs [impact] family = shifted_convex")
    p = cfg.problem
    comp = extreme_comparison(cfg.model, p.x0, p.s0, cfg.market.decay, p.horizon)
    summary = {
        "optimal_value": comp.optimal_value,
        "threshold_value": comp.threshold_value,
        "rate": comp.rate,
        "margin": comp.optimal_value - comp.threshold_value,
    }
    _write_artifacts("extreme-compare", cfg, _out_dir(args, cfg), summary, {})
    return 0


def _cmd_solve_hjb(args) -> int:
    cfg = _load_config(args)
    cfg.require("impact", "market", "problem")
    p = cfg.problem
    surface = _solve_surface(cfg)
    w_term = surface.value_at(p.horizon, p.x0)
    value = full_value_from_reduced(p.c0, p.s0, surface, p.horizon, p.x0)
    pol = surface.policy
    summary = {
        "W_terminal": w_term,
        "value": value,
        "residual": hjb_residual(surface, cfg.model),
        "saturation_fraction": surface.saturation_fraction,
        "y_max": surface.y_max,
        "policy_zero_fraction": float(np.mean(pol == 0.0)),
        "policy_max": float(pol.max()),
    }
    if cfg.solver.refine:
        coarse = solve_reduced_hjb(
            cfg.model,
            cfg.market.decay,
            p.horizon,
            float(surface.x_grid[-1]),
            nt=max(cfg.solver.nt // 2, 2),
            nx=max(cfg.solver.nx // 2, 2),
            y_max=surface.y_max,
            max_expansions=0,
        )
        summary["refinement_delta"] = abs(coarse.value_at(p.horizon, p.x0) - w_term)
    rows = []
    for l, t in enumerate(surface.t_grid):
        for i, x in enumerate(surface.x_grid):
            rows.append((t, x, surface.values[l, i], surface.policy[l, i]))
    tables = {"surface": (["t", "x", "W", "speed"], rows)}
    _write_artifacts("solve-hjb", cfg, _out_dir(args, cfg), summary, tables)
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    cfg.require("impact", "market", "problem")
    p, sim = cfg.problem, cfg.sim
    strategy = _build_strategy(sim.strategy, cfg)
    coeffs = CoefficientSet.black_scholes(cfg.market.mu, cfg.market.sigma)
    res = simulate(
        strategy,
        coeffs,
        cfg.model,
        p.c0,
        p.x0,
        p.s0,
        p.horizon,
        sim.n_paths,
        sim.n_steps,
        sim.seed,
        log_floor=sim.log_floor,
    )
    summary = {
        "strategy": sim.strategy,
        "mean": res.mean_utility,
        "std_error": res.std_error,
        "n_paths": res.n_paths,
        "n_steps": sim.n_steps,
        "seed": sim.seed,
        "absorption_count": res.absorption_count,
        "cash": _stats_dict(res.cash),
        "inventory": _stats_dict(res.inventory),
        "price": _stats_dict(res.price),
    }
    tables = {}
    if sim.path_csv_cap > 0:
        small = simulate(
            strategy,
            coeffs,
            cfg.model,
            p.c0,
            p.x0,
            p.s0,
            p.horizon,
            min(sim.path_csv_cap, sim.n_paths),
            sim.n_steps,
            sim.seed,
            log_floor=sim.log_floor,
            return_paths=True,
        )
        rows = []
        for i in range(small.n_paths):
            for k, t in enumerate(small.paths["t"]):
                rows.append(
                    (i, t, small.paths["S"][i, k], small.paths["C"][i, k], small.paths["X"][i, k])
                )
        tables["paths"] = (["path", "t", "S", "C", "X"], rows)
    _write_artifacts("simulate", cfg, _out_dir(args, cfg), summary, tables)
    return 0


def _cmd_compare(args) -> int:
    cfg = _load_config(args)
    cfg.require("impact", "market", "problem")
    p, sim = cfg.problem, cfg.sim
    named = [(name, _build_strategy(name, cfg)) for name in cfg.compare_names]
    coeffs = CoefficientSet.black_scholes(cfg.market.mu, cfg.market.sigma)
    comp = compare_strategies(
        named,
        coeffs,
        cfg.model,
        p.c0,
        p.x0,
        p.s0,
        p.horizon,
        sim.n_paths,
        sim.n_steps,
        sim.seed,
    )
    summary = {
        "strategies": list(comp.names),
        "means": comp.means,
        "std_errors": comp.std_errors,
        "best": comp.best(),
        "pairs": [
            {"first": a, "second": b, "mean_diff": d, "se_diff": se}
            for a, b, d, se in comp.pairs
        ],
    }
    rows = list(zip(comp.names, comp.means, comp.std_errors))
    tables = {"comparison": (["strategy", "mean", "std_error"], rows)}
    _write_artifacts("compare", cfg, _out_dir(args, cfg), summary, tables)
    return 0


def _cmd_hamiltonian_check(args) -> int:
    cfg = _load_config(args)
    cfg.require("impact")
    rows = closed_vs_brute_samples(
        cfg.model, cfg.check.draws, seed=cfg.check.seed, n_grid=cfg.check.grid_points
    )
    worst = max(abs(r[4] - r[5]) / (1.0 + abs(r[4])) for r in rows)
    summary = {
        "draws": cfg.check.draws,
        "max_scaled_diff": worst,
        "within_tol": bool(worst <= 1e-6),
    }
    tables = {
        "hamiltonian": (["s", "p_c", "p_x", "p_s", "H_closed", "H_brute", "speed"], rows)
    }
    _write_artifacts("hamiltonian-check", cfg, _out_dir(args, cfg), summary, tables)
    return 0


def _cmd_impact_plot(args) -> int:
    cfg = _load_config(args)
    cfg.require("impact")
    model, plot = cfg.model, cfg.plot
    x_hi = plot.x_max if plot.x_max is not None else 2.5 * model.threshold + 2.0
    if plot.spacing == "log":
        xs = np.logspace(np.log10(plot.x_min), np.log10(x_hi), plot.points)
    else:
        xs = np.linspace(plot.x_min, x_hi, plot.points)
    rows = []
    for x in xs:
        hval = model.h(float(x)) if x > 0.0 else ""
        rows.append((float(x), model.g(float(x)), hval))
    summary = {"family": model.family, "threshold": model.threshold, "x_max": float(x_hi)}
    _write_artifacts("impact-plot", cfg, _out_dir(args, cfg), summary, {"impact": (["x", "g", "h"], rows)})
    return 0


def _cmd_rerun(args) -> int:
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load manifest: {exc}") from None
    sub = manifest.get("subcommand")
    handler = _HANDLERS.get(sub)
    if handler is None:
        raise ConfigError(f"manifest names unknown subcommand {sub!r}")
    ns = argparse.Namespace(config=None, set=None, output=args.output, _mapping=manifest["config"])
    return handler(ns)


_HANDLERS = {
    "twap": _cmd_twap,
    "mixed-power": _cmd_mixed_power,
    "levy-nu": _cmd_levy_nu,
    "extreme-compare": _cmd_extreme_compare,
    "solve-hjb": _cmd_solve_hjb,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "hamiltonian-check": _cmd_hamiltonian_check,
    "impact-plot": _cmd_impact_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optexec",
        description="Optimal liquidation with S-shaped market impact: closed forms, "
        "an HJB solver, and a Monte Carlo simulator.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, handler in _HANDLERS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="path to the INI-style run configuration")
        p.add_argument(
            "--set",
            action="append",
            metavar="SECTION.KEY=VALUE",
            help="override a config value (repeatable)",
        )
        p.add_argument("--output", help="output directory (overrides config and environment)")
        p.set_defaults(func=handler)
    rerun = sub.add_parser("rerun", help="re-execute a run from its manifest")
    rerun.add_argument("manifest")
    rerun.add_argument("--output", help="output directory override")
    rerun.set_defaults(func=_cmd_rerun)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _report_failure(2, "config_error", exc)
    except (HypothesisViolation, MarginalNotInvertibleError) as exc:
        return _report_failure(3, "hypothesis_violation", exc)
    except NumericalFailure as exc:
        return _report_failure(4, "numerical_failure", exc)
    except ValueError as exc:
        return _report_failure(2, "config_error", exc)


def _report_failure(code: int, kind: str, exc: Exception) -> int:
    json.dump({"error": kind, "message": str(exc), "exit_code": code}, sys.stderr, indent=2)
    sys.stderr.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
