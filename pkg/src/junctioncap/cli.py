"""Command line surface: config ingestion, orchestration, CSV emission.

Exit codes: 0 success, 1 infeasible verdict, 2 input error, 3 solver failure.
"""

from __future__ import annotations

import functools
import math
import os
import sys
from importlib import resources
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import (AnalysisParams, BUNDLED_LINE_PROGRAMS, WORKERS_ENV,
                       combination_grid, compare_layouts,
                       default_assessed_route, min_service_rate,
                       resolve_routes, sweep)
from .approx import ApproxError, CorrectionParams, gi_correction_factor, \
    model_threshold, waiting_threshold
from .config import ConfigDocument, ConfigError, parse_config
from .ctmc import CtmcError, build_generator, build_state_space
from .model import ModelError, RateSet, arrival_rates, passenger_ratio, \
    service_rates
from .prism import export_prism
from .simulate import SimConfig, SimulationError, simulate as run_simulation
from .solver import (SolverError, expected_queue_lengths, loss_probabilities,
                     min_waiting_slots, stationary_distribution)

EXIT_INFEASIBLE = 1
EXIT_INPUT = 2
EXIT_SOLVER = 3


def _fmt(value) -> str:
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf"
        return f"{value:.12g}"
    return str(value)


def write_csv(path: Path, header, rows, provenance):
    lines = [f"# {p}" for p in provenance]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_config(ref: str) -> ConfigDocument:
    """Read a config from a path, or from the bundled set by bare name."""
    path = Path(ref)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        name = ref if ref.endswith(".yaml") else ref + ".yaml"
        candidate = resources.files("junctioncap").joinpath("configs", name)
        if not candidate.is_file():
            raise ConfigError(f"config not found: {ref!r} "
                              "(neither a file nor a bundled config name)")
        text = candidate.read_text(encoding="utf-8")
    return parse_config(text)


def _provenance(cfg: ConfigDocument, extra=()):
    lines = [f"junctioncap {__version__}",
             f"config sha256: {cfg.sha256}",
             f"params: {cfg.params.echo()}"]
    lines.extend(extra)
    return lines


def _rates(cfg: ConfigDocument, mu_override: float | None) -> RateSet:
    if cfg.program is None:
        raise ConfigError("this command needs a program section in the config")
    lam = arrival_rates(cfg.program, cfg.junction)
    if mu_override is not None:
        if mu_override <= 0:
            raise ConfigError("--mu must be positive")
        mu = service_rates(cfg.program, cfg.junction, override=1.0 / mu_override)
    else:
        mu = service_rates(cfg.program, cfg.junction)
    return RateSet(tuple(lam), tuple(mu), v_a=cfg.params.v_a, v_b=cfg.params.v_b)


def _assessed(cfg: ConfigDocument, routes_opt, lam):
    if routes_opt:
        names = [r.strip() for r in routes_opt.split(",") if r.strip()]
        if names == ["all"]:
            return tuple(range(cfg.junction.k))
        return resolve_routes(cfg.junction, names)
    return (default_assessed_route(cfg.junction, lam),)


def _mu_grid(cfg: ConfigDocument, mu_min, mu_max, mu_step):
    params = cfg.params
    lo = mu_min if mu_min is not None else params.mu_min
    hi = mu_max if mu_max is not None else params.mu_max
    step = mu_step if mu_step is not None else params.mu_step
    if lo <= 0 or step <= 0 or hi < lo:
        raise ConfigError("invalid mu grid specification")
    n = int(round((hi - lo) / step)) + 1
    grid = lo + step * np.arange(n)
    return grid[grid <= hi + 1e-12]


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ModelError, CtmcError, ApproxError,
                SimulationError) as exc:
            click.echo(f"input error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        except SolverError as exc:
            click.echo(f"solver error: {exc}", err=True)
            sys.exit(EXIT_SOLVER)
    return wrapper


@click.group()
@click.version_option(__version__)
def main():
    """Queueing-based capacity analysis of railway junctions."""


config_opt = click.option("--config", "-c", "config_ref", required=True,
                          help="Config file path or bundled config name.")
out_opt = click.option("--out", "-o", "out_dir", default=".",
                       type=click.Path(file_okay=False), help="Output directory.")
m_opt = click.option("--m", "m_override", type=int, default=None,
                     help="Waiting slots per route (overrides config).")
choice_rate_opt = click.option("--choice-rate", type=float, default=None,
                               help="Decision transition rate per minute.")
mu_opt = click.option("--mu", "mu_override", type=float, default=None,
                      help="Uniform service rate override, trains/minute.")
routes_opt = click.option("--routes", default=None,
                          help="Assessed routes, comma separated ('all' for every route).")


def _analysis_params(cfg, m_override, choice_rate):
    overrides = {}
    if m_override is not None:
        overrides["m"] = m_override
    if choice_rate is not None:
        overrides["choice_rate"] = choice_rate
    return cfg.params.analysis_params(**overrides)


@main.command()
@config_opt
@out_opt
@m_opt
@choice_rate_opt
@mu_opt
@routes_opt
@handle_errors
def analyze(config_ref, out_dir, m_override, choice_rate, mu_override, routes):
    """Fixed-rate analysis: queue lengths, loss probabilities, verdicts."""
    cfg = load_config(config_ref)
    params = _analysis_params(cfg, m_override, choice_rate)
    rates = _rates(cfg, mu_override)
    lam = np.asarray(rates.lam)
    space = build_state_space(cfg.junction, params.m,
                              arriving=[x > 0 for x in lam])
    gen = build_generator(space, rates, params.choice_rate)
    dist = stationary_distribution(gen, tol=params.tol)
    e_lw = expected_queue_lengths(dist, space)
    p_loss = loss_probabilities(dist, space)
    p_pt = params.p_pt if params.p_pt is not None else passenger_ratio(cfg.program)
    l_star = waiting_threshold(p_pt)

    rows = []
    passed = {}
    for i, route in enumerate(cfg.junction.routes):
        mu_i = rates.mu[i]
        rho = lam[i] / mu_i
        if lam[i] > 0:
            gamma = gi_correction_factor(CorrectionParams(
                rho=rho, v_a=params.v_a, v_b=params.v_b))
            threshold = model_threshold(l_star, gamma)
        else:
            gamma, threshold = float("nan"), float("inf")
        ok = e_lw[i] <= threshold
        passed[i] = ok
        rows.append((route.name, lam[i], mu_i, rho, e_lw[i], p_loss[i],
                     gamma, threshold, ok))
    assessed = _assessed(cfg, routes, lam)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "analyze.csv",
              ["route", "lambda", "mu", "rho", "e_lw", "p_loss", "gamma",
               "threshold", "pass"],
              rows,
              _provenance(cfg, [f"command: analyze m={params.m} "
                                f"choice_rate={params.choice_rate:.12g}",
                                f"states: {len(space)}"]))
    names = ", ".join(cfg.junction.routes[i].name for i in assessed)
    verdict = all(passed[i] for i in assessed)
    click.echo(f"junction {cfg.junction.name}: {len(space)} states, "
               f"assessed routes: {names}")
    for route, lam_i, mu_i, rho, e, pl, g, thr, ok in rows:
        click.echo(f"  {route}: e_lw={_fmt(e)} p_loss={_fmt(pl)} "
                   f"threshold={_fmt(thr)} pass={_fmt(ok)}")
    click.echo(f"verdict: {'acceptable' if verdict else 'insufficient'}")
    if not verdict:
        sys.exit(EXIT_INFEASIBLE)


def _sweep_rows(result):
    rows = []
    for gi, mu in enumerate(result.mu):
        for i, route in enumerate(result.junction.routes):
            rows.append((result.junction.name, float(mu), route.name,
                         result.e_lw[gi, i], result.rho[gi, i],
                         result.gamma[gi, i], result.threshold[gi, i],
                         bool(result.passed[gi, i])))
    return rows


@main.command("sweep")
@config_opt
@out_opt
@m_opt
@choice_rate_opt
@routes_opt
@click.option("--mu-min", type=float, default=None)
@click.option("--mu-max", type=float, default=None)
@click.option("--mu-step", type=float, default=None)
@handle_errors
def sweep_cmd(config_ref, out_dir, m_override, choice_rate, routes,
              mu_min, mu_max, mu_step):
    """Uniform service-rate sweep with per-route thresholds and verdicts."""
    cfg = load_config(config_ref)
    params = _analysis_params(cfg, m_override, choice_rate)
    grid = _mu_grid(cfg, mu_min, mu_max, mu_step)
    if cfg.program is None:
        raise ConfigError("sweep needs a program section in the config")
    result = sweep(cfg.junction, cfg.program, grid, params)
    assessed = _assessed(cfg, routes, result.lam)
    verdict = min_service_rate(result, assessed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep.csv",
              ["layout", "mu", "route", "e_lw", "rho", "gamma", "threshold",
               "pass"],
              _sweep_rows(result),
              _provenance(cfg, [f"command: sweep m={params.m} grid "
                                f"{grid[0]:.12g}..{grid[-1]:.12g} n={len(grid)}"]))
    names = ", ".join(cfg.junction.routes[i].name for i in assessed)
    if verdict.feasible:
        click.echo(f"{cfg.junction.name}: mu_min={_fmt(verdict.mu_min)} "
                   f"b_max={_fmt(verdict.b_max)} (assessed: {names})")
    else:
        click.echo(f"{cfg.junction.name}: infeasible on grid (assessed: {names})")
        sys.exit(EXIT_INFEASIBLE)


@main.command()
@config_opt
@out_opt
@m_opt
@choice_rate_opt
@routes_opt
@click.option("--mu-min", type=float, default=None)
@click.option("--mu-max", type=float, default=None)
@click.option("--mu-step", type=float, default=None)
@handle_errors
def compare(config_ref, out_dir, m_override, choice_rate, routes,
            mu_min, mu_max, mu_step):
    """Compare the junction layout against the alternative layout."""
    cfg = load_config(config_ref)
    if cfg.alternative is None:
        raise ConfigError("compare needs an alternative layout in the config")
    if cfg.program is None:
        raise ConfigError("compare needs a program section in the config")
    params = _analysis_params(cfg, m_override, choice_rate)
    grid = _mu_grid(cfg, mu_min, mu_max, mu_step)
    assessed = None
    if routes:
        assessed = [r.strip() for r in routes.split(",") if r.strip()]
    comparison = compare_layouts([cfg.junction, cfg.alternative],
                                 cfg.program, grid, params,
                                 assessed_routes=assessed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(v.junction_name,
             v.mu_min if v.feasible else float("nan"),
             v.b_max if v.feasible else float("nan"))
            for v in comparison.verdicts]
    write_csv(out / "compare.csv", ["layout", "mu_min", "b_max"], rows,
              _provenance(cfg, [f"command: compare m={params.m} grid "
                                f"{grid[0]:.12g}..{grid[-1]:.12g} n={len(grid)}"]))
    for v in comparison.verdicts:
        if v.feasible:
            click.echo(f"{v.junction_name}: mu_min={_fmt(v.mu_min)} "
                       f"b_max={_fmt(v.b_max)}")
        else:
            click.echo(f"{v.junction_name}: infeasible on grid")
    for a, b, rel in comparison.relative_differences():
        if rel is not None:
            click.echo(f"relative b_max difference {a} vs {b}: {_fmt(rel)}")
    if not all(v.feasible for v in comparison.verdicts):
        sys.exit(EXIT_INFEASIBLE)


@main.command()
@config_opt
@out_opt
@m_opt
@choice_rate_opt
@click.option("--mu-min", type=float, default=None)
@click.option("--mu-max", type=float, default=None)
@click.option("--mu-step", type=float, default=None)
@handle_errors
def grid(config_ref, out_dir, m_override, choice_rate, mu_min, mu_max, mu_step):
    """b_max matrix over all (main, branch) line program combinations."""
    cfg = load_config(config_ref)
    params = _analysis_params(cfg, m_override, choice_rate)
    mu_values = _mu_grid(cfg, mu_min, mu_max, mu_step)
    layouts = [cfg.junction] + ([cfg.alternative] if cfg.alternative else [])
    programs = cfg.line_programs or BUNDLED_LINE_PROGRAMS
    result = combination_grid(programs, programs, layouts, mu_values, params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(cell.main, cell.branch, cell.layout,
             cell.verdict.mu_min if cell.verdict.feasible else float("nan"),
             cell.verdict.b_max if cell.verdict.feasible else float("nan"))
            for cell in result.cells]
    write_csv(out / "grid.csv",
              ["main_program", "branch_program", "layout", "mu_min", "b_max"],
              rows,
              _provenance(cfg, [f"command: grid m={params.m} "
                                f"programs={len(programs)} layouts={len(layouts)}"]))
    click.echo(f"computed {len(result.cells)} grid cells "
               f"({len(programs)}x{len(programs)} programs, {len(layouts)} layouts)")
    infeasible = [c for c in result.cells if not c.verdict.feasible]
    if infeasible:
        click.echo(f"{len(infeasible)} cells infeasible on grid")
        sys.exit(EXIT_INFEASIBLE)


@main.command("size-queue")
@config_opt
@out_opt
@choice_rate_opt
@mu_opt
@click.option("--p-loss-limit", type=float, default=None,
              help="Loss probability limit (overrides config).")
@click.option("--m-max", type=int, default=20, show_default=True)
@handle_errors
def size_queue(config_ref, out_dir, choice_rate, mu_override, p_loss_limit,
               m_max):
    """Smallest waiting-slot count meeting the loss probability limit."""
    cfg = load_config(config_ref)
    p_star = p_loss_limit if p_loss_limit is not None else cfg.params.p_loss_limit
    if p_star is None:
        raise ConfigError("set --p-loss-limit or params.p_loss_limit")
    rates = _rates(cfg, mu_override)
    rate = choice_rate if choice_rate is not None else cfg.params.choice_rate
    sizing = min_waiting_slots(cfg.junction, rates, p_star, m_max=m_max,
                               choice_rate=rate)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sizequeue.csv", ["m", "p_loss_worst"],
              [(m, p) for m, p in sizing.trace],
              _provenance(cfg, [f"command: size-queue p_loss_limit={p_star:.12g} "
                                f"m_max={m_max}"]))
    if sizing.feasible:
        click.echo(f"minimum waiting slots: m={sizing.m} "
                   f"(worst p_loss={_fmt(sizing.trace[-1][1])})")
    else:
        click.echo(f"limit {p_star:.12g} not met within m_max={m_max}; "
                   f"worst p_loss trace: "
                   + ", ".join(f"m={m}:{_fmt(p)}" for m, p in sizing.trace))
        sys.exit(EXIT_INFEASIBLE)


@main.command("simulate")
@config_opt
@out_opt
@mu_opt
@click.option("--runs", type=int, default=100, show_default=True)
@click.option("--hours", type=float, default=22.0, show_default=True)
@click.option("--warmup", type=float, default=1.0, show_default=True,
              help="Hours dropped from each end of every run.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--limit", "limit_m", type=int, default=None,
              help="Max queued trains per route (default: unlimited).")
@click.option("--snapshot-interval", type=float, default=1.0, show_default=True)
@click.option("--trace", is_flag=True, help="Write per-run snapshot CSVs.")
@handle_errors
def simulate_cmd(config_ref, out_dir, mu_override, runs, hours, warmup, seed,
                 limit_m, snapshot_interval, trace):
    """Discrete-event simulation of the junction under the program's rates."""
    cfg = load_config(config_ref)
    rates = _rates(cfg, mu_override)
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    sim_config = SimConfig(limit_m=limit_m, hours=hours, warmup_drop=warmup,
                           runs=runs, seed=seed,
                           snapshot_interval=snapshot_interval,
                           workers=workers, keep_snapshots=trace)
    result = run_simulation(cfg.junction, rates, sim_config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(rates.mu[i], route.name, result.mean_queue[i], result.sigma[i],
             result.p_loss_empirical[i])
            for i, route in enumerate(cfg.junction.routes)]
    write_csv(out / "simulate.csv",
              ["mu", "route", "mean_queue", "sigma", "p_loss_empirical"],
              rows,
              _provenance(cfg, [f"command: simulate runs={runs} hours={hours:.12g} "
                                f"warmup={warmup:.12g} seed={seed} "
                                f"limit={'none' if limit_m is None else limit_m} "
                                f"interval={snapshot_interval:.12g}"]))
    if trace:
        for ri, run in enumerate(result.runs):
            snap_rows = [(t + 1, *run.snapshots[t]) for t in range(len(run.snapshots))]
            write_csv(out / f"trace_run_{ri:03d}.csv",
                      ["snapshot", *[r.name for r in cfg.junction.routes]],
                      snap_rows,
                      _provenance(cfg, [f"command: simulate trace run={ri}"]))
    for i, route in enumerate(cfg.junction.routes):
        click.echo(f"  {route.name}: mean_queue={_fmt(result.mean_queue[i])} "
                   f"sigma={_fmt(result.sigma[i])} "
                   f"p_loss={_fmt(result.p_loss_empirical[i])}")


@main.command("export-prism")
@config_opt
@out_opt
@m_opt
@choice_rate_opt
@mu_opt
@handle_errors
def export_prism_cmd(config_ref, out_dir, m_override, choice_rate, mu_override):
    """Write the junction chain as a PRISM model file."""
    cfg = load_config(config_ref)
    params = _analysis_params(cfg, m_override, choice_rate)
    rates = _rates(cfg, mu_override)
    space = build_state_space(cfg.junction, params.m,
                              arriving=[x > 0 for x in rates.lam])
    gen = build_generator(space, rates, params.choice_rate)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = export_prism(space, gen)
    path = out / "model.prism"
    path.write_text(text, encoding="utf-8", newline="\n")
    click.echo(f"wrote {path}: {len(space)} states, "
               f"{gen.off_diagonal().nnz} transitions")


if __name__ == "__main__":
    main()
