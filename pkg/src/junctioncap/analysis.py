"""Capacity workflows: service-rate sweeps, layout comparison, program grids.

A sweep solves the junction chain over a grid of uniform service rates and
evaluates every route's expected queue length against its occupancy-dependent
threshold.  From the sweep, the minimum sufficient service rate (and hence the
maximum tolerable mean service time b_max = 1/mu_min) is read off; comparing
b_max across layouts answers whether extra infrastructure such as an overpass
pays off for a given operating program.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import approx
from .ctmc import DEFAULT_CHOICE_RATE, StateSpace, build_generator, build_state_space
from .model import (Demand, Junction, OperatingProgram, RateSet,
                    arrival_rates, passenger_ratio)
from .solver import (DEFAULT_TOL, DIRECT_SOLVE_LIMIT, SolverError,
                     WarmStartSolver, expected_queue_lengths,
                     loss_probabilities, stationary_distribution)

DEFAULT_M = 5
WORKERS_ENV = "JUNCTIONCAP_WORKERS"

MAIN_LINE_ROUTES = (0, 2)  # A->B and B->A on the reference double-track junction
BRANCH_LINE_ROUTES = (1, 3)  # A->C and C->A


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisParams:
    m: int = DEFAULT_M
    choice_rate: float = DEFAULT_CHOICE_RATE
    v_a: float = 0.8
    v_b: float = 0.3
    p_pt: float | None = None  # None: derive from the operating program
    tol: float = DEFAULT_TOL


@dataclass(frozen=True)
class SweepResult:
    """Per-(mu, route) queue lengths, thresholds and verdicts, mu ascending."""

    junction: Junction
    lam: np.ndarray  # (k,)
    mu: np.ndarray  # (n_mu,)
    e_lw: np.ndarray  # (n_mu, k)
    p_loss: np.ndarray  # (n_mu, k)
    rho: np.ndarray  # (n_mu, k)
    gamma: np.ndarray  # (n_mu, k); nan on routes without traffic
    threshold: np.ndarray  # (n_mu, k); inf on routes without traffic
    passed: np.ndarray  # (n_mu, k) bool
    p_pt: float
    params: AnalysisParams


@dataclass(frozen=True)
class CapacityVerdict:
    junction_name: str
    assessed_routes: tuple[int, ...]
    mu_min: float | None  # None: infeasible on the swept grid

    @property
    def feasible(self) -> bool:
        return self.mu_min is not None

    @property
    def b_max(self) -> float | None:
        return None if self.mu_min is None else 1.0 / self.mu_min


def default_assessed_route(junction: Junction, lam) -> int:
    """Route with the most conflicts; ties go to the busiest, then last, route.

    On the reference double-track junction with a dominant main line this
    selects the main-line route crossing the branch at grade.
    """
    conflicts = junction.conflict_matrix()
    lam = np.asarray(lam)
    degree = conflicts.sum(axis=1) - 1
    best = None
    for i in range(junction.k):
        key = (degree[i], lam[i], i)
        if best is None or key >= best[0]:
            best = (key, i)
    return best[1]


def resolve_routes(junction: Junction, routes) -> tuple[int, ...]:
    """Accept route ids or names; 'all' means every route with traffic."""
    out = []
    for r in routes:
        if isinstance(r, str):
            out.append(junction.route_index(r))
        else:
            if not 0 <= int(r) < junction.k:
                raise AnalysisError(f"route id {r} out of range")
            out.append(int(r))
    return tuple(out)


def sweep(junction: Junction, program: OperatingProgram, mu_grid,
          params: AnalysisParams = AnalysisParams(),
          space: StateSpace | None = None) -> SweepResult:
    """Solve the chain for every mu on the grid with a uniform service rate."""
    mu_grid = np.asarray(mu_grid, dtype=float)
    if mu_grid.ndim != 1 or len(mu_grid) == 0:
        raise AnalysisError("mu grid must be a non-empty 1-d sequence")
    if np.any(mu_grid <= 0) or np.any(np.diff(mu_grid) <= 0):
        raise AnalysisError("mu grid must be positive and strictly increasing")
    lam = arrival_rates(program, junction)
    arriving = tuple(x > 0 for x in lam)
    if space is None:
        space = build_state_space(junction, params.m, arriving=arriving)
    elif space.m != params.m or space.arriving != arriving \
            or space.junction.conflicts != junction.conflicts:
        raise AnalysisError("provided state space does not match this sweep")
    p_pt = params.p_pt if params.p_pt is not None else passenger_ratio(program)
    l_star = approx.waiting_threshold(p_pt)

    n_mu, k = len(mu_grid), junction.k
    e_lw = np.zeros((n_mu, k))
    p_loss = np.zeros((n_mu, k))
    rho = np.zeros((n_mu, k))
    gamma = np.full((n_mu, k), np.nan)
    threshold = np.full((n_mu, k), np.inf)
    # consecutive grid points differ only slightly, so one warm-started
    # solver carries its preconditioner and solution across the whole grid
    warm = WarmStartSolver(tol=params.tol) \
        if len(space) > DIRECT_SOLVE_LIMIT else None
    for gi, mu in enumerate(mu_grid):
        rates = RateSet(tuple(lam), tuple(np.full(k, mu)),
                        v_a=params.v_a, v_b=params.v_b)
        gen = build_generator(space, rates, params.choice_rate)
        try:
            if warm is not None:
                dist = warm.solve(gen)
            else:
                dist = stationary_distribution(gen, tol=params.tol)
        except SolverError as exc:
            raise SolverError(f"solve failed at mu={mu:.6g}: {exc}") from exc
        e_lw[gi] = expected_queue_lengths(dist, space)
        p_loss[gi] = loss_probabilities(dist, space)
        rho[gi] = lam / mu
        for i in range(k):
            if lam[i] > 0:
                g = approx.gi_correction_factor(approx.CorrectionParams(
                    rho=rho[gi, i], v_a=params.v_a, v_b=params.v_b))
                gamma[gi, i] = g
                threshold[gi, i] = approx.model_threshold(l_star, g)
    passed = e_lw <= threshold
    return SweepResult(junction=junction, lam=lam, mu=mu_grid, e_lw=e_lw,
                       p_loss=p_loss, rho=rho, gamma=gamma,
                       threshold=threshold, passed=passed, p_pt=p_pt,
                       params=params)


def min_service_rate(result: SweepResult, assessed_routes=None) -> CapacityVerdict:
    """Smallest grid mu at which every assessed route meets its threshold."""
    if assessed_routes is None:
        assessed = (default_assessed_route(result.junction, result.lam),)
    else:
        assessed = resolve_routes(result.junction, assessed_routes)
    ok = result.passed[:, list(assessed)].all(axis=1)
    hits = np.flatnonzero(ok)
    mu_min = float(result.mu[hits[0]]) if len(hits) else None
    return CapacityVerdict(junction_name=result.junction.name,
                           assessed_routes=assessed, mu_min=mu_min)


@dataclass(frozen=True)
class LayoutComparison:
    verdicts: tuple[CapacityVerdict, ...]
    sweeps: tuple[SweepResult, ...]

    def relative_differences(self):
        """(name_a, name_b, (b_max_a - b_max_b) / b_max_b) for all pairs."""
        out = []
        for a in range(len(self.verdicts)):
            for b in range(len(self.verdicts)):
                if a == b:
                    continue
                va, vb = self.verdicts[a], self.verdicts[b]
                if va.feasible and vb.feasible:
                    rel = (va.b_max - vb.b_max) / vb.b_max
                else:
                    rel = None
                out.append((va.junction_name, vb.junction_name, rel))
        return out


def compare_layouts(layouts, program: OperatingProgram, mu_grid,
                    params: AnalysisParams = AnalysisParams(),
                    assessed_routes=None) -> LayoutComparison:
    """Sweep every layout on the same grid and compare capacity verdicts.

    Layouts must share the same route set; the assessed routes default to the
    most-conflicted route of the first layout and are held fixed across
    layouts so the verdicts stay comparable.
    """
    layouts = list(layouts)
    if len(layouts) < 2:
        raise AnalysisError("need at least two layouts to compare")
    names = [tuple(r.name for r in j.routes) for j in layouts]
    if any(n != names[0] for n in names):
        raise AnalysisError("layouts must share the same route set")
    if assessed_routes is None:
        lam = arrival_rates(program, layouts[0])
        assessed = (default_assessed_route(layouts[0], lam),)
    else:
        assessed = resolve_routes(layouts[0], assessed_routes)
    sweeps = tuple(sweep(j, program, mu_grid, params) for j in layouts)
    verdicts = tuple(min_service_rate(s, assessed) for s in sweeps)
    return LayoutComparison(verdicts=verdicts, sweeps=sweeps)


@dataclass(frozen=True)
class LineProgram:
    """Hourly train counts of one double-track line, applied per direction."""

    name: str
    regional: int = 0
    high_speed: int = 0
    freight: int = 0


# Bundled catalog of line operating programs (hourly counts per direction).
BUNDLED_LINE_PROGRAMS = (
    LineProgram("low_intensity_mixed", regional=2, freight=1),
    LineProgram("long_distance", high_speed=4),
    LineProgram("local_train", regional=4, high_speed=1),
    LineProgram("freight_train", freight=5),
    LineProgram("high_intensity_mixed", regional=4, high_speed=2, freight=2),
    LineProgram("urban_railway", regional=10),
)


def combine_line_programs(main: LineProgram, branch: LineProgram,
                          horizon: float = 60.0) -> OperatingProgram:
    """Operating program with the main line on r1/r3 and the branch on r2/r4."""
    demands = []
    for route in MAIN_LINE_ROUTES:
        demands.append(Demand(route=route, regional=main.regional,
                              high_speed=main.high_speed, freight=main.freight))
    for route in BRANCH_LINE_ROUTES:
        demands.append(Demand(route=route, regional=branch.regional,
                              high_speed=branch.high_speed, freight=branch.freight))
    return OperatingProgram(demands=tuple(demands), horizon=horizon)


@dataclass(frozen=True)
class GridCell:
    main: str
    branch: str
    layout: str
    verdict: CapacityVerdict


@dataclass(frozen=True)
class GridResult:
    cells: tuple[GridCell, ...]  # ordered (main, branch, layout)

    def b_max(self, main: str, branch: str, layout: str):
        for cell in self.cells:
            if (cell.main, cell.branch, cell.layout) == (main, branch, layout):
                return cell.verdict.b_max
        raise KeyError((main, branch, layout))


def _grid_cell(job) -> GridCell:
    layout, main, branch, mu_grid, params, assessed = job
    program = combine_line_programs(main, branch)
    result = sweep(layout, program, mu_grid, params)
    verdict = min_service_rate(result, assessed)
    return GridCell(main=main.name, branch=branch.name,
                    layout=layout.name, verdict=verdict)


def combination_grid(main_programs, branch_programs, layouts, mu_grid,
                     params: AnalysisParams = AnalysisParams(),
                     assessed_routes=(2,), workers: int | None = None) -> GridResult:
    """b_max for every (main program, branch program, layout) combination.

    The assessed route defaults to the B->A main-line route (id 2), the route
    whose conflicts differ between the flat and the overpass layout.
    """
    layouts = [  # all four routes carry traffic, so one space per layout
        (layout, build_state_space(layout, params.m)) for layout in layouts
    ]
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    jobs = [(layout, main, branch, np.asarray(mu_grid, dtype=float), params,
             resolve_routes(layout, assessed_routes))
            for layout, _ in layouts
            for main in main_programs
            for branch in branch_programs]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_grid_cell, [j for j in jobs]))
    else:
        cells = []
        space_by_name = {layout.name: space for layout, space in layouts}
        for layout, main, branch, grid, p, assessed in jobs:
            program = combine_line_programs(main, branch)
            result = sweep(layout, program, grid, p,
                           space=space_by_name[layout.name])
            cells.append(GridCell(main=main.name, branch=branch.name,
                                  layout=layout.name,
                                  verdict=min_service_rate(result, assessed)))
    order = sorted(range(len(jobs)), key=lambda i: (
        [m.name for m in main_programs].index(cells[i].main),
        [b.name for b in branch_programs].index(cells[i].branch),
        [l.name for l, _ in layouts].index(cells[i].layout)))
    return GridResult(cells=tuple(cells[i] for i in order))
