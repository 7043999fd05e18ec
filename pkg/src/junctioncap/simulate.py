"""Discrete-event simulation of junction operation.

Validation apparatus for the analytical chain: exponential inter-arrival and
service times per route, FIFO queues, conflict-respecting service starts, and
minute-wise queue-length snapshots aggregated over independent replications.
"""

from __future__ import annotations

import heapq
import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .model import Junction, RateSet

_ARRIVAL, _COMPLETION = 0, 1
_PURPOSE_ARRIVAL, _PURPOSE_SERVICE, _PURPOSE_TIE = 0, 1, 2


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    limit_m: int | None = None  # max queued trains per route; None = unlimited
    hours: float = 22.0
    warmup_drop: float = 1.0  # hours removed from each end of every run
    runs: int = 100
    seed: int = 0
    snapshot_interval: float = 1.0  # minutes
    workers: int = 1
    keep_snapshots: bool = False

    def __post_init__(self):
        if self.hours <= 2 * self.warmup_drop:
            raise SimulationError("run length must exceed twice the warmup drop")
        if self.runs < 1:
            raise SimulationError("need at least one run")
        if self.snapshot_interval <= 0:
            raise SimulationError("snapshot interval must be positive")


@dataclass(frozen=True)
class RunResult:
    mean_queue: np.ndarray  # (k,) snapshot mean inside the evaluation window
    arrivals: np.ndarray
    served: np.ndarray
    rejected: np.ndarray
    remaining: np.ndarray  # queued + in service at the end of the run
    wall_clock: float
    snapshots: np.ndarray | None = None  # (n_snapshots, k) when kept


@dataclass(frozen=True)
class SimulationResult:
    mean_queue: np.ndarray  # (k,) mean of per-run snapshot means
    sigma: np.ndarray  # (k,) sample std of per-run means across runs
    arrivals: np.ndarray  # (k,) totals over all runs
    served: np.ndarray
    rejected: np.ndarray
    p_loss_empirical: np.ndarray  # rejected / arrivals (nan without arrivals)
    run_means: np.ndarray  # (runs, k)
    wall_clock: tuple[float, ...]
    runs: tuple[RunResult, ...]


def _stream(seed: int, run: int, purpose: int, route: int) -> np.random.Generator:
    # one independent stream per (run, purpose, route): adding a route or a
    # run never perturbs the draws of any other stream
    return np.random.default_rng(np.random.SeedSequence([seed, run, purpose, route]))


def _run_once(junction: Junction, rates: RateSet, config: SimConfig,
              run_index: int) -> RunResult:
    started = time.perf_counter()
    k = junction.k
    conflicts = junction.conflict_matrix()
    lam = np.asarray(rates.lam)
    mu = np.asarray(rates.mu)
    limit = config.limit_m

    arrival_rng = [_stream(config.seed, run_index, _PURPOSE_ARRIVAL, i) for i in range(k)]
    service_rng = [_stream(config.seed, run_index, _PURPOSE_SERVICE, i) for i in range(k)]
    tie_rng = _stream(config.seed, run_index, _PURPOSE_TIE, 0)

    t_end = config.hours * 60.0
    eval_start = config.warmup_drop * 60.0
    eval_end = t_end - config.warmup_drop * 60.0

    queue = np.zeros(k, dtype=np.int64)
    busy = np.zeros(k, dtype=bool)
    arrivals = np.zeros(k, dtype=np.int64)
    served = np.zeros(k, dtype=np.int64)
    rejected = np.zeros(k, dtype=np.int64)

    seq = itertools.count()  # stable order for simultaneous events
    events: list[tuple[float, int, int, int]] = []

    def push(t, kind, route):
        heapq.heappush(events, (t, next(seq), kind, route))

    def schedule_arrival(route, now):
        t = now + arrival_rng[route].exponential(1.0 / lam[route])
        if t <= t_end:
            push(t, _ARRIVAL, route)

    def start_service(route, now):
        assert not (busy & conflicts[route]).any(), \
            f"conflict violated starting route {route}"
        busy[route] = True
        push(now + service_rng[route].exponential(1.0 / mu[route]), _COMPLETION, route)

    for i in range(k):
        if lam[i] > 0:
            schedule_arrival(i, 0.0)

    snap_times = np.arange(eval_start + config.snapshot_interval,
                           eval_end + 1e-9, config.snapshot_interval)
    snapshots = np.zeros((len(snap_times), k), dtype=np.int64)
    snap_idx = 0

    while events:
        t, _, kind, route = heapq.heappop(events)
        while snap_idx < len(snap_times) and snap_times[snap_idx] < t:
            snapshots[snap_idx] = queue
            snap_idx += 1
        if kind == _ARRIVAL:
            arrivals[route] += 1
            schedule_arrival(route, t)
            if not (busy & conflicts[route]).any():
                start_service(route, t)
            elif limit is not None and queue[route] >= limit:
                rejected[route] += 1
            else:
                queue[route] += 1
        else:
            busy[route] = False
            served[route] += 1
            # start everything that is now unambiguously startable; break
            # remaining mutually conflicting candidates uniformly at random
            while True:
                free = ~(conflicts @ busy)
                eligible = np.flatnonzero((queue > 0) & free)
                if len(eligible) == 0:
                    break
                sub = conflicts[np.ix_(eligible, eligible)]
                forced = eligible[~(sub.sum(axis=1) > 1)]
                if len(forced) > 0:
                    chosen = forced
                else:
                    chosen = [eligible[tie_rng.integers(len(eligible))]]
                for i in chosen:
                    queue[i] -= 1
                    start_service(i, t)
    while snap_idx < len(snap_times):
        snapshots[snap_idx] = queue
        snap_idx += 1

    mean_queue = snapshots.mean(axis=0) if len(snapshots) else np.zeros(k)
    return RunResult(
        mean_queue=mean_queue,
        arrivals=arrivals, served=served, rejected=rejected,
        remaining=queue + busy.astype(np.int64),
        wall_clock=time.perf_counter() - started,
        snapshots=snapshots if config.keep_snapshots else None,
    )


def aggregate(run_means: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and sample standard deviation of per-run queue means."""
    run_means = np.atleast_2d(np.asarray(run_means, dtype=float))
    if run_means.shape[0] < 1:
        raise SimulationError("need at least one run to aggregate")
    mean = run_means.mean(axis=0)
    if run_means.shape[0] == 1:
        sigma = np.zeros_like(mean)
    else:
        sigma = run_means.std(axis=0, ddof=1)
    return mean, sigma


def simulate(junction: Junction, rates: RateSet,
             config: SimConfig = SimConfig()) -> SimulationResult:
    """Run all replications and aggregate queue statistics per route.

    Deterministic for a fixed (seed, config, inputs) regardless of the worker
    count: every run derives its random streams from (seed, run index) alone.
    """
    if rates.k != junction.k:
        raise SimulationError("rate dimension does not match junction")
    indices = range(config.runs)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            runs = list(pool.map(_run_once,
                                 itertools.repeat(junction),
                                 itertools.repeat(rates),
                                 itertools.repeat(config),
                                 indices))
    else:
        runs = [_run_once(junction, rates, config, i) for i in indices]

    run_means = np.stack([r.mean_queue for r in runs])
    mean, sigma = aggregate(run_means)
    arrivals = np.sum([r.arrivals for r in runs], axis=0)
    served = np.sum([r.served for r in runs], axis=0)
    rejected = np.sum([r.rejected for r in runs], axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_loss = np.where(arrivals > 0, rejected / np.maximum(arrivals, 1), np.nan)
    return SimulationResult(
        mean_queue=mean, sigma=sigma,
        arrivals=arrivals, served=served, rejected=rejected,
        p_loss_empirical=p_loss, run_means=run_means,
        wall_clock=tuple(r.wall_clock for r in runs),
        runs=tuple(runs),
    )
