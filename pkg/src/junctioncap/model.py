"""Domain model: junctions, operating programs and the rates derived from them.

A junction is abstracted as a set of routes plus a symmetric boolean conflict
matrix; an operating program assigns per-route train counts (by class) over a
time horizon.  All analysis downstream consumes only the scalar rates computed
here (trains per minute).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TRAIN_CLASSES = ("regional", "high_speed", "freight")
PASSENGER_CLASSES = ("regional", "high_speed")


class ModelError(ValueError):
    """Invalid junction, program or rate input."""


@dataclass(frozen=True)
class Route:
    id: int
    name: str
    origin: str = ""
    destination: str = ""


@dataclass(frozen=True)
class Junction:
    """Junction infrastructure: routes plus a boolean conflict matrix.

    ``conflicts`` is stored as a tuple-of-tuples so instances stay hashable;
    use :meth:`conflict_matrix` for the numpy view.
    """

    routes: tuple[Route, ...]
    conflicts: tuple[tuple[bool, ...], ...]
    name: str = "junction"

    @property
    def k(self) -> int:
        return len(self.routes)

    def conflict_matrix(self) -> np.ndarray:
        return np.array(self.conflicts, dtype=bool)

    def route_index(self, name: str) -> int:
        for r in self.routes:
            if r.name == name:
                return r.id
        raise ModelError(f"unknown route name: {name!r}")


@dataclass(frozen=True)
class Demand:
    route: int
    regional: int = 0
    high_speed: int = 0
    freight: int = 0
    service_time: float | None = None  # mean minutes per train, optional

    @property
    def total(self) -> int:
        return self.regional + self.high_speed + self.freight

    @property
    def passenger(self) -> int:
        return self.regional + self.high_speed


@dataclass(frozen=True)
class OperatingProgram:
    demands: tuple[Demand, ...]
    horizon: float = 60.0  # minutes

    @property
    def total_trains(self) -> int:
        return sum(d.total for d in self.demands)


@dataclass(frozen=True)
class RateSet:
    """Per-route arrival/service rates plus process variation coefficients."""

    lam: tuple[float, ...]
    mu: tuple[float, ...]
    v_a: float = 0.8
    v_b: float = 0.3

    def __post_init__(self):
        if len(self.lam) != len(self.mu):
            raise ModelError("lambda and mu must have the same dimension")
        if any(x < 0 for x in self.lam):
            raise ModelError("arrival rates must be non-negative")
        if any(x <= 0 for x in self.mu):
            raise ModelError("service rates must be positive")
        if self.v_a < 0 or self.v_b < 0:
            raise ModelError("variation coefficients must be non-negative")

    @property
    def k(self) -> int:
        return len(self.lam)


def make_junction(names, conflict_pairs, name="junction", origins=None,
                  destinations=None) -> Junction:
    """Build a junction from route names and symmetric conflict pairs.

    ``conflict_pairs`` holds (name, name) tuples; the diagonal is always set.
    """
    routes = tuple(
        Route(i, n,
              origins[i] if origins else "",
              destinations[i] if destinations else "")
        for i, n in enumerate(names)
    )
    k = len(routes)
    idx = {r.name: r.id for r in routes}
    mat = np.eye(k, dtype=bool)
    for a, b in conflict_pairs:
        if a not in idx or b not in idx:
            missing = a if a not in idx else b
            raise ModelError(f"conflict pair names unknown route: {missing!r}")
        mat[idx[a], idx[b]] = True
        mat[idx[b], idx[a]] = True
    junction = Junction(routes, tuple(tuple(bool(x) for x in row) for row in mat), name)
    return validate_junction(junction)


def validate_junction(junction: Junction) -> Junction:
    """Check all junction invariants; returns the junction unchanged."""
    k = junction.k
    if k < 1:
        raise ModelError("junction needs at least one route")
    ids = [r.id for r in junction.routes]
    if ids != list(range(k)):
        raise ModelError(f"route ids must be contiguous 0..{k - 1}, got {ids}")
    names = [r.name for r in junction.routes]
    if len(set(names)) != k:
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ModelError(f"duplicate route names: {dupes}")
    mat = junction.conflict_matrix()
    if mat.shape != (k, k):
        raise ModelError(f"conflict matrix shape {mat.shape} != ({k}, {k})")
    for i in range(k):
        if not mat[i, i]:
            raise ModelError(f"conflict matrix diagonal must be set, zero at ({i}, {i})")
    for i in range(k):
        for j in range(i + 1, k):
            if mat[i, j] != mat[j, i]:
                raise ModelError(f"conflict matrix not symmetric at ({i}, {j})")
    return junction


def validate_program(program: OperatingProgram, junction: Junction) -> OperatingProgram:
    if program.horizon <= 0:
        raise ModelError("time horizon must be positive")
    for d in program.demands:
        if not 0 <= d.route < junction.k:
            raise ModelError(f"demand references unknown route id {d.route}")
        if min(d.regional, d.high_speed, d.freight) < 0:
            raise ModelError(f"negative train count on route {d.route}")
        if d.total == 0:
            raise ModelError(f"demand on route {d.route} has no trains")
        if d.service_time is not None and d.service_time <= 0:
            raise ModelError(f"non-positive service time on route {d.route}")
    return program


def arrival_rates(program: OperatingProgram, junction: Junction) -> np.ndarray:
    """Per-route arrival rate: trains on the route divided by the horizon."""
    validate_program(program, junction)
    lam = np.zeros(junction.k)
    for d in program.demands:
        lam[d.route] += d.total
    return lam / program.horizon


def service_rates(program: OperatingProgram, junction: Junction,
                  override: float | None = None) -> np.ndarray:
    """Per-route service rate: reciprocal of the train-weighted mean service time.

    With ``override`` set (sweep mode), every route gets 1/override instead and
    per-demand service times are ignored.
    """
    validate_program(program, junction)
    if override is not None:
        if override <= 0:
            raise ModelError("override service time must be positive")
        return np.full(junction.k, 1.0 / override)
    mu = np.zeros(junction.k)
    for i in range(junction.k):
        on_route = [d for d in program.demands if d.route == i]
        if not on_route:
            # never used: a route without demand has no arrivals and never
            # enters service, but RateSet still wants a positive rate
            mu[i] = 1.0
            continue
        missing = [d for d in on_route if d.service_time is None]
        if missing:
            raise ModelError(
                f"route {i} has demands without service times and no override was given")
        trains = sum(d.total for d in on_route)
        weighted = sum(d.service_time * d.total for d in on_route)
        mu[i] = trains / weighted
    return mu


def occupancy(lam: float, mu: float) -> float:
    """Occupancy rate rho = lambda / mu."""
    if mu <= 0:
        raise ModelError("service rate must be positive")
    return lam / mu


def passenger_ratio(program: OperatingProgram) -> float:
    """Share of passenger trains (regional + high-speed) in all trains."""
    total = program.total_trains
    if total == 0:
        raise ModelError("program has no trains")
    return sum(d.passenger for d in program.demands) / total
