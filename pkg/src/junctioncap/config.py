"""YAML configuration ingestion for the command line surface.

The configuration is one YAML document with a ``junction`` section, an
optional ``alternative`` layout sharing the same routes, an optional
``program`` section, solver/approximation ``params`` and, for grid runs, an
optional ``line_programs`` catalog.  Parsing is strict: unknown keys are
rejected with their path.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import yaml

from .analysis import AnalysisParams, LineProgram
from .ctmc import DEFAULT_CHOICE_RATE
from .model import (Demand, Junction, ModelError, OperatingProgram,
                    make_junction, validate_program)


class ConfigError(ValueError):
    pass


DEFAULT_MU_MIN = 0.01
DEFAULT_MU_MAX = 1.0
DEFAULT_MU_STEP = 0.01


@dataclass(frozen=True)
class ConfigParams:
    m: int = 5
    choice_rate: float = DEFAULT_CHOICE_RATE
    v_a: float = 0.8
    v_b: float = 0.3
    p_pt: float | None = None
    p_loss_limit: float | None = None
    mu_min: float = DEFAULT_MU_MIN
    mu_max: float = DEFAULT_MU_MAX
    mu_step: float = DEFAULT_MU_STEP

    def mu_grid(self) -> np.ndarray:
        n = int(round((self.mu_max - self.mu_min) / self.mu_step)) + 1
        grid = self.mu_min + self.mu_step * np.arange(n)
        return grid[grid <= self.mu_max + 1e-12]

    def analysis_params(self, **overrides) -> AnalysisParams:
        base = dict(m=self.m, choice_rate=self.choice_rate,
                    v_a=self.v_a, v_b=self.v_b, p_pt=self.p_pt)
        base.update(overrides)
        return AnalysisParams(**base)

    def echo(self) -> str:
        p_pt = "auto" if self.p_pt is None else f"{self.p_pt:.12g}"
        return (f"m={self.m} choice_rate={self.choice_rate:.12g} "
                f"v_a={self.v_a:.12g} v_b={self.v_b:.12g} p_pt={p_pt} "
                f"mu_grid=[{self.mu_min:.12g},{self.mu_max:.12g}] "
                f"step={self.mu_step:.12g}")


@dataclass(frozen=True)
class ConfigDocument:
    junction: Junction
    alternative: Junction | None
    program: OperatingProgram | None
    params: ConfigParams
    line_programs: tuple[LineProgram, ...] | None
    sha256: str


def _require_mapping(node, path):
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(node).__name__}")
    return node


def _check_keys(node, allowed, path):
    unknown = sorted(set(node) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}; allowed: {sorted(allowed)}")


def _number(node, key, path, default=None, required=False, positive=False):
    if key not in node or node[key] is None:
        if required:
            raise ConfigError(f"{path}.{key}: required")
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{path}.{key}: must be positive, got {value}")
    return value


def _parse_routes(node, path):
    routes = node.get("routes")
    if not isinstance(routes, list) or not routes:
        raise ConfigError(f"{path}.routes: expected a non-empty list")
    names, origins, destinations = [], [], []
    for i, entry in enumerate(routes):
        if isinstance(entry, str):
            names.append(entry)
            origins.append("")
            destinations.append("")
        elif isinstance(entry, dict):
            _check_keys(entry, {"name", "origin", "destination"},
                        f"{path}.routes[{i}]")
            if "name" not in entry:
                raise ConfigError(f"{path}.routes[{i}].name: required")
            names.append(str(entry["name"]))
            origins.append(str(entry.get("origin", "")))
            destinations.append(str(entry.get("destination", "")))
        else:
            raise ConfigError(f"{path}.routes[{i}]: expected name or mapping")
    return names, origins, destinations


def _parse_conflicts(node, path):
    conflicts = node.get("conflicts", [])
    if conflicts is None:
        conflicts = []
    if not isinstance(conflicts, list):
        raise ConfigError(f"{path}.conflicts: expected a list of pairs")
    pairs = []
    for i, pair in enumerate(conflicts):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"{path}.conflicts[{i}]: expected a pair of route names")
        pairs.append((str(pair[0]), str(pair[1])))
    return pairs


def _parse_junction(node, path, default_name) -> Junction:
    node = _require_mapping(node, path)
    _check_keys(node, {"name", "routes", "conflicts"}, path)
    names, origins, destinations = _parse_routes(node, path)
    pairs = _parse_conflicts(node, path)
    try:
        return make_junction(names, pairs, name=str(node.get("name", default_name)),
                             origins=origins, destinations=destinations)
    except ModelError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_program(node, junction, path) -> OperatingProgram:
    node = _require_mapping(node, path)
    _check_keys(node, {"horizon", "demands"}, path)
    horizon = _number(node, "horizon", path, default=60.0, positive=True)
    demand_nodes = node.get("demands")
    if not isinstance(demand_nodes, list) or not demand_nodes:
        raise ConfigError(f"{path}.demands: expected a non-empty list")
    demands = []
    for i, d in enumerate(demand_nodes):
        dp = f"{path}.demands[{i}]"
        d = _require_mapping(d, dp)
        _check_keys(d, {"route", "regional", "high_speed", "freight",
                        "service_time"}, dp)
        if "route" not in d:
            raise ConfigError(f"{dp}.route: required")
        route = d["route"]
        if isinstance(route, str):
            try:
                route = junction.route_index(route)
            except ModelError as exc:
                raise ConfigError(f"{dp}.route: {exc}") from exc
        elif not isinstance(route, int) or not 0 <= route < junction.k:
            raise ConfigError(f"{dp}.route: unknown route {route!r}")
        counts = {}
        for cls in ("regional", "high_speed", "freight"):
            value = d.get(cls, 0)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError(f"{dp}.{cls}: expected a non-negative integer")
            counts[cls] = value
        service_time = _number(d, "service_time", dp, positive=True)
        demands.append(Demand(route=route, service_time=service_time, **counts))
    program = OperatingProgram(demands=tuple(demands), horizon=float(horizon))
    try:
        return validate_program(program, junction)
    except ModelError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_params(node) -> ConfigParams:
    path = "params"
    if node is None:
        return ConfigParams()
    node = _require_mapping(node, path)
    _check_keys(node, {"m", "choice_rate", "v_a", "v_b", "p_pt",
                       "p_loss_limit", "mu_grid"}, path)
    m = node.get("m", 5)
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        raise ConfigError(f"{path}.m: expected a positive integer")
    kwargs = dict(
        m=m,
        choice_rate=float(_number(node, "choice_rate", path,
                                  default=DEFAULT_CHOICE_RATE, positive=True)),
        v_a=float(_number(node, "v_a", path, default=0.8)),
        v_b=float(_number(node, "v_b", path, default=0.3)),
    )
    p_pt = _number(node, "p_pt", path)
    if p_pt is not None:
        if not 0 <= p_pt <= 1:
            raise ConfigError(f"{path}.p_pt: must lie in [0, 1]")
        kwargs["p_pt"] = float(p_pt)
    p_loss = _number(node, "p_loss_limit", path)
    if p_loss is not None:
        if not 0 < p_loss < 1:
            raise ConfigError(f"{path}.p_loss_limit: must lie in (0, 1)")
        kwargs["p_loss_limit"] = float(p_loss)
    if "mu_grid" in node and node["mu_grid"] is not None:
        g = _require_mapping(node["mu_grid"], f"{path}.mu_grid")
        _check_keys(g, {"min", "max", "step"}, f"{path}.mu_grid")
        kwargs["mu_min"] = float(_number(g, "min", f"{path}.mu_grid",
                                         default=DEFAULT_MU_MIN, positive=True))
        kwargs["mu_max"] = float(_number(g, "max", f"{path}.mu_grid",
                                         default=DEFAULT_MU_MAX, positive=True))
        kwargs["mu_step"] = float(_number(g, "step", f"{path}.mu_grid",
                                          default=DEFAULT_MU_STEP, positive=True))
        if kwargs["mu_max"] < kwargs["mu_min"]:
            raise ConfigError(f"{path}.mu_grid: max below min")
    return ConfigParams(**kwargs)


def _parse_line_programs(node):
    path = "line_programs"
    if not isinstance(node, list) or not node:
        raise ConfigError(f"{path}: expected a non-empty list")
    programs = []
    for i, entry in enumerate(node):
        ep = f"{path}[{i}]"
        entry = _require_mapping(entry, ep)
        _check_keys(entry, {"name", "regional", "high_speed", "freight"}, ep)
        if "name" not in entry:
            raise ConfigError(f"{ep}.name: required")
        counts = {}
        for cls in ("regional", "high_speed", "freight"):
            value = entry.get(cls, 0)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError(f"{ep}.{cls}: expected a non-negative integer")
            counts[cls] = value
        if sum(counts.values()) == 0:
            raise ConfigError(f"{ep}: needs at least one train")
        programs.append(LineProgram(name=str(entry["name"]), **counts))
    names = [p.name for p in programs]
    if len(set(names)) != len(names):
        raise ConfigError(f"{path}: duplicate program names")
    return tuple(programs)


def parse_config(text: str) -> ConfigDocument:
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "?"
        raise ConfigError(f"YAML syntax error at {where}: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML error: {exc}") from exc
    doc = _require_mapping(doc, "document")
    _check_keys(doc, {"junction", "alternative", "program", "params",
                      "line_programs"}, "document")
    if "junction" not in doc:
        raise ConfigError("document.junction: required")
    junction = _parse_junction(doc["junction"], "junction", "junction")

    alternative = None
    if doc.get("alternative") is not None:
        alt_node = _require_mapping(doc["alternative"], "alternative")
        _check_keys(alt_node, {"name", "conflicts"}, "alternative")
        names = [r.name for r in junction.routes]
        pairs = _parse_conflicts(alt_node, "alternative")
        try:
            alternative = make_junction(
                names, pairs, name=str(alt_node.get("name", "alternative")),
                origins=[r.origin for r in junction.routes],
                destinations=[r.destination for r in junction.routes])
        except ModelError as exc:
            raise ConfigError(f"alternative: {exc}") from exc

    program = None
    if doc.get("program") is not None:
        program = _parse_program(doc["program"], junction, "program")

    params = _parse_params(doc.get("params"))

    line_programs = None
    if doc.get("line_programs") is not None:
        line_programs = _parse_line_programs(doc["line_programs"])

    sha = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return ConfigDocument(junction=junction, alternative=alternative,
                          program=program, params=params,
                          line_programs=line_programs, sha256=sha)
