"""Stationary analysis of the junction chain.

All solvers anchor the balance equations at the most probable state (found by
a short burst of power iteration): that state's probability is fixed to one,
its balance equation is dropped, and the remaining nonsingular sparse system
is solved, after which the vector is normalized.  Anchoring at the dominant
state keeps the unknowns in [0, 1] regardless of load, which keeps the linear
algebra well scaled even for heavily overloaded chains.

Small systems use a sparse LU factorization of the anchored system.  Larger
ones use GMRES preconditioned with an incomplete LU; the preconditioner and
the previous solution can be carried from one solve to the next, which makes
service-rate sweeps cheap.  A plain uniformization power iteration is kept as
a fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import LinearOperator, gmres, spilu, spsolve

from .ctmc import DEFAULT_CHOICE_RATE, Generator, StateSpace, build_generator, build_state_space
from .model import Junction, RateSet

DEFAULT_TOL = 1e-10
DIRECT_SOLVE_LIMIT = 2_000


class SolverError(RuntimeError):
    pass


class ReducibleChainError(SolverError):
    """The chain is not irreducible; results would depend on the start state."""


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    residual: float
    iterations: int
    method: str

    def __post_init__(self):
        total = float(self.pi.sum())
        if abs(total - 1.0) > 1e-12:
            raise SolverError(f"stationary vector sums to {total}, not 1")


def _check_irreducible(gen: Generator):
    if gen.dim == 1:
        return
    off = gen.off_diagonal()
    n_comp, _ = csgraph.connected_components(off, directed=True, connection="strong")
    if n_comp > 1:
        raise ReducibleChainError(
            f"generator has {n_comp} strongly connected components; "
            "check for routes with zero arrival rate outside the arriving mask")


def _finish(pi: np.ndarray, gen: Generator, tol: float, iterations: int,
            method: str) -> StationaryDistribution:
    if not np.all(np.isfinite(pi)):
        raise SolverError("solver produced non-finite probabilities")
    if pi.min() < -1e-9:
        raise SolverError(f"negative stationary probability {pi.min():.3e}")
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    residual = float(np.abs(pi @ gen.matrix).max())
    if residual > tol:
        raise SolverError(
            f"residual {residual:.3e} above tolerance {tol:.1e} ({method})")
    return StationaryDistribution(pi=pi, residual=residual,
                                  iterations=iterations, method=method)


def _rough_estimate(gen: Generator, iterations: int,
                    start: np.ndarray | None = None) -> np.ndarray:
    """Cheap power-iteration estimate, good enough to locate the mode."""
    n = gen.dim
    rate = 1.01 * float(gen.exit_rates().max())
    pt = (sparse.identity(n, format="csr")
          + gen.matrix * (1.0 / rate)).transpose().tocsr()
    pi = np.full(n, 1.0 / n) if start is None else start.copy()
    for _ in range(iterations):
        pi = pt @ pi
        pi /= pi.sum()
    return pi

def _anchored_system(gen: Generator, anchor: int):
    """Balance equations with state ``anchor`` fixed to probability one."""
    a = gen.matrix.transpose().tocsr()
    keep = np.arange(gen.dim) != anchor
    b = a[keep][:, keep].tocsr()
    rhs = -a[keep][:, [anchor]].toarray().ravel()
    return b, rhs, keep

def _expand(x: np.ndarray, anchor: int, keep: np.ndarray) -> np.ndarray:
    pi = np.empty(len(keep))
    pi[anchor] = 1.0
    pi[keep] = x
    return np.clip(pi, 0.0, None)

def _solve_direct(gen: Generator, tol: float) -> StationaryDistribution:
    anchor = int(np.argmax(_rough_estimate(gen, 200)))
    b, rhs, keep = _anchored_system(gen, anchor)
    x = spsolve(b.tocsc(), rhs)
    pi = _expand(np.atleast_1d(x), anchor, keep)
    return _finish(pi, gen, tol, iterations=1, method="direct")

class WarmStartSolver:
    """Krylov solver that carries its state from one generator to the next.

    Intended for sweeps over many nearby rate assignments on one state space:
    the previous solution seeds both the anchor choice and the iteration, and
    the incomplete-LU preconditioner is reused until it goes stale.
    """

    def __init__(self, tol: float = DEFAULT_TOL, drop_tol: float = 1e-2,
                 fill_factor: float = 5.0, burst: int = 20,
                 max_bursts: int = 12):
        self.tol = tol
        self.drop_tol = drop_tol
        self.fill_factor = fill_factor
        self.burst = burst
        self.max_bursts = max_bursts
        self._prev: np.ndarray | None = None
        self._anchor = -1
        self._precond = None

    def _factor(self, b):
        ilu = spilu(b.tocsc(), drop_tol=self.drop_tol,
                    fill_factor=self.fill_factor)
        self._precond = LinearOperator(b.shape, ilu.solve)

    def solve(self, gen: Generator) -> StationaryDistribution:
        if gen.dim == 1:
            return StationaryDistribution(pi=np.ones(1), residual=0.0,
                                          iterations=0, method="trivial")
        if self._prev is None:
            _check_irreducible(gen)  # structure is shared by later solves
        elif len(self._prev) != gen.dim:
            raise SolverError("generator dimension changed mid-sweep")
        est = _rough_estimate(gen, 300 if self._prev is None else 30,
                              self._prev)
        anchor = int(np.argmax(est))
        if anchor != self._anchor:
            self._anchor = anchor
            self._precond = None
        b, rhs, keep = _anchored_system(gen, anchor)
        x = est[keep] / est[anchor]
        qt = gen.matrix.transpose().tocsr()
        iterations = 0
        for attempt in range(self.max_bursts):
            if self._precond is None:
                try:
                    self._factor(b)
                except RuntimeError as exc:  # singular or degenerate pivot
                    raise SolverError(f"incomplete LU failed: {exc}") from exc
            x, _ = gmres(b, rhs, M=self._precond, x0=x, rtol=1e-13, atol=0.0,
                         maxiter=self.burst, restart=self.burst)
            iterations += self.burst
            pi = _expand(x, anchor, keep)
            pi_n = pi / pi.sum()
            residual = float(np.abs(qt @ pi_n).max())
            if residual <= self.tol:
                self._prev = pi_n
                return _finish(pi_n, gen, self.tol, iterations=iterations,
                               method="krylov")
            if attempt % 2 == 1:
                self._precond = None  # preconditioner has gone stale
        # iteration stalled; a full factorization settles it
        self._prev = None
        self._anchor = -1
        self._precond = None
        return _solve_direct(gen, self.tol)

def _solve_krylov(gen: Generator, tol: float) -> StationaryDistribution:
    return WarmStartSolver(tol=tol).solve(gen)


def _solve_uniformized(gen: Generator, tol: float,
                       max_iter: int) -> StationaryDistribution:
    n = gen.dim
    rate = 1.01 * float(gen.exit_rates().max())  # slack keeps the DTMC aperiodic
    p = (sparse.identity(n, format="csr") + gen.matrix * (1.0 / rate)).tocsr()
    pt = p.transpose().tocsr()
    qt = gen.matrix.transpose().tocsr()
    pi = np.full(n, 1.0 / n)
    check_every = 50
    for it in range(1, max_iter + 1):
        pi = pt @ pi
        if it % check_every == 0:
            pi = pi / pi.sum()
            residual = float(np.abs(qt @ pi).max())
            if residual <= tol:
                return _finish(pi, gen, tol, iterations=it, method="uniformization")
    raise SolverError(
        f"power iteration did not reach residual {tol:.1e} in {max_iter} steps")


def stationary_distribution(gen: Generator, tol: float = DEFAULT_TOL,
                            max_iter: int = 2_000_000,
                            direct_limit: int = DIRECT_SOLVE_LIMIT,
                            method: str | None = None) -> StationaryDistribution:
    """Solve pi Q = 0, sum(pi) = 1 for an irreducible generator.

    ``method`` forces "direct", "krylov", or "uniformization"; by default the
    direct solver handles anything up to ``direct_limit`` states and the
    preconditioned Krylov solver takes the rest.
    """
    if gen.dim < 1:
        raise SolverError("empty generator")
    if gen.dim == 1:
        return StationaryDistribution(pi=np.ones(1), residual=0.0,
                                      iterations=0, method="trivial")
    _check_irreducible(gen)
    if method is None:
        method = "direct" if gen.dim <= direct_limit else "krylov"
    if method == "direct":
        return _solve_direct(gen, tol)
    if method == "krylov":
        return _solve_krylov(gen, tol)
    if method == "uniformization":
        return _solve_uniformized(gen, tol, max_iter)
    raise SolverError(f"unknown method {method!r}")


def expected_queue_lengths(dist: StationaryDistribution,
                           space: StateSpace) -> np.ndarray:
    """Per-route expectation of the queue length under the stationary law."""
    return dist.pi @ space.q


def expected_queue_length(dist: StationaryDistribution, space: StateSpace,
                          route: int) -> float:
    if not 0 <= route < space.junction.k:
        raise SolverError(f"route id {route} out of range")
    return float(dist.pi @ space.q[:, route])


def loss_probabilities(dist: StationaryDistribution,
                       space: StateSpace) -> np.ndarray:
    """Per-route probability that an arrival finds its queue full and blocked.

    By PASTA this equals the long-run fraction of rejected arrivals.
    """
    return dist.pi @ space.loss_states()


def loss_probability(dist: StationaryDistribution, space: StateSpace,
                     route: int) -> float:
    if not 0 <= route < space.junction.k:
        raise SolverError(f"route id {route} out of range")
    return float(dist.pi @ space.loss_states()[:, route])


@dataclass(frozen=True)
class QueueSizing:
    """Result of the minimal waiting-slot search."""

    m: int | None  # None: limit not met within m_max
    p_loss_limit: float
    trace: tuple[tuple[int, float], ...]  # (m, worst-route p_loss) per step

    @property
    def feasible(self) -> bool:
        return self.m is not None


def min_waiting_slots(junction: Junction, rates: RateSet, p_star: float,
                      m_max: int = 20,
                      choice_rate: float = DEFAULT_CHOICE_RATE,
                      tol: float = DEFAULT_TOL) -> QueueSizing:
    """Smallest m whose worst-route loss probability stays within ``p_star``."""
    if not 0 < p_star < 1:
        raise SolverError("loss limit must lie strictly between 0 and 1")
    if m_max < 1:
        raise SolverError("m_max must be at least 1")
    arriving = [x > 0 for x in rates.lam]
    trace = []
    for m in range(1, m_max + 1):
        space = build_state_space(junction, m, arriving=arriving)
        gen = build_generator(space, rates, choice_rate)
        dist = stationary_distribution(gen, tol=tol)
        worst = float(loss_probabilities(dist, space).max())
        trace.append((m, worst))
        if worst <= p_star:
            return QueueSizing(m=m, p_loss_limit=p_star, trace=tuple(trace))
    return QueueSizing(m=None, p_loss_limit=p_star, trace=tuple(trace))
