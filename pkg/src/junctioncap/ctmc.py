"""Continuous-time Markov chain construction for a junction.

States are vectors (q_1, b_1, ..., q_k, b_k): queue length and in-service flag
per route.  The reachable space is explored breadth-first from the empty state,
with every successor normalized through a forced-start closure: any queued
route that could start service unambiguously is started immediately, so only
genuine decision states (mutually conflicting candidates) remain.  Decisions
are resolved by high-rate "choice" transitions.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .model import Junction, RateSet

ARRIVAL, SERVICE, CHOICE = 0, 1, 2
KIND_NAMES = {ARRIVAL: "arrival", SERVICE: "service", CHOICE: "choice"}

DEFAULT_CHOICE_RATE = 600.0  # per minute, i.e. 10 per second
DEFAULT_STATE_CAP = 5_000_000


class CtmcError(ValueError):
    pass


class StateCapExceeded(CtmcError):
    """BFS exceeded the configured state-count cap (m/k too large)."""


def _compatible(i, b, conflicts):
    """Route i can start service: no conflicting route (incl. itself) busy."""
    return not any(conflicts[i][j] and b[j] for j in range(len(b)))


def _eligible(q, b, conflicts):
    k = len(q)
    return [i for i in range(k)
            if q[i] > 0 and _compatible(i, b, conflicts)]


def closure(q, b, conflicts):
    """Normalize a state by starting every unambiguously startable queued train.

    Repeatedly moves each eligible queued route that conflicts with no other
    eligible route into service.  Stops at a fixpoint: either no route is
    eligible, or the eligible routes mutually conflict (a decision state).
    Returns (q, b) as tuples; the result is unique.
    """
    q = list(q)
    b = list(b)
    k = len(q)
    for i in range(k):
        for j in range(i + 1, k):
            if b[i] and b[j] and conflicts[i][j]:
                raise CtmcError(f"infeasible state: routes {i} and {j} both in service")
    while True:
        elig = _eligible(q, b, conflicts)
        forced = [i for i in elig
                  if not any(conflicts[i][j] for j in elig if j != i)]
        if not forced:
            break
        for i in forced:
            b[i] = 1
            q[i] -= 1
    return tuple(q), tuple(b)


@dataclass(frozen=True)
class StateSpace:
    """Reachable, normalized state space plus the symbolic transition table.

    Transition rates are applied later by :func:`build_generator`, so one
    space can serve any number of rate assignments.
    """

    junction: Junction
    m: int
    arriving: tuple[bool, ...]
    states: tuple  # of (q tuple, b tuple)
    index: dict
    q: np.ndarray  # (n, k) queue lengths
    b: np.ndarray  # (n, k) in-service flags
    t_from: np.ndarray
    t_to: np.ndarray
    t_kind: np.ndarray
    t_route: np.ndarray

    root = 0

    def __len__(self):
        return len(self.states)

    def blocked(self) -> np.ndarray:
        """(n, k) bool: route i cannot start service in state s."""
        conflicts = self.junction.conflict_matrix()
        return (self.b @ conflicts.T) > 0

    def loss_states(self) -> np.ndarray:
        """(n, k) bool: an arrival on route i in state s would be rejected."""
        return self.blocked() & (self.q == self.m)


def build_state_space(junction: Junction, m: int, arriving=None,
                      cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    """Breadth-first exploration from the all-empty state.

    ``arriving`` masks the routes that receive traffic (default: all); routes
    outside the mask get no arrival transitions, keeping the chain irreducible
    when some arrival rates are zero.
    """
    if m < 1:
        raise CtmcError("need at least one waiting slot per route")
    k = junction.k
    if arriving is None:
        arriving = tuple(True for _ in range(k))
    else:
        arriving = tuple(bool(x) for x in arriving)
        if len(arriving) != k:
            raise CtmcError("arriving mask dimension mismatch")
    conflicts = [list(map(bool, row)) for row in junction.conflicts]

    root = (tuple([0] * k), tuple([0] * k))
    index = {root: 0}
    states = [root]
    todo = deque([0])
    t_from, t_to, t_kind, t_route = [], [], [], []

    def intern(state):
        u = index.get(state)
        if u is None:
            u = len(states)
            if u >= cap:
                raise StateCapExceeded(
                    f"state space exceeds cap of {cap} states (k={k}, m={m})")
            index[state] = u
            states.append(state)
            todo.append(u)
        return u

    while todo:
        u = todo.popleft()
        q, b = states[u]
        for i in range(k):
            if arriving[i]:
                if _compatible(i, b, conflicts):
                    nb = list(b)
                    nb[i] = 1
                    target = closure(q, nb, conflicts)
                elif q[i] < m:
                    nq = list(q)
                    nq[i] += 1
                    target = (tuple(nq), b)
                else:
                    target = None  # queue full: arriving train is lost
                if target is not None:
                    t_from.append(u)
                    t_to.append(intern(target))
                    t_kind.append(ARRIVAL)
                    t_route.append(i)
            if b[i]:
                nb = list(b)
                nb[i] = 0
                target = closure(q, nb, conflicts)
                t_from.append(u)
                t_to.append(intern(target))
                t_kind.append(SERVICE)
                t_route.append(i)
        for i in _eligible(q, b, conflicts):
            nq = list(q)
            nb = list(b)
            nq[i] -= 1
            nb[i] = 1
            target = closure(nq, nb, conflicts)
            t_from.append(u)
            t_to.append(intern(target))
            t_kind.append(CHOICE)
            t_route.append(i)

    n = len(states)
    qmat = np.array([s[0] for s in states], dtype=np.int32).reshape(n, k)
    bmat = np.array([s[1] for s in states], dtype=np.int8).reshape(n, k)
    return StateSpace(
        junction=junction, m=m, arriving=arriving,
        states=tuple(states), index=index, q=qmat, b=bmat,
        t_from=np.asarray(t_from, dtype=np.int64),
        t_to=np.asarray(t_to, dtype=np.int64),
        t_kind=np.asarray(t_kind, dtype=np.int8),
        t_route=np.asarray(t_route, dtype=np.int32),
    )


@dataclass(frozen=True)
class Generator:
    """Sparse transition-rate matrix; diagonal holds the negated row sums."""

    matrix: sparse.csr_matrix
    dim: int
    choice_rate: float

    def off_diagonal(self) -> sparse.csr_matrix:
        off = (self.matrix - sparse.diags(self.matrix.diagonal())).tocsr()
        off.eliminate_zeros()
        return off

    def exit_rates(self) -> np.ndarray:
        return -self.matrix.diagonal()


def transition_rates(space: StateSpace, rates: RateSet,
                     choice_rate: float = DEFAULT_CHOICE_RATE) -> np.ndarray:
    """Numeric rate per symbolic transition for one rate assignment."""
    if rates.k != space.junction.k:
        raise CtmcError("rate dimension does not match junction")
    if choice_rate <= 0:
        raise CtmcError("choice rate must be positive")
    lam = np.asarray(rates.lam)
    mu = np.asarray(rates.mu)
    lookup = np.stack([lam, mu, np.full(space.junction.k, choice_rate)])
    return lookup[space.t_kind, space.t_route]


def build_generator(space: StateSpace, rates: RateSet,
                    choice_rate: float = DEFAULT_CHOICE_RATE) -> Generator:
    """Assemble the generator matrix from the space's symbolic transitions.

    Transitions whose rate is zero (routes without traffic) are dropped;
    parallel transitions between the same pair of states sum their rates.
    """
    vals = transition_rates(space, rates, choice_rate)
    keep = vals > 0
    n = len(space)
    mat = sparse.coo_matrix(
        (vals[keep], (space.t_from[keep], space.t_to[keep])), shape=(n, n)
    ).tocsr()
    mat.sum_duplicates()
    diag = np.asarray(mat.sum(axis=1)).ravel() - mat.diagonal()
    mat = (mat - sparse.diags(mat.diagonal()) - sparse.diags(diag)).tocsr()
    return Generator(matrix=mat, dim=n, choice_rate=choice_rate)
