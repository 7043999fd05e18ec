"""PRISM-language export of the junction chain, plus a reader for round trips.

The chain is flattened to a single integer state variable; every merged
transition becomes one guarded command, and per-route reward structures expose
the queue length so an external probabilistic model checker can reproduce the
expected queue lengths.
"""

from __future__ import annotations

import re

import numpy as np
from scipy import sparse

from .ctmc import Generator, StateSpace


class PrismError(ValueError):
    pass


def _identifier(name: str) -> str:
    ident = re.sub(r"[^0-9a-zA-Z_]", "_", name)
    if not ident or ident[0].isdigit():
        ident = "m_" + ident
    return ident


def export_prism(space: StateSpace, generator: Generator) -> str:
    """Deterministic PRISM text for a space/generator pair."""
    if generator.dim != len(space):
        raise PrismError("generator dimension does not match state space")
    junction = space.junction
    n = generator.dim
    off = generator.off_diagonal().tocoo()
    order = np.lexsort((off.col, off.row))

    lines = [
        f"// junction: {junction.name}",
        f"// routes: {', '.join(r.name for r in junction.routes)}",
        f"// waiting slots per route: m={space.m}",
        f"// choice rate: M={generator.choice_rate:.12g}",
        f"// arriving mask: {list(map(int, space.arriving))}",
        f"// states: {n}",
        "ctmc",
        "",
        f"module {_identifier(junction.name)}",
        f"  s : [0..{n - 1}] init 0;",
    ]
    for idx in order:
        u, v, rate = int(off.row[idx]), int(off.col[idx]), float(off.data[idx])
        lines.append(f"  [] s={u} -> {rate:.17g} : (s'={v});")
    lines.append("endmodule")
    for i, route in enumerate(junction.routes):
        lines.append("")
        lines.append(f'rewards "queue_{_identifier(route.name)}"')
        for u in range(n):
            q = int(space.q[u, i])
            if q > 0:
                lines.append(f"  s={u} : {q};")
        lines.append("endrewards")
    lines.append("")
    return "\n".join(lines)


_CMD = re.compile(r"^\s*\[\]\s*s=(\d+)\s*->\s*([0-9.eE+-]+)\s*:\s*\(s'=(\d+)\)\s*;\s*$")
_REWARD_HEAD = re.compile(r'^rewards\s+"([^"]+)"\s*$')
_REWARD_ITEM = re.compile(r"^\s*s=(\d+)\s*:\s*(\d+)\s*;\s*$")
_STATE_VAR = re.compile(r"^\s*s\s*:\s*\[0\.\.(\d+)\]\s*init\s*0\s*;\s*$")


def parse_prism(text: str):
    """Read back a document produced by :func:`export_prism`.

    Returns (dimension, transitions, rewards) where transitions is a list of
    (from, to, rate) and rewards maps structure name -> {state: value}.
    """
    dim = None
    transitions = []
    rewards: dict[str, dict[int, int]] = {}
    current: dict[int, int] | None = None
    saw_ctmc = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("//"):
            continue
        if stripped == "ctmc":
            saw_ctmc = True
            continue
        if stripped.startswith("module") or stripped == "endmodule":
            continue
        m = _STATE_VAR.match(line)
        if m:
            dim = int(m.group(1)) + 1
            continue
        m = _CMD.match(line)
        if m:
            u, rate, v = int(m.group(1)), float(m.group(2)), int(m.group(3))
            transitions.append((u, v, rate))
            continue
        m = _REWARD_HEAD.match(stripped)
        if m:
            current = {}
            rewards[m.group(1)] = current
            continue
        if stripped == "endrewards":
            current = None
            continue
        m = _REWARD_ITEM.match(line)
        if m and current is not None:
            current[int(m.group(1))] = int(m.group(2))
            continue
        raise PrismError(f"line {lineno}: cannot parse {stripped!r}")
    if not saw_ctmc:
        raise PrismError("missing ctmc model type declaration")
    if dim is None:
        raise PrismError("missing state variable declaration")
    return dim, transitions, rewards


def generator_from_prism(text: str) -> sparse.csr_matrix:
    """Rebuild the generator matrix (diagonal included) from exported text."""
    dim, transitions, _ = parse_prism(text)
    if transitions:
        rows, cols, vals = zip(*[(u, v, r) for u, v, r in transitions])
    else:
        rows, cols, vals = [], [], []
    mat = sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    diag = np.asarray(mat.sum(axis=1)).ravel()
    return (mat - sparse.diags(diag)).tocsr()
