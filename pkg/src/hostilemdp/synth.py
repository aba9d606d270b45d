"""Maximum-reachability solvers and strategy synthesis.

The mission objective is a two-stage reachability property: the vehicle must
stay alive until it reaches a pickup state from which delivery is still
possible, and from there stay alive until it reaches a dropoff state.  Both
stages reduce to constrained maximum reachability, solved either by value
iteration (sparse, monotone from below) or by the standard occupation LP.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.optimize
import scipy.sparse

from .envmodel import DROPOFF, PICKUP
from .mdpbuild import Mdp


class ConvergenceError(RuntimeError):
    """Raised when value iteration exhausts its iteration budget."""

    def __init__(self, message: str, values: np.ndarray, iterations: int, residual: float):
        super().__init__(message)
        self.values = values
        self.iterations = iterations
        self.residual = residual


@dataclass
class ValueResult:
    """Per-state reachability values plus solver bookkeeping."""

    values: np.ndarray
    positive: frozenset[int]
    method: str
    iterations: Optional[int] = None
    residual: Optional[float] = None


def qualitative_reach(mdp: Mdp, target: frozenset[int], allowed: frozenset[int]) -> frozenset[int]:
    """States with positive probability of hitting ``target`` inside ``allowed``.

    Graph fixpoint only, no numerics: grow the target set backwards through
    ``allowed`` states that have some action with a successor already inside.
    """
    inside = set(target)
    # reverse adjacency restricted to candidate source states
    preds: dict[int, set[int]] = {}
    for s in range(mdp.n_states):
        if s in allowed and s not in target:
            for row in mdp.rows[s]:
                for succ, p in row:
                    if p > 0.0:
                        preds.setdefault(succ, set()).add(s)
    frontier = list(inside)
    while frontier:
        nxt = []
        for t in frontier:
            for s in preds.get(t, ()):
                if s not in inside:
                    inside.add(s)
                    nxt.append(s)
        frontier = nxt
    return frozenset(inside)


def _free_structure(mdp: Mdp, target: frozenset[int], positive: frozenset[int]):
    """Index the states whose values are genuinely unknown.

    Target states are pinned to one, states outside ``positive`` to zero;
    everything else becomes a row block in a sparse choice matrix.
    """
    free = sorted(positive - target)
    pos_of = {s: i for i, s in enumerate(free)}
    data, cols, rowptr = [], [], [0]
    const = []
    blocks = [0]
    for s in free:
        for row in mdp.rows[s]:
            c = 0.0
            for succ, p in row:
                if succ in target:
                    c += p
                elif succ in pos_of:
                    data.append(p)
                    cols.append(pos_of[succ])
            const.append(c)
            rowptr.append(len(data))
        blocks.append(blocks[-1] + len(mdp.rows[s]))
    matrix = scipy.sparse.csr_matrix(
        (data, cols, rowptr), shape=(len(const), len(free))
    )
    return free, matrix, np.asarray(const), np.asarray(blocks)


def _assemble(mdp, target, positive, free, x):
    values = np.zeros(mdp.n_states)
    values[list(target)] = 1.0
    values[free] = x
    return values


def max_reach_vi(
    mdp: Mdp,
    target: frozenset[int],
    allowed: frozenset[int],
    tol: float = 1e-9,
    max_iter: int = 10**6,
    sweep_hook=None,
) -> ValueResult:
    """Value iteration for max P[allowed U target], from below.

    Iterates x <- max(x, max_a (c_a + Q_a x)) until the sup-norm step falls
    under ``tol``; raises :class:`ConvergenceError` past ``max_iter`` sweeps.
    ``sweep_hook``, when given, receives a copy of the free-state vector
    after every sweep (free states are the positive non-target ones, in
    ascending state order).
    """
    positive = qualitative_reach(mdp, target, allowed)
    free, matrix, const, blocks = _free_structure(mdp, target, positive)
    if not free:
        return ValueResult(_assemble(mdp, target, positive, free, np.zeros(0)),
                           positive, "vi", iterations=0, residual=0.0)
    x = np.zeros(len(free))
    starts = blocks[:-1]
    for sweep in range(1, max_iter + 1):
        y = const + matrix @ x
        grouped = np.maximum.reduceat(y, starts)
        new = np.maximum(x, grouped)
        residual = float(np.max(np.abs(new - x)))
        x = new
        if sweep_hook is not None:
            sweep_hook(x.copy())
        if residual <= tol:
            return ValueResult(_assemble(mdp, target, positive, free, x),
                               positive, "vi", iterations=sweep, residual=residual)
    raise ConvergenceError(
        f"value iteration did not converge within {max_iter} sweeps "
        f"(last residual {residual:.3e})",
        _assemble(mdp, target, positive, free, x), max_iter, residual,
    )


def max_reach_lp(
    mdp: Mdp,
    target: frozenset[int],
    allowed: frozenset[int],
) -> ValueResult:
    """LP route to the same values: minimize sum(x) over the Bellman cone.

    Each enabled action of a free state yields one constraint
    x_s >= c_a + sum_succ P(s,a,succ) x_succ; the minimal feasible point is
    the value vector.  Solved with HiGHS through scipy.
    """
    positive = qualitative_reach(mdp, target, allowed)
    free, matrix, const, blocks = _free_structure(mdp, target, positive)
    if not free:
        return ValueResult(_assemble(mdp, target, positive, free, np.zeros(0)),
                           positive, "lp")
    n_choices = matrix.shape[0]
    # rows of (Q - E) x <= -c where E picks the owning state of each choice
    owner_rows = np.repeat(np.arange(len(free)), np.diff(blocks))
    picker = scipy.sparse.csr_matrix(
        (np.ones(n_choices), (np.arange(n_choices), owner_rows)),
        shape=(n_choices, len(free)),
    )
    res = scipy.optimize.linprog(
        c=np.ones(len(free)),
        A_ub=(matrix - picker).tocsc(),
        b_ub=-const,
        bounds=(0.0, 1.0),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"LP solve failed: {res.message}")
    return ValueResult(_assemble(mdp, target, positive, free, res.x),
                       positive, "lp", iterations=int(res.nit))


_SOLVERS = {"vi": max_reach_vi, "lp": max_reach_lp}


def solve_reachability(mdp, target, allowed, method: str = "vi", **kw) -> ValueResult:
    try:
        solver = _SOLVERS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}, expected one of {sorted(_SOLVERS)}")
    return solver(mdp, target, allowed, **kw)


def extract_policy(
    mdp: Mdp,
    result: ValueResult,
    target: frozenset[int],
    tie_tol: float = 1e-9,
) -> dict[int, int]:
    """Memoryless policy attaining the values, defined on positive non-target states.

    Plain argmax can stall on a cycle whose value equals the maximum (the
    backup is tight along the loop), so among near-maximal actions we require
    strict progress: pick the lowest-index action with a successor closer to
    the target inside the near-maximal edge graph.
    """
    values = result.values
    candidates: dict[int, list[int]] = {}
    for s in result.positive - target:
        backups = []
        for a, row in zip(mdp.enabled[s], mdp.rows[s]):
            backups.append((sum(p * values[succ] for succ, p in row), a))
        best = max(b for b, _ in backups)
        candidates[s] = [a for b, a in backups if b >= best - tie_tol]

    # BFS distances to target through candidate edges only
    preds: dict[int, list[int]] = {}
    for s, acts in candidates.items():
        seen = set()
        for a in acts:
            for succ, p in mdp.row(s, a):
                if p > 0.0 and succ not in seen:
                    seen.add(succ)
                    preds.setdefault(succ, []).append(s)
    dist = {t: 0 for t in target}
    frontier = list(target)
    level = 0
    while frontier:
        level += 1
        nxt = []
        for t in frontier:
            for s in preds.get(t, ()):
                if s not in dist:
                    dist[s] = level
                    nxt.append(s)
        frontier = nxt

    policy: dict[int, int] = {}
    for s, acts in candidates.items():
        if s not in dist:
            raise RuntimeError(
                f"state {s} has positive value but no progressing action; "
                f"tie tolerance {tie_tol} may be too small"
            )
        for a in acts:
            if any(p > 0.0 and dist.get(succ, np.inf) < dist[s] for succ, p in mdp.row(s, a)):
                policy[s] = a
                break
    return policy


@dataclass
class MissionStrategy:
    """Two-phase strategy: head for a viable pickup, then for the dropoff."""

    value: float
    first: dict[int, int]
    second: dict[int, int]
    switch: frozenset[int]
    sat_deliverable: frozenset[int]
    values_first: np.ndarray
    values_second: np.ndarray
    method: str


def synthesize_mission(mdp: Mdp, method: str = "vi", tie_tol: float = 1e-9, **kw) -> MissionStrategy:
    """Solve the nested mission property and extract the switching strategy.

    The inner constraint (delivery still possible after pickup) is
    qualitative, so it comes from the graph fixpoint of the second stage;
    the two quantitative stages are max-reachability solves.
    """
    alive = mdp.label_set("alive")
    pickup = mdp.label_set(PICKUP)
    dropoff = mdp.label_set(DROPOFF)
    if not pickup or not dropoff:
        raise ValueError("mission needs both pickup and dropoff labels")

    second = solve_reachability(mdp, alive & dropoff, alive, method=method, **kw)
    deliverable = second.positive
    switch = frozenset(alive & pickup & deliverable)
    first = solve_reachability(mdp, switch, alive, method=method, **kw)

    return MissionStrategy(
        value=float(first.values[mdp.init]),
        first=extract_policy(mdp, first, switch, tie_tol=tie_tol),
        second=extract_policy(mdp, second, alive & dropoff, tie_tol=tie_tol),
        switch=switch,
        sat_deliverable=deliverable,
        values_first=first.values,
        values_second=second.values,
        method=method,
    )
