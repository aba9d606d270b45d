"""Monte Carlo execution of synthesized strategies.

A mission run follows the first-stage policy until it reaches a switch state
(pickup reached, delivery still possible), which is the event the mission
property scores, then follows the second-stage policy until delivery.  Runs
that die or exhaust the step budget end early; a strategy with no action at
a reached state is an execution error, not an outcome.

Per-run generators are seeded as ``default_rng([master_seed, run_index])``,
so results do not depend on how runs are split across worker threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .envmodel import DROPOFF
from .mdpbuild import Mdp, VehicleState
from .synth import MissionStrategy

SUCCESS = "success"
LOST = "lost"
STEP_LIMIT = "step-limit"

OUTCOMES = (SUCCESS, LOST, STEP_LIMIT)


@dataclass
class Trace:
    """One simulated run; ``outcome`` is success/lost/step-limit.

    A run counts as ``success`` the moment it enters a switch state
    (pickup reached with delivery still possible); that is the event the
    mission value measures.  The run itself keeps going until delivery,
    death, or the step budget, and ``delivered_step`` records whether the
    second leg also finished.
    """

    states: list[int]
    actions: list[int]
    outcome: str
    satisfied_step: Optional[int] = None
    delivered_step: Optional[int] = None

    def __len__(self) -> int:
        return len(self.actions)


def classify_step(mdp: Mdp, src: int, dst: int) -> str:
    """Name the event a single transition realized, for trace output.

    Compares the vehicle-state descriptors of the two endpoints: a death
    is "lost-absorb", a facet or region change is "region-change", a
    count increase with the vehicle in place is "adversary-entered", a
    decrease "adversary-left", and an identity transition "stay".  MDPs
    whose states are not vehicle states (hand-built models) report
    "step".
    """
    a, b = mdp.states[src], mdp.states[dst]
    if not (isinstance(a, VehicleState) and isinstance(b, VehicleState)):
        return "step"
    if a.alive and not b.alive:
        return "lost-absorb"
    if a == b:
        return "stay"
    if (a.facet, a.region) != (b.facet, b.region):
        return "region-change"
    if b.count > a.count:
        return "adversary-entered"
    if b.count < a.count:
        return "adversary-left"
    return "step"


def _sample(row: Sequence[tuple[int, float]], rng: np.random.Generator) -> int:
    u = rng.random()
    acc = 0.0
    for succ, p in row:
        acc += p
        if u < acc:
            return succ
    return row[-1][0]


def rollout(
    mdp: Mdp,
    policy: dict[int, int],
    rng: np.random.Generator,
    max_steps: int = 100_000,
    stop: frozenset[int] = frozenset(),
) -> tuple[list[int], list[int]]:
    """Follow a single memoryless policy; returns visited states and actions."""
    s = mdp.init
    states = [s]
    actions: list[int] = []
    while len(actions) < max_steps and s not in stop:
        a = policy.get(s)
        if a is None:
            break
        s = _sample(mdp.row(s, a), rng)
        states.append(s)
        actions.append(a)
    return states, actions


def simulate_run(
    mdp: Mdp,
    strategy: MissionStrategy,
    rng: np.random.Generator,
    max_steps: int = 100_000,
) -> Trace:
    alive = mdp.label_set("alive")
    dropoff = mdp.label_set(DROPOFF)
    s = mdp.init
    states = [s]
    actions: list[int] = []
    satisfied: Optional[int] = None
    delivered: Optional[int] = None

    while True:
        if s not in alive:
            break
        if satisfied is None and s in strategy.switch:
            satisfied = len(actions)
        if satisfied is not None and s in dropoff:
            delivered = len(actions)
            break
        if len(actions) >= max_steps:
            break
        policy = strategy.first if satisfied is None else strategy.second
        a = policy.get(s)
        if a is None:
            phase = "first" if satisfied is None else "second"
            raise RuntimeError(
                f"{phase}-stage strategy undefined at reached state {s} "
                f"({mdp.states[s]!r})"
            )
        s = _sample(mdp.row(s, a), rng)
        states.append(s)
        actions.append(a)

    if satisfied is not None:
        outcome = SUCCESS
    elif s not in alive:
        outcome = LOST
    else:
        outcome = STEP_LIMIT
    return Trace(states, actions, outcome, satisfied, delivered)


@dataclass
class Estimate:
    """Aggregated mission statistics with a 95% normal-approximation interval."""

    runs: int
    satisfied: int
    estimate: float
    half_width: float
    delivered: int
    lost: int
    step_limit: int
    master_seed: int

    def interval(self) -> tuple[float, float]:
        return (max(0.0, self.estimate - self.half_width),
                min(1.0, self.estimate + self.half_width))


def _worker_count(workers: Optional[int]) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("HOSTILE_MDP_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def estimate_success(
    mdp: Mdp,
    strategy: MissionStrategy,
    runs: int = 10_000,
    master_seed: int = 0,
    max_steps: int = 100_000,
    workers: Optional[int] = None,
    trace_hook: Optional[Callable[[int, Trace], None]] = None,
) -> Estimate:
    """Estimate the mission success probability from independent runs."""
    counts = {k: 0 for k in OUTCOMES}
    delivered = 0

    def run_block(indices: range) -> tuple[dict[str, int], int]:
        local = {k: 0 for k in OUTCOMES}
        local_delivered = 0
        for i in indices:
            rng = np.random.default_rng([master_seed, i])
            trace = simulate_run(mdp, strategy, rng, max_steps=max_steps)
            local[trace.outcome] += 1
            if trace.delivered_step is not None:
                local_delivered += 1
            if trace_hook is not None:
                trace_hook(i, trace)
        return local, local_delivered

    n_workers = _worker_count(workers)
    if n_workers == 1 or runs < 2 * n_workers:
        blocks = [run_block(range(runs))]
    else:
        bounds = np.linspace(0, runs, n_workers + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            blocks = list(pool.map(run_block, [range(a, b) for a, b in zip(bounds, bounds[1:])]))
    for local, local_delivered in blocks:
        for k, v in local.items():
            counts[k] += v
        delivered += local_delivered

    p = counts[SUCCESS] / runs if runs else 0.0
    half = 1.96 * float(np.sqrt(p * (1.0 - p) / runs)) if runs else 0.0
    return Estimate(
        runs=runs,
        satisfied=counts[SUCCESS],
        estimate=p,
        half_width=half,
        delivered=delivered,
        lost=counts[LOST],
        step_limit=counts[STEP_LIMIT],
        master_seed=master_seed,
    )


def prefix_frequency(
    mdp: Mdp,
    policy: dict[int, int],
    prefix: Sequence[int],
    runs: int = 10**6,
    seed: int = 0,
) -> float:
    """Fraction of simulated runs whose first states match ``prefix``.

    All runs advance in lockstep, grouped by current state so each group
    draws its successors in one vectorized call; runs that leave the prefix
    keep evolving but can no longer count as matches.
    """
    if len(prefix) < 1:
        raise ValueError("prefix needs at least one state")
    rng = np.random.default_rng(seed)
    current = np.full(runs, prefix[0], dtype=np.int64)
    matching = np.ones(runs, dtype=bool)
    for step in range(len(prefix) - 1):
        nxt = np.empty(runs, dtype=np.int64)
        for s in np.unique(current):
            mask = current == s
            a = policy.get(int(s))
            if a is None:
                nxt[mask] = s
                matching &= ~mask
                continue
            row = mdp.row(int(s), a)
            succs = np.fromiter((t for t, _ in row), dtype=np.int64, count=len(row))
            probs = np.fromiter((p for _, p in row), dtype=float, count=len(row))
            nxt[mask] = rng.choice(succs, size=int(mask.sum()), p=probs / probs.sum())
        current = nxt
        matching &= current == prefix[step + 1]
    return float(matching.mean())
