"""Explicit MDP construction from an environment.

States track where the vehicle is (facet, region being crossed), what it
observed there (adversary count, obstacle level), whether it is still alive,
and one belief per adjacent region.  Actions are the motion primitives
leaving the current facet across the current region, plus a dummy ``stay``
action that makes lost and dead-end states absorbing.

For one state/primitive pair the outgoing row mixes three families:

* crossing completes: the vehicle reaches an exit facet, survives with
  1 - p_lost(count, level), and re-enters the world on the far side with a
  fresh observation drawn from its tracked belief about the entered region;
* an adversary enters the current region from a neighbour that can spare one
  (count + 1, that neighbour's belief conditioned on the departure);
* an adversary leaves the current region into a neighbour that can take one
  (count - 1, that neighbour's belief conditioned on the arrival).

The race between these events is exponential, so each family's weight is its
rate divided by the total estimated rate; rows therefore sum to one exactly
(up to float rounding) by construction.

Losing the vehicle ends the run, so the would-be observation and belief
components of a lost successor are unobservable; all lost mass for a landing
(facet, region) flows into one canonical absorbing state there.  With
``merge_lost`` every lost state collapses further into a single global sink.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .belief import ENTERED, LEFT, BeliefSet, enumerate_reachable, expectation
from .envmodel import DROPOFF, PICKUP, Environment, MotionPrimitive

STAY = "stay"


class VehicleState(NamedTuple):
    """One MDP state; ``beliefs`` holds positions in each neighbour's BeliefSet."""

    facet: str
    region: str
    count: int
    level: int
    alive: bool
    beliefs: tuple[int, ...]


#: single absorbing state used for all lost mass when merging is requested
LOST_SINK = VehicleState(facet="", region="", count=-1, level=-1, alive=False, beliefs=())


@dataclass
class Mdp:
    """Explicit sparse MDP.

    ``enabled[s]`` lists global action indices in ascending order and
    ``rows[s][k]`` holds the sparse distribution of ``enabled[s][k]``.
    """

    states: list
    action_names: list[str]
    enabled: list[list[int]]
    rows: list[list[list[tuple[int, float]]]]
    init: int
    labels: dict[str, frozenset[int]]
    warnings: list[str] = field(default_factory=list)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def label_set(self, name: str) -> frozenset[int]:
        return self.labels.get(name, frozenset())

    def row(self, state: int, action: int) -> list[tuple[int, float]]:
        return self.rows[state][self.enabled[state].index(action)]

    def n_choices(self) -> int:
        return sum(len(e) for e in self.enabled)

    def n_transitions(self) -> int:
        return sum(len(r) for rs in self.rows for r in rs)


@dataclass(frozen=True)
class Violation:
    state: int
    action: int | None
    kind: str
    detail: str


class MdpBuilder:
    """Expands the reachable state space of an environment."""

    def __init__(self, env: Environment, merge_lost: bool = False):
        self.env = env
        self.merge_lost = merge_lost
        self.belief_sets: dict[str, BeliefSet] = {
            rid: enumerate_reachable(region.initial_belief)
            for rid, region in env.regions.items()
        }
        self.neighbors = {rid: env.neighbors(rid) for rid in env.regions}
        # per-region caches keyed by belief position
        self._expect = {
            rid: [float(expectation(b)) for b in bset.members]
            for rid, bset in self.belief_sets.items()
        }
        self._obs_items = {
            rid: [(o, float(p)) for o, p in region.obstacle_items()]
            for rid, region in env.regions.items()
        }
        self._belief_items = {
            rid: [[(n, float(p)) for n, p in b.items()] for b in bset.members]
            for rid, bset in self.belief_sets.items()
        }
        self._prims_at: dict[tuple[str, str], list[tuple[int, MotionPrimitive]]] = {}
        for idx, prim in enumerate(env.primitives):
            self._prims_at.setdefault((prim.from_facet, prim.region), []).append((idx, prim))
        self._succ_region = {
            (fid, rid): env.successor_region(fid, rid)
            for fid, facet in env.facets.items()
            for rid in facet.regions
        }

    def initial_state(self) -> VehicleState:
        fresh = (0,) * len(self.neighbors[self.env.init_region])
        return VehicleState(self.env.init_facet, self.env.init_region, 0, 0, True, fresh)

    def _resolved(self, state: VehicleState):
        """Neighbour ids paired with the belief objects the state holds."""
        bsets = self.belief_sets
        return [
            (rid, bsets[rid].members[pos])
            for rid, pos in zip(self.neighbors[state.region], state.beliefs)
        ]

    def estimated_rate(self, state: VehicleState, prim: MotionPrimitive) -> float:
        """Total rate of the exponential race while crossing under ``prim``."""
        region = self.env.regions[state.region]
        rate = prim.rate
        resolved = self._resolved(state)
        receivers = sum(1 for _, b in resolved if not b.is_point_at_ceil())
        if state.count > region.min_adversaries and receivers:
            rate += region.mu_leave * state.count
        if state.count < region.max_adversaries:
            incoming = sum(
                self._expect[rid][pos]
                for (rid, b), pos in zip(resolved, state.beliefs)
                if not b.is_point_at_floor()
            )
            rate += region.mu_enter * incoming
        return rate

    def transitions(self, state: VehicleState, prim: MotionPrimitive):
        """Sparse successor distribution for an alive state and a primitive."""
        if not state.alive:
            raise ValueError("lost states only support the stay action")
        region = self.env.regions[state.region]
        total_rate = self.estimated_rate(state, prim)
        p_lost = prim.lost[(state.count, state.level)]
        crossing = prim.rate / total_rate

        out: dict[VehicleState, float] = {}

        def put(succ: VehicleState, prob: float):
            if prob > 0.0:
                out[succ] = out.get(succ, 0.0) + prob

        def lost_at(facet: str, region: str) -> VehicleState:
            if self.merge_lost:
                return LOST_SINK
            fresh = (0,) * len(self.neighbors[region])
            floor = self.env.regions[region].min_adversaries
            return VehicleState(facet, region, floor, 0, False, fresh)

        for exit_facet, q in prim.exit_facets():
            succ_region = self._succ_region[(exit_facet, state.region)]
            if succ_region == state.region:
                # outer boundary: no region is entered, nothing is re-observed
                moved = state._replace(facet=exit_facet)
                put(moved, crossing * q * (1.0 - p_lost))
                put(lost_at(exit_facet, state.region), crossing * q * p_lost)
                continue
            put(lost_at(exit_facet, succ_region), crossing * q * p_lost)
            entered_pos = self.neighbors[state.region].index(succ_region)
            belief_pos = state.beliefs[entered_pos]
            fresh = (0,) * len(self.neighbors[succ_region])
            for n2, pn in self._belief_items[succ_region][belief_pos]:
                for o2, po in self._obs_items[succ_region]:
                    base = crossing * q * pn * po * (1.0 - p_lost)
                    if base == 0.0:
                        continue
                    put(VehicleState(exit_facet, succ_region, n2, o2, True, fresh), base)

        resolved = self._resolved(state)
        if state.count < region.max_adversaries:
            for i, (rid, b) in enumerate(resolved):
                if b.is_point_at_floor():
                    continue
                prob = region.mu_enter * self._expect[rid][state.beliefs[i]] / total_rate
                if prob == 0.0:
                    continue
                child = self.belief_sets[rid].child(state.beliefs[i], LEFT)
                beliefs = state.beliefs[:i] + (child,) + state.beliefs[i + 1:]
                put(state._replace(count=state.count + 1, beliefs=beliefs), prob)
        receivers = [i for i, (_, b) in enumerate(resolved) if not b.is_point_at_ceil()]
        if state.count > region.min_adversaries and receivers:
            share = region.mu_leave * state.count / (total_rate * len(receivers))
            for i in receivers:
                rid = self.neighbors[state.region][i]
                child = self.belief_sets[rid].child(state.beliefs[i], ENTERED)
                beliefs = state.beliefs[:i] + (child,) + state.beliefs[i + 1:]
                put(state._replace(count=state.count - 1, beliefs=beliefs), share)
        return list(out.items())

    def build(self) -> Mdp:
        env = self.env
        action_names = [p.name for p in env.primitives] + [STAY]
        stay_idx = len(env.primitives)

        init = self.initial_state()
        states: list[VehicleState] = [init]
        index: dict[VehicleState, int] = {init: 0}
        enabled: list[list[int]] = []
        rows: list[list[list[tuple[int, float]]]] = []
        warnings: list[str] = []
        dead_ends: set[tuple[str, str]] = set()

        def intern(succ: VehicleState) -> int:
            pos = index.get(succ)
            if pos is None:
                pos = len(states)
                index[succ] = pos
                states.append(succ)
            return pos

        cursor = 0
        while cursor < len(states):
            state = states[cursor]
            cursor += 1
            if not state.alive:
                enabled.append([stay_idx])
                rows.append([[(index[state], 1.0)]])
                continue
            prims = self._prims_at.get((state.facet, state.region), [])
            if not prims:
                if (state.facet, state.region) not in dead_ends:
                    dead_ends.add((state.facet, state.region))
                    warnings.append(
                        f"dead end: no primitive leaves facet {state.facet!r} "
                        f"across region {state.region!r}"
                    )
                enabled.append([stay_idx])
                rows.append([[(index[state], 1.0)]])
                continue
            state_enabled = []
            state_rows = []
            for action_idx, prim in prims:
                row = [(intern(succ), p) for succ, p in self.transitions(state, prim)]
                state_enabled.append(action_idx)
                state_rows.append(row)
            enabled.append(state_enabled)
            rows.append(state_rows)

        labels: dict[str, set[int]] = {"alive": set(), PICKUP: set(), DROPOFF: set()}
        for i, state in enumerate(states):
            if state == LOST_SINK:
                continue
            if state.alive:
                labels["alive"].add(i)
            region = env.regions[state.region]
            if PICKUP in region.labels:
                labels[PICKUP].add(i)
            if DROPOFF in region.labels:
                labels[DROPOFF].add(i)

        return Mdp(
            states=states,
            action_names=action_names,
            enabled=enabled,
            rows=rows,
            init=0,
            labels={k: frozenset(v) for k, v in labels.items()},
            warnings=warnings,
        )


def build_mdp(env: Environment, merge_lost: bool = False) -> Mdp:
    return MdpBuilder(env, merge_lost=merge_lost).build()


def validate_mdp(mdp: Mdp, tol: float = 1e-9) -> list[Violation]:
    """Structural checks; returns violations instead of printing."""
    bad: list[Violation] = []
    n = mdp.n_states
    if not 0 <= mdp.init < n:
        bad.append(Violation(mdp.init, None, "init", "initial state out of range"))
    for s in range(n):
        acts = mdp.enabled[s]
        if not acts:
            bad.append(Violation(s, None, "no-action", "state has no enabled action"))
            continue
        if sorted(acts) != acts or len(set(acts)) != len(acts):
            bad.append(Violation(s, None, "action-order", f"enabled not ascending: {acts}"))
        if len(acts) != len(mdp.rows[s]):
            bad.append(Violation(s, None, "row-shape", "rows misaligned with enabled"))
            continue
        for a, row in zip(acts, mdp.rows[s]):
            if not row:
                bad.append(Violation(s, a, "empty-row", "no successors"))
                continue
            total = 0.0
            for succ, p in row:
                if not 0 <= succ < n:
                    bad.append(Violation(s, a, "succ-range", f"successor {succ}"))
                if not 0.0 <= p <= 1.0 + tol:
                    bad.append(Violation(s, a, "prob-range", f"{p}"))
                total += p
            if abs(total - 1.0) > tol:
                bad.append(Violation(s, a, "row-sum", f"{total!r}"))
        descriptor = mdp.states[s]
        if isinstance(descriptor, VehicleState) and not descriptor.alive:
            stay = len(mdp.action_names) - 1
            if acts != [stay] or mdp.rows[s] != [[(s, 1.0)]]:
                bad.append(Violation(s, None, "lost-absorbing", "lost state is not absorbing"))
    alive = mdp.label_set("alive")
    for s, descriptor in enumerate(mdp.states):
        if isinstance(descriptor, VehicleState):
            if descriptor.alive != (s in alive):
                bad.append(Violation(s, None, "label", "alive label mismatch"))
    return bad


# ---------------------------------------------------------------------------
# serialization


def _state_to_json(state):
    if isinstance(state, VehicleState):
        if state == LOST_SINK:
            return "sink"
        return list(state[:5]) + [list(state.beliefs)]
    return state


def _state_from_json(obj):
    if obj == "sink":
        return LOST_SINK
    if isinstance(obj, list) and len(obj) == 6:
        return VehicleState(obj[0], obj[1], obj[2], obj[3], obj[4], tuple(obj[5]))
    return obj


def dump_mdp(mdp: Mdp, path: str | Path):
    """Write the MDP as JSON (round-trips through :func:`load_mdp`)."""
    payload = {
        "states": [_state_to_json(s) for s in mdp.states],
        "actions": mdp.action_names,
        "enabled": mdp.enabled,
        "rows": [[[[succ, p] for succ, p in row] for row in rs] for rs in mdp.rows],
        "init": mdp.init,
        "labels": {k: sorted(v) for k, v in mdp.labels.items()},
        "warnings": mdp.warnings,
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, separators=(",", ":"))
        handle.write("\n")


def load_mdp(path: str | Path) -> Mdp:
    with open(path) as handle:
        payload = json.load(handle)
    return Mdp(
        states=[_state_from_json(s) for s in payload["states"]],
        action_names=list(payload["actions"]),
        enabled=[list(map(int, e)) for e in payload["enabled"]],
        rows=[
            [[(int(succ), float(p)) for succ, p in row] for row in rs]
            for rs in payload["rows"]
        ],
        init=int(payload["init"]),
        labels={k: frozenset(v) for k, v in payload["labels"].items()},
        warnings=list(payload.get("warnings", [])),
    )


# ---------------------------------------------------------------------------
# PRISM explicit-state export


def export_prism(mdp: Mdp, basepath: str | Path) -> list[Path]:
    """Write ``.sta``, ``.tra`` and ``.lab`` files for external checkers.

    Output bytes are a pure function of the MDP, so re-exporting the same
    model is byte-identical.
    """
    basepath = Path(basepath)
    basepath.parent.mkdir(parents=True, exist_ok=True)
    rich = all(isinstance(s, VehicleState) for s in mdp.states)

    sta_path = basepath.with_suffix(".sta")
    lines = []
    if rich:
        facet_ids: dict[str, int] = {}
        region_ids: dict[str, int] = {}
        combo_ids: dict[tuple[int, ...], int] = {}

        def dense(table: dict, key) -> int:
            if key not in table:
                table[key] = len(table)
            return table[key]

        lines.append("(facet,region,count,level,alive,beliefs)")
        for i, s in enumerate(mdp.states):
            if s == LOST_SINK:
                lines.append(f"{i}:(-1,-1,-1,-1,0,-1)")
                continue
            vec = (
                dense(facet_ids, s.facet),
                dense(region_ids, s.region),
                s.count,
                s.level,
                int(s.alive),
                dense(combo_ids, s.beliefs),
            )
            lines.append(f"{i}:({','.join(map(str, vec))})")
    else:
        lines.append("(s)")
        lines.extend(f"{i}:({i})" for i in range(mdp.n_states))
    sta_path.write_text("\n".join(lines) + "\n")

    tra_path = basepath.with_suffix(".tra")
    lines = [f"{mdp.n_states} {mdp.n_choices()} {mdp.n_transitions()}"]
    for s in range(mdp.n_states):
        for choice, row in enumerate(mdp.rows[s]):
            for succ, p in sorted(row):
                lines.append(f"{s} {choice} {succ} {p!r}")
    tra_path.write_text("\n".join(lines) + "\n")

    # internal label names -> the atoms the mission formula is written over
    exported = [("init", None), ("deadlock", None), ("alive", "alive"),
                ("rp", PICKUP), ("rd", DROPOFF)]
    lab_path = basepath.with_suffix(".lab")
    header = " ".join(f'{i}="{name}"' for i, (name, _) in enumerate(exported))
    lines = [header]
    for s in range(mdp.n_states):
        tags = [0] if s == mdp.init else []
        tags += [i for i, (_, key) in enumerate(exported) if key and s in mdp.label_set(key)]
        if tags:
            lines.append(f"{s}: {' '.join(str(t) for t in tags)}")
    lab_path.write_text("\n".join(lines) + "\n")

    return [sta_path, tra_path, lab_path]
