"""Environment description: regions, facets, motion primitives, risk model.

An environment file is JSON with four top-level keys (``regions``, ``facets``,
``primitives``, ``init``).  Probabilities on the belief side (initial
adversary pmfs, obstacle pmfs, outcome pmfs) must be written as strings so
they parse to exact rationals; rates and loss probabilities are plain
numbers.  A ``comment`` key is allowed in any object and ignored, as is a
top-level ``notes`` list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from .belief import AdversaryBelief

PICKUP = "pickup"
DROPOFF = "dropoff"

MAX_ADVERSARIES = 10


class EnvironmentFormatError(ValueError):
    """Raised when an environment file violates a structural invariant."""


def adversary_loss_marginal(count: int) -> float:
    """Probability that the on-board planner fails given ``count`` adversaries.

    Quadratic in the count, 0 at 0 and 1 at 10.  Counts outside [0, 10] are a
    domain error.
    """
    if not 0 <= count <= MAX_ADVERSARIES:
        raise ValueError(f"adversary count {count} outside [0, {MAX_ADVERSARIES}]")
    return 0.01 * count * count


def combine_lost_marginals(p_adversary: float, p_obstacle: float) -> float:
    """Joint loss probability from the two marginals.

    Returns exp(-sqrt(-log(p_a) - log(p_o))); when either marginal is zero
    the joint is zero (limit convention).  The inner sum is clamped at 0 so
    that a pair of exact ones cannot produce a negative radicand.
    """
    for p in (p_adversary, p_obstacle):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"marginal {p} outside [0, 1]")
    if p_adversary == 0.0 or p_obstacle == 0.0:
        return 0.0
    inner = -math.log(p_adversary) - math.log(p_obstacle)
    return math.exp(-math.sqrt(max(inner, 0.0)))


@dataclass(frozen=True)
class Region:
    id: str
    min_adversaries: int
    max_adversaries: int
    initial_belief: AdversaryBelief
    max_obstacle_level: int
    obstacle_pmf: dict[int, Fraction]
    mu_enter: float
    mu_leave: float
    labels: frozenset[str] = frozenset()

    def obstacle_items(self):
        for level in range(self.max_obstacle_level + 1):
            p = self.obstacle_pmf.get(level, Fraction(0))
            if p:
                yield level, p


@dataclass(frozen=True)
class Facet:
    id: str
    regions: tuple[str, ...]


@dataclass(frozen=True)
class MotionPrimitive:
    """Directed facet-to-facet crossing of one region.

    ``lost`` maps every (count, obstacle level) the region admits to the
    probability of losing the vehicle when the crossing completes.
    ``outcomes`` is an optional pmf over exit facets for primitives whose
    endpoint is uncertain; when absent the primitive always reaches ``to``.
    """

    from_facet: str
    to_facet: str
    region: str
    rate: float
    lost: dict[tuple[int, int], float]
    outcomes: tuple[tuple[str, float], ...] | None = None

    @property
    def name(self) -> str:
        return f"{self.from_facet}>{self.to_facet}"

    def exit_facets(self) -> tuple[tuple[str, float], ...]:
        if self.outcomes is None:
            return ((self.to_facet, 1.0),)
        return self.outcomes


@dataclass
class Environment:
    name: str
    regions: dict[str, Region]
    facets: dict[str, Facet]
    primitives: tuple[MotionPrimitive, ...]
    init_facet: str
    init_region: str
    warnings: list[str] = field(default_factory=list)
    source: dict | None = None

    def region_order(self, region_id: str) -> int:
        return list(self.regions).index(region_id)

    def neighbors(self, region_id: str) -> tuple[str, ...]:
        """Adjacent regions, in declaration order."""
        adjacent = set()
        for facet in self.facets.values():
            if region_id in facet.regions:
                adjacent.update(r for r in facet.regions if r != region_id)
        return tuple(r for r in self.regions if r in adjacent)

    def successor_region(self, facet_id: str, region_id: str) -> str:
        """Region entered when a crossing of ``region_id`` ends at ``facet_id``.

        The region on the other side of the facet; the same region when the
        facet lies on the outer boundary.
        """
        others = [r for r in self.facets[facet_id].regions if r != region_id]
        return others[0] if others else region_id

    def primitives_from(self, facet_id: str, region_id: str) -> tuple[MotionPrimitive, ...]:
        return tuple(
            p for p in self.primitives if p.from_facet == facet_id and p.region == region_id
        )

    def traversable_regions(self) -> tuple[str, ...]:
        crossed = {p.region for p in self.primitives}
        return tuple(r for r in self.regions if r in crossed)


def build_lost_table(region: Region, marginal_n, marginal_o) -> dict[tuple[int, int], float]:
    """Tabulate the joint loss over the region's full (count, level) domain.

    Each marginal is either a mapping or a callable on the integer domain.
    """

    def at(marginal, x):
        return marginal(x) if callable(marginal) else marginal[x]

    table = {}
    for n in range(region.min_adversaries, region.max_adversaries + 1):
        for o in range(region.max_obstacle_level + 1):
            table[(n, o)] = combine_lost_marginals(at(marginal_n, n), at(marginal_o, o))
    return table


def scale_rates(env: Environment, factor: float) -> Environment:
    """Copy of the environment with every rate multiplied by ``factor``."""
    regions = {
        rid: replace(r, mu_enter=r.mu_enter * factor, mu_leave=r.mu_leave * factor)
        for rid, r in env.regions.items()
    }
    prims = tuple(replace(p, rate=p.rate * factor) for p in env.primitives)
    return Environment(
        name=env.name,
        regions=regions,
        facets=dict(env.facets),
        primitives=prims,
        init_facet=env.init_facet,
        init_region=env.init_region,
        warnings=list(env.warnings),
        source=env.source,
    )


# ---------------------------------------------------------------------------
# parsing


def _exact(raw, where: str) -> Fraction:
    """Parse an exact probability: decimal string, rational string, or int."""
    if isinstance(raw, bool) or isinstance(raw, float):
        raise EnvironmentFormatError(
            f"{where}: probability {raw!r} must be a string (exact), not a float"
        )
    try:
        value = Fraction(raw)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise EnvironmentFormatError(f"{where}: cannot parse probability {raw!r}") from exc
    if not 0 <= value <= 1:
        raise EnvironmentFormatError(f"{where}: probability {value} outside [0, 1]")
    return value


def _number(raw, where: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float, str)):
        raise EnvironmentFormatError(f"{where}: expected a number, got {raw!r}")
    try:
        return float(Fraction(raw)) if isinstance(raw, str) else float(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise EnvironmentFormatError(f"{where}: cannot parse number {raw!r}") from exc


def _check_keys(obj: dict, allowed: set[str], required: set[str], where: str):
    unknown = set(obj) - allowed - {"comment"}
    if unknown:
        raise EnvironmentFormatError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise EnvironmentFormatError(f"{where}: missing keys {sorted(missing)}")


def _parse_region(obj: dict) -> Region:
    where = f"region {obj.get('id', '?')!r}"
    _check_keys(
        obj,
        {"id", "adversaries", "obstacles", "mu_enter", "mu_leave", "labels"},
        {"id", "adversaries", "obstacles", "mu_enter", "mu_leave"},
        where,
    )
    adv = obj["adversaries"]
    _check_keys(adv, {"min", "max", "p_init"}, {"min", "max", "p_init"}, f"{where} adversaries")
    lo, hi = int(adv["min"]), int(adv["max"])
    if lo > hi:
        raise EnvironmentFormatError(f"{where}: adversary min {lo} > max {hi}")
    if lo < 0 or hi > MAX_ADVERSARIES:
        raise EnvironmentFormatError(
            f"{where}: adversary bounds [{lo}, {hi}] outside [0, {MAX_ADVERSARIES}]"
        )
    pmf = {int(k): _exact(v, f"{where} p_init[{k}]") for k, v in adv["p_init"].items()}
    if any(not lo <= n <= hi for n in pmf):
        raise EnvironmentFormatError(f"{where}: p_init support escapes [{lo}, {hi}]")
    if sum(pmf.values()) != 1:
        raise EnvironmentFormatError(f"{where}: p_init sums to {sum(pmf.values())}, not 1")
    support = sorted(n for n, p in pmf.items() if p)
    start, end = support[0], support[-1]
    probs = tuple(pmf.get(n, Fraction(0)) for n in range(start, end + 1))
    belief = AdversaryBelief(floor=lo, ceil=hi, start=start, probs=probs)

    obs = obj["obstacles"]
    _check_keys(obs, {"max_level", "p_obs"}, {"max_level", "p_obs"}, f"{where} obstacles")
    max_level = int(obs["max_level"])
    if max_level < 0:
        raise EnvironmentFormatError(f"{where}: negative obstacle max_level")
    opmf = {int(k): _exact(v, f"{where} p_obs[{k}]") for k, v in obs["p_obs"].items()}
    if any(not 0 <= o <= max_level for o in opmf):
        raise EnvironmentFormatError(f"{where}: p_obs support escapes [0, {max_level}]")
    if sum(opmf.values()) != 1:
        raise EnvironmentFormatError(f"{where}: p_obs sums to {sum(opmf.values())}, not 1")

    labels = frozenset(obj.get("labels", []))
    if not labels <= {PICKUP, DROPOFF}:
        raise EnvironmentFormatError(f"{where}: unknown labels {sorted(labels - {PICKUP, DROPOFF})}")
    mu_enter = _number(obj["mu_enter"], f"{where} mu_enter")
    mu_leave = _number(obj["mu_leave"], f"{where} mu_leave")
    if mu_enter < 0 or mu_leave < 0:
        raise EnvironmentFormatError(f"{where}: negative adversary rate")
    return Region(
        id=str(obj["id"]),
        min_adversaries=lo,
        max_adversaries=hi,
        initial_belief=belief,
        max_obstacle_level=max_level,
        obstacle_pmf=opmf,
        mu_enter=mu_enter,
        mu_leave=mu_leave,
        labels=labels,
    )


def _parse_lost(obj, region: Region, where: str) -> dict[tuple[int, int], float]:
    _check_keys(obj, {"marginal_n", "marginal_o", "table"}, set(), where)
    if "table" in obj:
        if "marginal_n" in obj or "marginal_o" in obj:
            raise EnvironmentFormatError(f"{where}: give either a table or marginals, not both")
        table = {}
        for n_key, row in obj["table"].items():
            for o_key, value in row.items():
                table[(int(n_key), int(o_key))] = _number(value, f"{where} table[{n_key}][{o_key}]")
    else:
        if "marginal_n" not in obj or "marginal_o" not in obj:
            raise EnvironmentFormatError(f"{where}: both marginals are required")

        def marginal(spec, label):
            if spec == "quadratic":
                return adversary_loss_marginal
            if isinstance(spec, dict):
                return {int(k): _number(v, f"{where} {label}[{k}]") for k, v in spec.items()}
            raise EnvironmentFormatError(f"{where}: bad {label} spec {spec!r}")

        try:
            table = build_lost_table(
                region, marginal(obj["marginal_n"], "marginal_n"),
                marginal(obj["marginal_o"], "marginal_o"),
            )
        except KeyError as exc:
            raise EnvironmentFormatError(f"{where}: marginal missing value at {exc}") from exc
    for (n, o), p in table.items():
        if not 0.0 <= p <= 1.0:
            raise EnvironmentFormatError(f"{where}: loss probability {p} at ({n}, {o})")
    expected = {
        (n, o)
        for n in range(region.min_adversaries, region.max_adversaries + 1)
        for o in range(region.max_obstacle_level + 1)
    }
    if not expected <= set(table):
        hole = sorted(expected - set(table))[0]
        raise EnvironmentFormatError(f"{where}: loss table has no entry for (count, level) {hole}")
    return table


def parse_environment(data: dict, name: str = "environment") -> Environment:
    """Build and validate an Environment from already-decoded JSON."""
    _check_keys(
        data, {"name", "regions", "facets", "primitives", "init", "notes"},
        {"regions", "facets", "primitives", "init"}, "environment",
    )
    name = str(data.get("name", name))

    regions: dict[str, Region] = {}
    for obj in data["regions"]:
        region = _parse_region(obj)
        if region.id in regions:
            raise EnvironmentFormatError(f"duplicate region id {region.id!r}")
        regions[region.id] = region

    facets: dict[str, Facet] = {}
    for obj in data["facets"]:
        _check_keys(obj, {"id", "regions"}, {"id", "regions"}, f"facet {obj.get('id', '?')!r}")
        fid = str(obj["id"])
        if fid in facets:
            raise EnvironmentFormatError(f"duplicate facet id {fid!r}")
        bounded = tuple(str(r) for r in obj["regions"])
        if not 1 <= len(bounded) <= 2 or len(set(bounded)) != len(bounded):
            raise EnvironmentFormatError(f"facet {fid!r}: must bound one or two distinct regions")
        for rid in bounded:
            if rid not in regions:
                raise EnvironmentFormatError(f"facet {fid!r}: unknown region {rid!r}")
        facets[fid] = Facet(fid, bounded)

    for label in (PICKUP, DROPOFF):
        tagged = [r.id for r in regions.values() if label in r.labels]
        if len(tagged) != 1:
            raise EnvironmentFormatError(
                f"exactly one region must carry the {label!r} label, found {tagged}"
            )

    prims = []
    for obj in data["primitives"]:
        where = f"primitive {obj.get('from', '?')}->{obj.get('to', '?')}"
        _check_keys(
            obj, {"from", "to", "region", "rate", "lost", "outcomes"},
            {"from", "to", "region", "rate", "lost"}, where,
        )
        src, dst, rid = str(obj["from"]), str(obj["to"]), str(obj["region"])
        for fid in (src, dst):
            if fid not in facets:
                raise EnvironmentFormatError(f"{where}: unknown facet {fid!r}")
        if rid not in regions:
            raise EnvironmentFormatError(f"{where}: unknown region {rid!r}")
        for fid in (src, dst):
            if rid not in facets[fid].regions:
                raise EnvironmentFormatError(f"{where}: facet {fid!r} does not bound {rid!r}")
        if src == dst and not regions[rid].labels & {PICKUP, DROPOFF}:
            raise EnvironmentFormatError(
                f"{where}: same-facet primitives are only allowed at pick-up/drop-off regions"
            )
        rate = _number(obj["rate"], f"{where} rate")
        if rate <= 0:
            raise EnvironmentFormatError(f"{where}: rate must be positive, got {rate}")
        lost = _parse_lost(obj["lost"], regions[rid], f"{where} lost")
        outcomes = None
        if "outcomes" in obj:
            pairs = []
            total = Fraction(0)
            for out in obj["outcomes"]:
                _check_keys(out, {"facet", "p"}, {"facet", "p"}, f"{where} outcome")
                ofid = str(out["facet"])
                if ofid not in facets:
                    raise EnvironmentFormatError(f"{where}: unknown outcome facet {ofid!r}")
                if rid not in facets[ofid].regions:
                    raise EnvironmentFormatError(
                        f"{where}: outcome facet {ofid!r} does not bound {rid!r}"
                    )
                p = _exact(out["p"], f"{where} outcome {ofid!r}")
                pairs.append((ofid, float(p)))
                total += p
            if total != 1:
                raise EnvironmentFormatError(f"{where}: outcome pmf sums to {total}, not 1")
            outcomes = tuple(pairs)
        prims.append(MotionPrimitive(src, dst, rid, rate, lost, outcomes))

    init = data["init"]
    _check_keys(init, {"facet", "region"}, {"facet", "region"}, "init")
    init_facet, init_region = str(init["facet"]), str(init["region"])
    if init_facet not in facets:
        raise EnvironmentFormatError(f"init: unknown facet {init_facet!r}")
    if init_region not in regions:
        raise EnvironmentFormatError(f"init: unknown region {init_region!r}")
    if init_region not in facets[init_facet].regions:
        raise EnvironmentFormatError(
            f"init: facet {init_facet!r} does not bound region {init_region!r}"
        )
    start = regions[init_region]
    if not start.initial_belief.pmf(0) == 1:
        raise EnvironmentFormatError("init: initial region must have no adversaries (p_init(0) = 1)")
    if not start.obstacle_pmf.get(0, Fraction(0)) == 1:
        raise EnvironmentFormatError("init: initial region must have no obstacles (p_obs(0) = 1)")

    env = Environment(
        name=name,
        regions=regions,
        facets=facets,
        primitives=tuple(prims),
        init_facet=init_facet,
        init_region=init_region,
        source=data,
    )

    reachable = _facet_reachable_regions(env)
    for rid in regions:
        if rid not in reachable:
            env.warnings.append(f"region {rid!r} is unreachable from the initial facet")
    return env


def _facet_reachable_regions(env: Environment) -> set[str]:
    seen_states = {(env.init_facet, env.init_region)}
    seen_regions = {env.init_region}
    stack = [(env.init_facet, env.init_region)]
    while stack:
        facet, region = stack.pop()
        for prim in env.primitives_from(facet, region):
            for exit_facet, _ in prim.exit_facets():
                succ = (exit_facet, env.successor_region(exit_facet, region))
                seen_regions.add(succ[1])
                if succ not in seen_states:
                    seen_states.add(succ)
                    stack.append(succ)
    return seen_regions


def load_environment(path: str | Path) -> Environment:
    """Load, parse and validate an environment JSON file."""
    path = Path(path)
    with open(path) as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise EnvironmentFormatError(f"{path}: not valid JSON ({exc})") from exc
    return parse_environment(data, name=path.stem)
