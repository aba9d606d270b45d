"""State-space construction: event races, crossing mass, lost handling, export."""

import copy

import numpy as np
import pytest

from conftest import random_environment
from hostilemdp.belief import ENTERED, LEFT
from hostilemdp.envmodel import parse_environment
from hostilemdp.mdpbuild import (
    LOST_SINK,
    MdpBuilder,
    VehicleState,
    build_mdp,
    dump_mdp,
    export_prism,
    load_mdp,
    validate_mdp,
)


def star_doc():
    """Four-region fragment: r4 bordered by r1, r3, r7; one crossing f2 -> f5.

    Beliefs about the neighbours start as point masses at 2 and 3 adversaries
    and a 2/5-3/5 split, so the expected influx is 2 + 3 + 2.6 = 7.6.
    """

    def region(rid, p_init, labels=None):
        reg = {
            "id": rid,
            "adversaries": {"min": 0, "max": 4, "p_init": p_init},
            "obstacles": {"max_level": 0, "p_obs": {"0": "1"}},
            "mu_enter": 0.3,
            "mu_leave": 0.3,
        }
        if labels:
            reg["labels"] = labels
        return reg

    return {
        "regions": [
            region("r1", {"2": "1"}, labels=["pickup"]),
            region("r3", {"3": "1"}, labels=["dropoff"]),
            region("r7", {"2": "2/5", "3": "3/5"}),
            region("r4", {"0": "1"}),
        ],
        "facets": [
            {"id": "f2", "regions": ["r1", "r4"]},
            {"id": "f5", "regions": ["r3", "r4"]},
            {"id": "f8", "regions": ["r4", "r7"]},
        ],
        "primitives": [
            {
                "from": "f2",
                "to": "f5",
                "region": "r4",
                "rate": 0.5,
                "lost": {"marginal_n": "quadratic", "marginal_o": {"0": 0.0}},
            }
        ],
        "init": {"facet": "f2", "region": "r4"},
    }


def pair_doc(side_p_init, side_window=(0, 2)):
    """Two regions joined at fb; the manual states under test sit in mid."""
    lo, hi = side_window
    return {
        "regions": [
            {
                "id": "mid",
                "adversaries": {"min": 0, "max": 3, "p_init": {"0": "1"}},
                "obstacles": {"max_level": 0, "p_obs": {"0": "1"}},
                "mu_enter": 0.3,
                "mu_leave": 0.3,
            },
            {
                "id": "side",
                "adversaries": {"min": lo, "max": hi, "p_init": side_p_init},
                "obstacles": {"max_level": 0, "p_obs": {"0": "1"}},
                "mu_enter": 0.1,
                "mu_leave": 0.1,
                "labels": ["pickup", "dropoff"],
            },
        ],
        "facets": [
            {"id": "fa", "regions": ["mid"]},
            {"id": "fb", "regions": ["mid", "side"]},
        ],
        "primitives": [
            {
                "from": "fa",
                "to": "fb",
                "region": "mid",
                "rate": 1.0,
                "lost": {"marginal_n": "quadratic", "marginal_o": {"0": 0.0}},
            }
        ],
        "init": {"facet": "fa", "region": "mid"},
    }


def loop_doc(outcomes=None, marginal_n=None):
    """One region with two outer facets; the only crossing goes fa -> fb."""
    prim = {
        "from": "fa",
        "to": "fb",
        "region": "g",
        "rate": 1.0,
        "lost": {"marginal_n": marginal_n or {"0": 0.0}, "marginal_o": {"0": 1.0}},
    }
    if outcomes:
        prim["outcomes"] = outcomes
    return {
        "regions": [
            {
                "id": "g",
                "adversaries": {"min": 0, "max": 0, "p_init": {"0": "1"}},
                "obstacles": {"max_level": 0, "p_obs": {"0": "1"}},
                "mu_enter": 0.5,
                "mu_leave": 0.5,
                "labels": ["pickup", "dropoff"],
            }
        ],
        "facets": [{"id": "fa", "regions": ["g"]}, {"id": "fb", "regions": ["g"]}],
        "primitives": [prim],
        "init": {"facet": "fa", "region": "g"},
    }


class TestEventRace:
    """Per-state rate and successor distribution of the exponential race."""

    def setup_method(self):
        self.env = parse_environment(star_doc(), name="star")
        self.builder = MdpBuilder(self.env)
        self.prim = self.env.primitives_from("f2", "r4")[0]
        self.state = VehicleState("f2", "r4", 2, 0, True, (0, 0, 0))

    def test_neighbour_order_is_declaration_order(self):
        assert self.env.neighbors("r4") == ("r1", "r3", "r7")

    def test_total_rate(self):
        # 0.5 crossing + 0.3 * 2 leaving + 0.3 * 7.6 expected influx
        nu = self.builder.estimated_rate(self.state, self.prim)
        assert nu == pytest.approx(3.38, abs=1e-9)

    def test_row_is_a_distribution(self):
        row = self.builder.transitions(self.state, self.prim)
        assert sum(p for _, p in row) == pytest.approx(1.0, abs=1e-12)
        assert all(p > 0 for _, p in row)

    def test_enter_probabilities_split_by_expected_count(self):
        row = dict(self.builder.transitions(self.state, self.prim))
        children = {
            rid: self.builder.belief_sets[rid].child(0, LEFT)
            for rid in ("r1", "r3", "r7")
        }
        enter_r1 = self.state._replace(count=3, beliefs=(children["r1"], 0, 0))
        enter_r3 = self.state._replace(count=3, beliefs=(0, children["r3"], 0))
        enter_r7 = self.state._replace(count=3, beliefs=(0, 0, children["r7"]))
        assert row[enter_r1] == pytest.approx(0.3 * 2.0 / 3.38, abs=1e-12)
        assert row[enter_r3] == pytest.approx(0.3 * 3.0 / 3.38, abs=1e-12)
        assert row[enter_r7] == pytest.approx(0.3 * 2.6 / 3.38, abs=1e-12)
        # factored form: P(an entry wins the race) ~ 0.68, of which ~ 0.26
        # is attributable to r1; the rounded product must stay close
        assert abs(row[enter_r1] - 0.68 * 0.26) <= 0.005

    def test_enter_conditions_the_source_belief_on_a_departure(self):
        row = dict(self.builder.transitions(self.state, self.prim))
        bset = self.builder.belief_sets["r1"]
        child = bset.child(0, LEFT)
        # point mass at 2 shifts down to a point mass at 1
        member = bset.members[child]
        assert dict(member.items()) == {1: 1}
        assert any(s.beliefs == (child, 0, 0) for s in row)

    def test_leave_splits_evenly_over_receivers(self):
        row = dict(self.builder.transitions(self.state, self.prim))
        expected = {}
        for i, rid in enumerate(self.env.neighbors("r4")):
            child = self.builder.belief_sets[rid].child(0, ENTERED)
            beliefs = tuple(child if j == i else 0 for j in range(3))
            expected[self.state._replace(count=1, beliefs=beliefs)] = 0.3 * 2 / (3.38 * 3)
        got = {s: p for s, p in row.items() if s.count == 1}
        assert set(got) == set(expected)
        for s, p in expected.items():
            assert row[s] == pytest.approx(p, abs=1e-12)

    def test_crossing_redraws_count_from_tracked_belief(self):
        row = dict(self.builder.transitions(self.state, self.prim))
        # f5 leads to r3, whose tracked belief is still the point mass at 3
        landed = VehicleState("f5", "r3", 3, 0, True, (0,))
        assert row[landed] == pytest.approx(0.5 / 3.38, abs=1e-12)
        assert not any(s.region == "r3" and s.count != 3 for s in row)

    def test_lost_states_reject_transitions(self):
        lost = self.state._replace(alive=False)
        with pytest.raises(ValueError):
            self.builder.transitions(lost, self.prim)


class TestEventIndicators:
    """The four degenerate cases where an event family switches off."""

    @staticmethod
    def race(side_p_init, count, side_window=(0, 2)):
        env = parse_environment(pair_doc(side_p_init, side_window), name="pair")
        builder = MdpBuilder(env)
        prim = env.primitives_from("fa", "mid")[0]
        state = VehicleState("fa", "mid", count, 0, True, (0,))
        row = builder.transitions(state, prim)
        assert sum(p for _, p in row) == pytest.approx(1.0, abs=1e-12)
        deltas = {s.count - count for s, p in row if s.region == "mid" and s.alive}
        return builder.estimated_rate(state, prim), deltas

    def test_no_leave_when_neighbour_is_saturated(self):
        # belief about side is a point mass at its ceiling: nowhere to go
        nu, deltas = self.race({"2": "1"}, count=2)
        assert deltas == {1}
        assert nu == pytest.approx(1.0 + 0.3 * 2.0, abs=1e-12)

    def test_no_enter_when_neighbour_is_empty(self):
        nu, deltas = self.race({"0": "1"}, count=2)
        assert deltas == {-1}
        assert nu == pytest.approx(1.0 + 0.3 * 2.0, abs=1e-12)

    def test_no_enter_at_count_ceiling(self):
        nu, deltas = self.race({"1": "1"}, count=3)
        assert deltas == {-1}
        assert nu == pytest.approx(1.0 + 0.3 * 3.0, abs=1e-12)

    def test_no_leave_at_count_floor(self):
        nu, deltas = self.race({"1": "1"}, count=0)
        assert deltas == {1}
        assert nu == pytest.approx(1.0 + 0.3 * 1.0, abs=1e-12)


class TestCrossings:
    def test_crossing_mass_factorizes_over_fresh_observation(self, corridor_env):
        """Landing mass = crossing share x exit pmf x belief x obstacle pmf."""
        builder = MdpBuilder(corridor_env)
        init = builder.initial_state()
        for prim in corridor_env.primitives_from(init.facet, init.region):
            row = dict(builder.transitions(init, prim))
            nu = builder.estimated_rate(init, prim)
            p_lost = prim.lost[(init.count, init.level)]
            for exit_facet, q in prim.exit_facets():
                succ_rid = corridor_env.successor_region(exit_facet, init.region)
                if succ_rid == init.region:
                    continue
                region = corridor_env.regions[succ_rid]
                fresh = (0,) * len(corridor_env.neighbors(succ_rid))
                for n2, pn in region.initial_belief.items():
                    for o2, po in region.obstacle_items():
                        landed = VehicleState(exit_facet, succ_rid, n2, o2, True, fresh)
                        want = prim.rate / nu * q * float(pn) * float(po) * (1 - p_lost)
                        assert row[landed] == pytest.approx(want, abs=1e-12)

    def test_outer_boundary_keeps_observation(self):
        env = parse_environment(loop_doc(), name="loop")
        builder = MdpBuilder(env)
        state = builder.initial_state()
        prim = env.primitives_from("fa", "g")[0]
        row = builder.transitions(state, prim)
        # no region is entered, so only the facet changes
        assert row == [(state._replace(facet="fb"), 1.0)]

    def test_outcome_pmf_splits_exit_mass(self):
        outcomes = [{"facet": "fb", "p": "7/10"}, {"facet": "fa", "p": "3/10"}]
        env = parse_environment(loop_doc(outcomes=outcomes), name="loop")
        builder = MdpBuilder(env)
        state = builder.initial_state()
        prim = env.primitives_from("fa", "g")[0]
        row = dict(builder.transitions(state, prim))
        assert row[state._replace(facet="fb")] == pytest.approx(0.7, abs=1e-12)
        assert row[state] == pytest.approx(0.3, abs=1e-12)

    def test_dead_end_gets_stay_loop_and_warning(self):
        env = parse_environment(loop_doc(), name="loop")
        mdp = build_mdp(env)
        assert mdp.n_states == 2
        stuck = mdp.states.index(VehicleState("fb", "g", 0, 0, True, ()))
        stay = len(env.primitives)
        assert mdp.enabled[stuck] == [stay]
        assert mdp.rows[stuck] == [[(stuck, 1.0)]]
        assert any("dead end" in w and "'fb'" in w for w in mdp.warnings)


class TestLostStates:
    def test_lost_mass_lands_in_one_state_per_facet_region(self, corridor_env, corridor_mdp):
        mdp = corridor_mdp
        lost = [i for i, s in enumerate(mdp.states) if not s.alive]
        assert lost, "corridor should have some lossy crossings"
        seen = set()
        for i in lost:
            s = mdp.states[i]
            region = corridor_env.regions[s.region]
            # canonical shape: floor count, no obstacle, fresh beliefs
            assert s.count == region.min_adversaries
            assert s.level == 0
            assert s.beliefs == (0,) * len(corridor_env.neighbors(s.region))
            assert (s.facet, s.region) not in seen
            seen.add((s.facet, s.region))
            assert mdp.rows[i] == [[(i, 1.0)]]

    def test_lost_states_keep_region_labels(self, corridor_env, corridor_mdp):
        mdp = corridor_mdp
        for i, s in enumerate(mdp.states):
            if s.alive:
                continue
            assert i not in mdp.label_set("alive")
            for label in ("pickup", "dropoff"):
                holds = label in corridor_env.regions[s.region].labels
                assert (i in mdp.label_set(label)) == holds

    def test_merge_lost_uses_one_unlabeled_sink(self, corridor_env):
        mdp = build_mdp(corridor_env, merge_lost=True)
        lost = [i for i, s in enumerate(mdp.states) if not s.alive]
        assert len(lost) == 1
        sink = lost[0]
        assert mdp.states[sink] == LOST_SINK
        for name in mdp.labels:
            assert sink not in mdp.label_set(name)
        assert mdp.rows[sink] == [[(sink, 1.0)]]

    def test_merge_lost_preserves_alive_dynamics(self, corridor_env, corridor_mdp):
        merged = build_mdp(corridor_env, merge_lost=True)
        plain_alive = [s for s in corridor_mdp.states if s.alive]
        merged_alive = [s for s in merged.states if s.alive]
        assert plain_alive == merged_alive
        # per-action mass over alive successors matches state by state
        for s, descriptor in enumerate(corridor_mdp.states):
            if not descriptor.alive:
                continue
            m = merged.states.index(descriptor)
            for row_a, row_b in zip(corridor_mdp.rows[s], merged.rows[m]):
                a = {corridor_mdp.states[t]: p for t, p in row_a if corridor_mdp.states[t].alive}
                b = {merged.states[t]: p for t, p in row_b if merged.states[t].alive}
                assert a == b


class TestBuildFuzz:
    def test_random_environments_build_clean(self):
        rng = np.random.default_rng(20260816)
        for i in range(20):
            env = random_environment(rng)
            mdp = build_mdp(env, merge_lost=bool(i % 2))
            assert validate_mdp(mdp) == []
            assert mdp.states[mdp.init] == MdpBuilder(env).initial_state()

    def test_build_is_deterministic(self, corridor_env):
        a = build_mdp(corridor_env)
        b = build_mdp(corridor_env)
        assert a.states == b.states
        assert a.enabled == b.enabled
        assert a.rows == b.rows
        assert a.labels == b.labels
        assert a.warnings == b.warnings


class TestValidation:
    def test_detects_broken_row_sum(self, corridor_mdp):
        mdp = copy.deepcopy(corridor_mdp)
        succ, p = mdp.rows[mdp.init][0][0]
        mdp.rows[mdp.init][0][0] = (succ, p + 1e-6)
        kinds = {v.kind for v in validate_mdp(mdp)}
        assert kinds == {"row-sum"}

    def test_detects_leaky_lost_state(self, corridor_mdp):
        mdp = copy.deepcopy(corridor_mdp)
        lost = next(i for i, s in enumerate(mdp.states) if not s.alive)
        mdp.rows[lost][0] = [(lost, 0.5), (mdp.init, 0.5)]
        kinds = {v.kind for v in validate_mdp(mdp)}
        assert "lost-absorbing" in kinds

    def test_detects_missing_actions(self, corridor_mdp):
        mdp = copy.deepcopy(corridor_mdp)
        mdp.enabled[3] = []
        mdp.rows[3] = []
        kinds = {v.kind for v in validate_mdp(mdp)}
        assert "no-action" in kinds

    def test_clean_model_passes(self, corridor_mdp):
        assert validate_mdp(corridor_mdp) == []


class TestSerialization:
    def test_dump_load_roundtrip(self, corridor_mdp, tmp_path):
        path = tmp_path / "model.json"
        dump_mdp(corridor_mdp, path)
        back = load_mdp(path)
        assert back.states == corridor_mdp.states
        assert back.action_names == corridor_mdp.action_names
        assert back.enabled == corridor_mdp.enabled
        assert back.rows == corridor_mdp.rows
        assert back.init == corridor_mdp.init
        assert back.labels == corridor_mdp.labels

    def test_sink_roundtrips(self, corridor_env, tmp_path):
        mdp = build_mdp(corridor_env, merge_lost=True)
        path = tmp_path / "merged.json"
        dump_mdp(mdp, path)
        back = load_mdp(path)
        assert LOST_SINK in back.states
        assert back.states == mdp.states

    def test_export_is_byte_deterministic(self, corridor_mdp, tmp_path):
        first = export_prism(corridor_mdp, tmp_path / "a" / "model")
        second = export_prism(corridor_mdp, tmp_path / "b" / "model")
        assert [p.suffix for p in first] == [".sta", ".tra", ".lab"]
        for fa, fb in zip(first, second):
            assert fa.read_bytes() == fb.read_bytes()

    def test_export_formats(self, corridor_mdp, tmp_path):
        sta, tra, lab = export_prism(corridor_mdp, tmp_path / "model")

        tra_lines = tra.read_text().splitlines()
        n, choices, transitions = map(int, tra_lines[0].split())
        assert n == corridor_mdp.n_states
        assert choices == corridor_mdp.n_choices()
        assert transitions == corridor_mdp.n_transitions()
        assert len(tra_lines) == 1 + transitions
        src, choice, dst, p = tra_lines[1].split()
        assert (int(src), int(choice)) == (0, 0)
        assert 0.0 < float(p) <= 1.0

        sta_lines = sta.read_text().splitlines()
        assert sta_lines[0] == "(facet,region,count,level,alive,beliefs)"
        assert len(sta_lines) == 1 + n
        assert sta_lines[1].startswith("0:(")

        lab_lines = lab.read_text().splitlines()
        assert lab_lines[0] == '0="init" 1="deadlock" 2="alive" 3="rp" 4="rd"'
        assert lab_lines[1].startswith("0: 0")
