"""Command line front end.

Every subcommand takes ``--env`` with either a path to an environment JSON
file or the name of a bundled one (``corridor``, ``caseA``, ``caseB``).
Results go to stdout; the resolved configuration and any warnings go to
stderr.  Exit status: 0 on success, 1 when the input fails validation or a
solve fails, 2 for bad usage (argparse's convention).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .belief import enumerate_reachable, render_dot
from .envmodel import (
    DROPOFF,
    PICKUP,
    EnvironmentFormatError,
    load_environment,
    scale_rates,
)
from .mdpbuild import (
    VehicleState,
    build_mdp,
    dump_mdp,
    export_prism,
    load_mdp,
    validate_mdp,
)
from .simrun import classify_step, estimate_success
from .synth import ConvergenceError, synthesize_mission

BUNDLED = {"corridor": "corridor.json", "caseA": "city_caseA.json", "caseB": "city_caseB.json"}


def _resolve_env_path(spec: str) -> Path:
    if spec in BUNDLED:
        return Path(resources.files("hostilemdp.data") / BUNDLED[spec])
    return Path(spec)


def _echo_config(args: argparse.Namespace):
    shown = {k: str(v) for k, v in sorted(vars(args).items()) if k != "func" and v is not None}
    print(f"config: {json.dumps(shown)}", file=sys.stderr)


def _load(args) -> "Environment":
    if not args.env.exists():
        raise FileNotFoundError(
            f"{args.env} is neither a file nor a bundled environment "
            f"(bundled: {', '.join(sorted(BUNDLED))})"
        )
    env = load_environment(args.env)
    if getattr(args, "scale", None) not in (None, 1.0):
        env = scale_rates(env, args.scale)
    for w in env.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return env


def _obtain_mdp(args):
    """MDP from --mdp dump when given, otherwise built from --env."""
    if getattr(args, "mdp", None):
        return load_mdp(args.mdp)
    mdp = build_mdp(_load(args), merge_lost=args.merge_lost)
    for w in mdp.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return mdp


def cmd_validate_env(args) -> int:
    env = _load(args)
    n_prims = len(env.primitives)
    print(f"environment {env.name!r}: {len(env.regions)} regions, "
          f"{len(env.facets)} facets, {n_prims} primitives")
    print(f"init: facet {env.init_facet!r}, region {env.init_region!r}")
    for label in (PICKUP, DROPOFF):
        tagged = [r.id for r in env.regions.values() if label in r.labels]
        print(f"{label}: {tagged[0]}")
    print("ok")
    return 0


def cmd_beliefs(args) -> int:
    env = _load(args)
    if args.region not in env.regions:
        print(f"error: unknown region {args.region!r}", file=sys.stderr)
        return 1
    region = env.regions[args.region]
    bset = enumerate_reachable(region.initial_belief)
    print(f"region {region.id!r}: bounds [{region.min_adversaries}, {region.max_adversaries}], "
          f"{len(bset)} reachable beliefs, "
          f"at most {bset.max_redistributions} redistributions on any path")
    for i, b in enumerate(bset.members):
        support = ", ".join(f"{n}:{p}" for n, p in b.items())
        kids = bset.edges[i]
        arrows = " ".join(f"{kind}->{dst}" for kind, dst in sorted(kids.items()))
        print(f"  [{i}] window [{b.start}..{b.end}]  {{{support}}}  {arrows}".rstrip())
    if args.dot:
        Path(args.dot).write_text(render_dot(bset, name=f"beliefs_{region.id}"))
        print(f"wrote {args.dot}")
    return 0


def cmd_build(args) -> int:
    mdp = _obtain_mdp(args)
    bad = validate_mdp(mdp)
    print(f"states: {mdp.n_states}")
    print(f"choices: {mdp.n_choices()}")
    print(f"transitions: {mdp.n_transitions()}")
    for name in sorted(mdp.labels):
        print(f"label {name}: {len(mdp.labels[name])} states")
    if bad:
        for v in bad[:20]:
            print(f"violation: state {v.state} action {v.action}: {v.kind} ({v.detail})",
                  file=sys.stderr)
        print(f"invalid: {len(bad)} violations", file=sys.stderr)
        return 1
    print("row sums and absorption checks: ok")
    if args.dump_mdp:
        dump_mdp(mdp, args.dump_mdp)
        print(f"wrote {args.dump_mdp}")
    return 0


def _fmt_state(desc) -> str:
    if isinstance(desc, VehicleState):
        if not desc.alive:
            return f"lost@{desc.facet}|{desc.region}" if desc.region else "lost-sink"
        return f"{desc.facet}|{desc.region} n={desc.count} o={desc.level}"
    return repr(desc)


def _policy_walk(mdp, strategy, limit: int = 24):
    """Nominal route under the strategy, one (state, phase, action) per row.

    Purely illustrative: at each state it plays the chosen action and
    follows the likeliest successor among those that move the vehicle
    (adversary churn and getting lost are skipped), stopping at delivery,
    at a state the policy does not cover, on a revisit, or at ``limit``
    rows.
    """
    rows = []
    alive = mdp.label_set("alive")
    dropoff = mdp.label_set(DROPOFF)
    s = mdp.init
    satisfied = False
    seen = set()
    while len(rows) < limit:
        if not satisfied and s in strategy.switch:
            satisfied = True
        if satisfied and s in dropoff:
            rows.append((s, "second", "(delivered)"))
            break
        phase = "second" if satisfied else "first"
        a = (strategy.second if satisfied else strategy.first).get(s)
        if a is None or (s, satisfied) in seen:
            break
        seen.add((s, satisfied))
        rows.append((s, phase, mdp.action_names[a]))
        here = mdp.states[s]
        moves = [
            (t, p) for t, p in mdp.row(s, a)
            if t in alive and (
                not isinstance(here, VehicleState)
                or (mdp.states[t].facet, mdp.states[t].region)
                != (here.facet, here.region)
            )
        ]
        if not moves:
            break
        s = max(moves, key=lambda t: t[1])[0]
    return rows


def cmd_synthesize(args) -> int:
    mdp = _obtain_mdp(args)
    methods = ("vi", "lp") if args.method == "both" else (args.method,)
    results = []
    for m in methods:
        solver_kw = {"tol": args.tol} if m == "vi" else {}
        try:
            results.append(synthesize_mission(mdp, method=m, **solver_kw))
        except ConvergenceError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    strategy = results[0]
    init = mdp.init
    print(f"states: {mdp.n_states}")
    print(f"mission value at init: {strategy.value:.10f}")
    print(f"  phase 1 (reach pickup, delivery still possible): "
          f"{strategy.values_first[init]:.10f}")
    print(f"  phase 2 (reach dropoff from here): {strategy.values_second[init]:.10f}")
    print(f"switch states (pickup, delivery still possible): {len(strategy.switch)}")
    print(f"first-stage policy: {len(strategy.first)} states")
    print(f"second-stage policy: {len(strategy.second)} states")
    if len(results) == 2:
        gap = max(
            float(np.max(np.abs(results[0].values_first - results[1].values_first))),
            float(np.max(np.abs(results[0].values_second - results[1].values_second))),
        )
        print(f"method agreement (vi vs lp): value {results[1].value:.10f}, "
              f"max |diff| {gap:.3e}")
    walk = _policy_walk(mdp, strategy)
    if walk:
        print("nominal route (likeliest successful crossings):")
        for s, phase, action in walk:
            print(f"  [{phase:6}] {s:>6}  {_fmt_state(mdp.states[s]):<28} {action}")
    if args.out:
        payload = {
            "value": strategy.value,
            "method": strategy.method,
            "switch": sorted(strategy.switch),
            "first": {str(s): mdp.action_names[a] for s, a in sorted(strategy.first.items())},
            "second": {str(s): mdp.action_names[a] for s, a in sorted(strategy.second.items())},
        }
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
        print(f"wrote {args.out}")
    return 0


def cmd_simulate(args) -> int:
    mdp = _obtain_mdp(args)
    try:
        strategy = synthesize_mission(mdp, method=args.method)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    trace_file = None
    trace_hook = None
    workers = args.workers
    if args.trace_out:
        trace_file = open(args.trace_out, "w", newline="")
        writer = csv.writer(trace_file)
        writer.writerow(["run", "step", "state", "action", "event", "outcome"])
        workers = 1

        def trace_hook(run_index, trace):
            for k, a in enumerate(trace.actions):
                writer.writerow([
                    run_index, k, trace.states[k], mdp.action_names[a],
                    classify_step(mdp, trace.states[k], trace.states[k + 1]),
                    trace.outcome,
                ])
            writer.writerow([run_index, len(trace.actions), trace.states[-1],
                             "", "", trace.outcome])

    try:
        est = estimate_success(
            mdp, strategy, runs=args.runs, master_seed=args.seed,
            max_steps=args.max_steps, workers=workers, trace_hook=trace_hook,
        )
    finally:
        if trace_file is not None:
            trace_file.close()
            print(f"wrote {args.trace_out}", file=sys.stderr)

    lo, hi = est.interval()
    if args.json:
        print(json.dumps({
            "value": strategy.value, "runs": est.runs, "satisfied": est.satisfied,
            "estimate": est.estimate, "half_width": est.half_width,
            "interval": [lo, hi], "delivered": est.delivered, "lost": est.lost,
            "step_limit": est.step_limit, "seed": est.master_seed,
        }))
        return 0
    print(f"mission value at init: {strategy.value:.6f}")
    print(f"runs: {est.runs} (seed {est.master_seed})")
    print(f"satisfied: {est.satisfied} ({est.estimate:.6f}, "
          f"95% interval [{lo:.6f}, {hi:.6f}])")
    print(f"delivered: {est.delivered}")
    print(f"lost: {est.lost}  step-limit: {est.step_limit}")
    return 0


def cmd_export(args) -> int:
    mdp = _obtain_mdp(args)
    paths = export_prism(mdp, args.out)
    for p in paths:
        print(f"wrote {p}")
    return 0


def _add_env_arg(parser, required=True):
    parser.add_argument("--env", type=_resolve_env_path, required=required,
                        help="environment JSON path or bundled name "
                             f"({', '.join(sorted(BUNDLED))})")
    parser.add_argument("--scale", type=float, default=None,
                        help="multiply every rate by this factor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hostile-mdp",
        description="Synthesize and simulate delivery routes through hostile regions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-env", help="parse an environment and report its shape")
    _add_env_arg(p)
    p.set_defaults(func=cmd_validate_env)

    p = sub.add_parser("beliefs", help="enumerate the belief closure of one region")
    _add_env_arg(p)
    p.add_argument("--region", required=True)
    p.add_argument("--dot", help="write the update graph as GraphViz dot")
    p.set_defaults(func=cmd_beliefs)

    p = sub.add_parser("build", help="expand the MDP and check its structure")
    _add_env_arg(p)
    p.add_argument("--merge-lost", action="store_true",
                   help="collapse all lost states into one absorbing sink")
    p.add_argument("--dump-mdp", help="dump the MDP as a single JSON document")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("synthesize", help="solve the mission property and extract a strategy")
    _add_env_arg(p, required=False)
    p.add_argument("--mdp", help="load a dumped MDP instead of building from --env")
    p.add_argument("--merge-lost", action="store_true")
    p.add_argument("--method", choices=("vi", "lp", "both"), default="vi",
                   help="solver; 'both' runs the two and reports their gap")
    p.add_argument("--tol", type=float, default=1e-9, help="value-iteration stop tolerance")
    p.add_argument("--out", help="write the strategy as JSON")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="estimate mission success by Monte Carlo runs")
    _add_env_arg(p, required=False)
    p.add_argument("--mdp", help="load a dumped MDP instead of building from --env")
    p.add_argument("--merge-lost", action="store_true")
    p.add_argument("--method", choices=("vi", "lp"), default="vi")
    p.add_argument("--runs", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=100_000)
    p.add_argument("--workers", type=int, default=None,
                   help="thread count (default: HOSTILE_MDP_THREADS or cpu count, capped at 8)")
    p.add_argument("--trace-out",
                   help="write per-step trace rows as CSV (forces a single worker; "
                        "meant for small --runs)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export", help="write PRISM explicit-state files (.sta/.tra/.lab)")
    _add_env_arg(p)
    p.add_argument("--merge-lost", action="store_true")
    p.add_argument("--out", required=True, help="output base path (extensions are added)")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("synthesize", "simulate") and not args.mdp and args.env is None:
        parser.error(f"{args.command}: one of --env or --mdp is required")
    _echo_config(args)
    try:
        return args.func(args)
    except EnvironmentFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
