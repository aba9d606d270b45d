#!/usr/bin/env python
"""Build, solve and simulate both bundled city cases, then compare them.

Prints the mission value, state count and a Monte Carlo cross-check for
each adversary placement, plus the value gap between them.  The bundled
files are calibrated so case B clearly beats case A; run this after any
change to scripts/make_city_env.py to confirm the separation still holds.
"""

from __future__ import annotations

import argparse
import sys
import time
from importlib import resources
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from hostilemdp.envmodel import load_environment
from hostilemdp.mdpbuild import build_mdp
from hostilemdp.simrun import estimate_success
from hostilemdp.synth import synthesize_mission

#: state count of the reference corridor-style model this grid is sized against
COMPARISON_STATES = 1079


def run_case(name: str, runs: int, seed: int):
    path = resources.files("hostilemdp.data") / f"city_{name}.json"
    env = load_environment(path)
    t0 = time.perf_counter()
    mdp = build_mdp(env)
    built = time.perf_counter() - t0
    t0 = time.perf_counter()
    strategy = synthesize_mission(mdp)
    solved = time.perf_counter() - t0
    est = estimate_success(mdp, strategy, runs=runs, master_seed=seed)
    lo, hi = est.interval()
    print(f"{name}: {mdp.n_states} states ({COMPARISON_STATES} in the reference "
          f"corridor-style model), built {built:.1f}s, solved {solved:.1f}s")
    print(f"  mission value at init: {strategy.value:.6f}")
    print(f"  simulated over {runs} runs: {est.estimate:.6f} "
          f"(95% interval [{lo:.6f}, {hi:.6f}])")
    return strategy.value


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--runs", type=int, default=100_000,
                        help="Monte Carlo runs per case (default 100000)")
    parser.add_argument("--seed", type=int, default=7,
                        help="master seed for the simulations (default 7)")
    args = parser.parse_args(argv)

    value_a = run_case("caseA", args.runs, args.seed)
    value_b = run_case("caseB", args.runs, args.seed)
    gap = value_b - value_a
    print(f"gap (caseB - caseA): {gap:.6f}")
    if gap < 0.3:
        print("warning: separation below 0.3, recalibrate make_city_env.py",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
