"""Seed sweep exposing the degenerate optima of the joint-target system.

The stored bit can be read either from green at t or from red at t+1;
different training seeds land on either solution. This runs the
target-future decomposition over a seed range and tabulates which cell
won and how unimodal the shares were.

    python3 scripts/run_degeneracy.py --seeds 10 --out results/degeneracy
"""

import argparse
import json
import os

from tedecomp import boolnet
from tedecomp.decomposer import TARGET_FUTURE, SchemeConfig, run_decomposition
from tedecomp.ib_core import BetaSchedule


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/degeneracy")
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--steps", type=int, default=9000)
    parser.add_argument("--sim-seed", type=int, default=7)
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    series = boolnet.simulate(boolnet.fig2a_spec(), 10**4, args.sim_seed)
    rows = []
    for seed in range(args.seeds):
        config = SchemeConfig(
            direction=TARGET_FUTURE,
            schedule=BetaSchedule(5e-5, 3.0, args.steps),
            warmup_fraction=0.15,
            head_hidden=(128,),
            log_every=100,
            seed=seed,
        )
        _, _, result = run_decomposition(series, (0, 1), (2, 3), config)
        total = sum(result.shares_bits.values())
        winner, top = max(result.shares_bits.items(), key=lambda kv: kv[1])
        frac = top / total if total > 0 else 0.0
        rows.append({"seed": seed, "te_bits": result.te_bits, "winner": winner, "top_fraction": frac})
        print(f"seed {seed}: te={result.te_bits:.3f}  winner={winner}  ({100 * frac:.0f}% of KL)")
    counts = {}
    for row in rows:
        counts[row["winner"]] = counts.get(row["winner"], 0) + 1
    print("\nwinner counts:", counts)
    with open(os.path.join(args.out, "degeneracy.json"), "w") as fh:
        json.dump({"runs": rows, "winner_counts": counts}, fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main()
