"""Single vs chain comparison on generated scenarios, both weightings, several seeds.

    python scripts/run_replication.py --seeds 0 1 2 3 --episodes 100000 --executions 1000
"""
import argparse
import time

from adaptchain.harness import ExperimentConfig, generate_scenario, run_experiment
from adaptchain.rl import RLConfig
from adaptchain.sim import Scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--tasks", type=int, default=10)
    ap.add_argument("--episodes", type=int, default=100_000)
    ap.add_argument("--executions", type=int, default=1000)
    ap.add_argument("--attack-rate", type=float, default=0.3)
    ap.add_argument("--oracle", action="store_true", help="also run the exhaustive per-violation oracle")
    args = ap.parse_args()

    strategies = ("single", "chain") + (("chain_oracle",) if args.oracle else ())
    print("seed,weights," + ",".join(f"{s}_total" for s in strategies) + ",chain_ms,chain_wins,seconds")
    for seed in args.seeds:
        doc = generate_scenario(args.tasks, seed=seed)
        for weights in ("1-1-1-7", "3-3-3-1"):
            t0 = time.perf_counter()
            rep = run_experiment(ExperimentConfig(
                Scenario.from_dict(doc), strategies=strategies, executions=args.executions,
                attack_rate=args.attack_rate, weights=weights, rl=RLConfig(episodes=args.episodes),
                master_seed=seed))
            totals = [rep[s].mean_total for s in strategies]
            wins = rep["chain"].mean_total < rep["single"].mean_total
            print(f"{seed},{weights}," + ",".join(f"{t:.3f}" for t in totals)
                  + f",{rep['chain'].mean_ms:.4f},{wins},{time.perf_counter() - t0:.1f}", flush=True)


if __name__ == "__main__":
    main()
