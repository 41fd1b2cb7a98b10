"""Command-line entry point: gen, sdm, train, run, oracle.

Exit codes: 0 success, 2 configuration error, 3 validation error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .catalog import Severity
from .chains import CandidatePool, Weights, rank_chains
from .errors import AdaptChainError, ConfigError, UnknownTaskError, ValidationError
from .harness import ExperimentConfig, export_metrics, generate_scenario, run_experiment
from .rl import RLConfig, train
from .sim import load_scenario
from .workflow import compute_sdm, parse_workflow


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _rl_config(args) -> RLConfig:
    d = _read_json(args.rl) if getattr(args, "rl", None) else {}
    if getattr(args, "episodes", None) is not None:
        d["episodes"] = args.episodes
    return RLConfig.from_dict(d)


def cmd_gen(args):
    doc = generate_scenario(args.tasks, args.providers, args.services, args.seed,
                            attack_rate=args.attack_rate)
    text = json.dumps(doc, indent=1)
    if args.output:
        Path(args.output).write_text(text)
    else:
        print(text)


def cmd_sdm(args):
    try:
        text = Path(args.workflow).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.workflow}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = text  # let the parser report where it breaks
    if isinstance(doc, dict) and "workflow" in doc and "tasks" not in doc:
        doc = doc["workflow"]  # a scenario file works too
    out = compute_sdm(parse_workflow(doc)).to_csv()
    if args.output:
        Path(args.output).write_text(out)
    else:
        sys.stdout.write(out)


def cmd_train(args):
    sc = load_scenario(args.scenario)
    cfg = _rl_config(args)
    q, log = train(sc, cfg, args.seed, weights=args.weights)
    q.save(args.output)
    if args.log:
        log.write_csv(args.log)
    mean = log.rows[-1][3] if log.rows else 0.0
    print(f"trained {cfg.episodes} episodes, {len(q)} Q entries, mean chain cost {mean:.4f}", file=sys.stderr)


def cmd_run(args):
    strategies = tuple(s.strip() for s in args.strategy.split(",") if s.strip())
    rl = _rl_config(args)
    qtable = args.qtable
    if "chain" in strategies and qtable is None and args.episodes is None:
        raise ConfigError("strategy chain needs --qtable or --episodes to train first")
    cfg = ExperimentConfig(args.scenario, strategies, args.executions, args.attack_rate, args.weights,
                           rl, args.seed, qtable, None, args.traces, args.window)
    report = run_experiment(cfg)
    if args.output:
        export_metrics(report, args.output)
    wr = csv.writer(sys.stdout)
    wr.writerow(["strategy", "mean_total", "mean_ms", "violations", "chains_applied"])
    for m in report.strategies.values():
        wr.writerow([m.strategy, f"{m.mean_total:.6g}", f"{m.mean_ms:.6g}", m.violations, m.chains_applied])


def cmd_oracle(args):
    sc = load_scenario(args.scenario)
    w = sc.workflow
    if args.vt not in w.task_map:
        raise UnknownTaskError(args.vt)
    sdm = compute_sdm(w)
    weights = Weights.parse(args.weights) if args.weights else sc.tenant.weights
    pool = CandidatePool(w, sdm, sc.catalog, sc.constraints, args.max_chains, args.max_chain_length)
    cands = pool.resolved(args.vt, args.attack, Severity.parse(args.severity))
    ranked = rank_chains(w, cands, None, weights, args.vt, args.attack, sdm, sc.bind(),
                         catalog=sc.catalog, constraints=sc.constraints, normalize=args.normalize)
    if cands.truncated:
        print(f"warning: candidate set truncated at {len(cands)} chains", file=sys.stderr)
    wr = csv.writer(sys.stdout)
    wr.writerow(["rank", "chain", "price", "time", "value", "mitigation_score", "total"])
    for i, (chain, c) in enumerate(ranked[:args.top], 1):
        wr.writerow([i, chain.key, f"{c.price:.6g}", f"{c.time:.6g}", f"{c.value:.6g}",
                     f"{c.mitigation_score:.6g}", f"{c.total:.6g}"])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptchain", description="Adaptation-chain selection for cloud workflows")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random scenario")
    g.add_argument("--tasks", type=int, required=True)
    g.add_argument("--providers", type=int, default=5)
    g.add_argument("--services", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--attack-rate", type=float, default=0.3)
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("sdm", help="print the security dependency matrix as CSV")
    s.add_argument("--workflow", required=True)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_sdm)

    t = sub.add_parser("train", help="train a Q-table")
    t.add_argument("--scenario", required=True)
    t.add_argument("--episodes", type=int)
    t.add_argument("--rl", help="JSON file with RL settings")
    t.add_argument("--weights", help="price,time,value,ms magnitudes")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--log", help="training log CSV")
    t.add_argument("-o", "--output", required=True)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("run", help="evaluate strategies on paired attack streams")
    r.add_argument("--scenario", required=True)
    r.add_argument("--strategy", default="none,single,chain",
                   help="comma-separated: none, single, chain, oracle")
    r.add_argument("--qtable")
    r.add_argument("--episodes", type=int, help="train this many episodes when no Q-table is given")
    r.add_argument("--rl", help="JSON file with RL settings")
    r.add_argument("--executions", type=int, default=1000)
    r.add_argument("--full", action="store_const", const=10_000, dest="executions",
                   help="10,000 executions")
    r.add_argument("--attack-rate", type=float)
    r.add_argument("--weights")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--window", type=int, default=1000)
    r.add_argument("--traces", help="JSON-lines trace file")
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="rank every resolved chain for one violation")
    o.add_argument("--scenario", required=True)
    o.add_argument("--vt", required=True)
    o.add_argument("--attack", required=True)
    o.add_argument("--severity", default="High")
    o.add_argument("--top", type=int, default=10)
    o.add_argument("--weights")
    o.add_argument("--normalize", action="store_true")
    o.add_argument("--max-chains", type=int, default=200_000)
    o.add_argument("--max-chain-length", type=int, default=4)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValidationError, UnknownTaskError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (AdaptChainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
