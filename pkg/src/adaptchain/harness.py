"""Scenario generation, experiment orchestration and metrics export."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catalog import ACTION_TYPES, default_catalog
from .chains import CandidatePool, Weights
from .errors import ConfigError
from .rl import GreedyPolicy, QTable, RLConfig, train
from .sim import NoAdaptation, OracleChain, Scenario, SingleBest, Tenant, execute_instance, load_scenario
from .workflow import compute_sdm

STRATEGIES = ("none", "single", "chain", "chain_oracle")
_STRATEGY_ALIASES = {"oracle": "chain_oracle"}
CSV_HEADER = ["strategy", "executions", "mean_time", "mean_price", "mean_value", "mean_ms",
              "mean_total", "std_total", "violations", "chains_applied"]


def generate_scenario(n_tasks: int, n_providers: int = 5, n_services: int = 3, seed: int = 0, *,
                      attack_rate: float = 0.3, weights="1,1,1,1") -> dict:
    """Random layered-DAG scenario document.

    Every provider offers a slow, a middle and a fast service; the fast one is
    2.5-3.5 times quicker and as many times pricier than the slow one. Each
    task's candidates are the service line-up of one provider.
    """
    if n_tasks < 2 or n_providers < 1 or n_services < 1:
        raise ConfigError("need n_tasks >= 2, n_providers >= 1, n_services >= 1")
    rng = np.random.default_rng(seed)
    catalog = default_catalog()
    attacks = list(catalog.attacks)

    n_layers = max(2, min(n_tasks, round(math.sqrt(n_tasks))))
    layer_of = sorted(list(range(n_layers)) + [int(x) for x in rng.integers(0, n_layers, n_tasks - n_layers)])
    ids = [f"t{i + 1}" for i in range(n_tasks)]
    layers = [[ids[i] for i in range(n_tasks) if layer_of[i] == k] for k in range(n_layers)]

    tasks = []
    for tid in ids:
        k = int(rng.integers(1, 5))
        acts = sorted(rng.choice(len(ACTION_TYPES), size=k, replace=False))
        tasks.append({"id": tid, "c": float(rng.random()), "i": float(rng.random()),
                      "a": float(rng.random()), "value": float(rng.uniform(1.0, 10.0)),
                      "actions": [ACTION_TYPES[j] for j in acts]})

    control, data = [], []
    for k in range(1, n_layers):
        earlier = [t for layer in layers[:k] for t in layer]
        for tid in layers[k]:
            n_pred = min(len(earlier), int(rng.integers(1, 3)))
            # at least one predecessor from the layer just above keeps the layering
            preds = {layers[k - 1][int(rng.integers(len(layers[k - 1])))]}
            while len(preds) < n_pred:
                preds.add(earlier[int(rng.integers(len(earlier)))])
            for p in sorted(preds, key=ids.index):
                control.append([p, tid])
    for i, (src, dst) in enumerate(control):
        if rng.random() < 0.6:
            data.append([src, dst, f"d{i + 1}"])

    providers, services = [], []
    for p in range(n_providers):
        pid = f"p{p + 1}"
        providers.append({"id": pid})
        ratio_t = float(rng.uniform(2.5, 3.5))
        ratio_p = float(rng.uniform(2.5, 3.5))
        slow_t = float(rng.uniform(ratio_t, 50.0))
        cheap_p = float(rng.uniform(0.1, 10.0 / ratio_p))
        for s in range(n_services):
            frac = s / (n_services - 1) if n_services > 1 else 0.0
            afr = rng.random(len(attacks))
            afr = afr / afr.sum() * float(rng.random())
            services.append({
                "id": f"{pid}s{s + 1}", "provider": pid,
                "time": slow_t / ratio_t ** frac, "price": cheap_p * ratio_p ** frac,
                "c": float(rng.random()), "i": float(rng.random()), "a": float(rng.random()),
                "afr": {a: float(x) for a, x in zip(attacks, afr)},
            })
    candidates = {}
    for tid in ids:
        p = int(rng.integers(n_providers))
        candidates[tid] = [s["id"] for s in services if s["provider"] == f"p{p + 1}"]

    return {
        "workflow": {"id": f"generated-{n_tasks}-{seed}", "tasks": tasks,
                     "data_items": [e[2] for e in data], "control_edges": control, "data_edges": data},
        "providers": providers, "services": services, "candidates": candidates,
        "tenants": [{"id": "tenant", "weights": Weights.parse(weights).as_list(),
                     "adapt_trigger_threshold": "Low"}],
        "constraints": [], "binding_policy": "cheapest", "attack_rate": attack_rate,
        "detection_delay": 0,
    }


@dataclass
class ExperimentConfig:
    scenario: object  # path or loaded Scenario
    strategies: tuple = ("none", "single", "chain")
    executions: int = 1000
    attack_rate: float | None = None  # None keeps the scenario's rate
    weights: Weights | None = None  # None keeps the tenant's weights
    rl: RLConfig = field(default_factory=RLConfig)
    master_seed: int = 0
    qtable: object = None  # QTable, path, or None to train first
    metrics_path: str | None = None
    traces_path: str | None = None
    window: int = 1000

    def __post_init__(self):
        if self.executions < 1:
            raise ConfigError("executions must be at least 1")
        self.strategies = tuple(_STRATEGY_ALIASES.get(s, s) for s in self.strategies)
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies {bad}")
        if self.weights is not None:
            self.weights = Weights.parse(self.weights)


@dataclass
class StrategyMetrics:
    strategy: str
    executions: int
    mean_time: float
    mean_price: float
    mean_value: float
    mean_ms: float
    mean_total: float
    std_time: float
    std_price: float
    std_value: float
    std_ms: float
    std_total: float
    violations: int
    chains_applied: int
    rolling: list = field(default_factory=list)  # mean total per window of executions

    def row(self) -> list:
        return [self.strategy, self.executions, self.mean_time, self.mean_price, self.mean_value,
                self.mean_ms, self.mean_total, self.std_total, self.violations, self.chains_applied]


@dataclass
class MetricsReport:
    strategies: dict = field(default_factory=dict)  # name -> StrategyMetrics
    weights: list | None = None
    master_seed: int | None = None

    def __getitem__(self, name) -> StrategyMetrics:
        return self.strategies[_STRATEGY_ALIASES.get(name, name)]


def summarize(name: str, traces, window: int = 1000, rolling: bool = False) -> StrategyMetrics:
    cols = np.array([[t.totals.time, t.totals.price, t.totals.value, t.totals.mitigation_score,
                      t.totals.total] for t in traces], dtype=float)
    mean = cols.mean(axis=0)
    std = cols.std(axis=0)
    roll = []
    if rolling:
        tot = cols[:, 4]
        roll = [float(tot[i:i + window].mean()) for i in range(0, len(tot), window)]
    return StrategyMetrics(
        name, len(traces), *map(float, mean), *map(float, std[:4]), float(std[4]),
        violations=sum(len(t.violations) for t in traces),
        chains_applied=sum(1 for t in traces for d in t.decisions if d.chain is not None),
        rolling=roll)


def instance_rng(master_seed, idx) -> np.random.Generator:
    """Attack stream of evaluation instance ``idx``; shared by all strategies."""
    return np.random.default_rng([int(master_seed), 0, idx])


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    """Execute every strategy on the same per-instance attack streams."""
    sc = config.scenario if isinstance(config.scenario, Scenario) else load_scenario(config.scenario)
    if config.attack_rate is not None:
        sc.attack_rate = float(config.attack_rate)
    tenant = sc.tenant
    if config.weights is not None:
        tenant = Tenant(tenant.id, config.weights, tenant.adapt_trigger_threshold, tenant.workflows)
    w = sc.workflow
    sdm = compute_sdm(w)
    binding = sc.bind()
    pool = CandidatePool(w, sdm, sc.catalog, sc.constraints)

    qtable = config.qtable
    if "chain" in config.strategies:
        if qtable is None:
            if config.rl.episodes <= 0:
                raise ConfigError("chain strategy needs a Q-table or a training phase")
            qtable, _ = train(sc, config.rl, config.master_seed, tenant=tenant, pool=pool)
        elif not isinstance(qtable, QTable):
            qtable = QTable.load(qtable, config.rl.default_q)

    def make(name):
        if name == "none":
            return NoAdaptation()
        if name == "single":
            return SingleBest()
        if name == "chain":
            return GreedyPolicy(qtable, config.rl.abstraction)
        return OracleChain()

    report = MetricsReport(weights=tenant.weights.as_list(), master_seed=config.master_seed)
    trace_fh = open(config.traces_path, "w") if config.traces_path else None
    try:
        for name in config.strategies:
            strategy = make(name)
            traces = []
            for idx in range(config.executions):
                tr = execute_instance(w, binding, strategy, instance_rng(config.master_seed, idx), tenant,
                                      sdm=sdm, catalog=sc.catalog, constraints=sc.constraints,
                                      attack_rate=sc.attack_rate, schedule=sc.fixed_violations,
                                      detection_delay=sc.detection_delay, pool=pool, instance_id=idx)
                traces.append(tr)
                if trace_fh:
                    trace_fh.write(json.dumps({"strategy": name, **tr.to_dict()}) + "\n")
            report.strategies[name] = summarize(name, traces, config.window,
                                                rolling=name in ("chain", "chain_oracle"))
    finally:
        if trace_fh:
            trace_fh.close()
    if config.metrics_path:
        export_metrics(report, config.metrics_path)
    return report


def export_metrics(report: MetricsReport, path) -> Path:
    """CSV summary plus ``<path>.rolling.json`` with windowed means."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(CSV_HEADER)
        for m in report.strategies.values():
            wr.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in m.row()])
    rolling = {name: m.rolling for name, m in report.strategies.items() if m.rolling}
    path.with_name(path.name + ".rolling.json").write_text(json.dumps(rolling, indent=1))
    return path


def read_metrics(path) -> dict:
    """Parse an exported CSV back into ``{strategy: {column: value}}``."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            name = row.pop("strategy")
            out[name] = {k: (int(v) if k in ("executions", "violations", "chains_applied") else float(v))
                         for k, v in row.items()}
    return out
