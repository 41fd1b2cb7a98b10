"""Tabular Q-learning over violation states.

Q values estimate chain cost, so the greedy policy takes the argmin and the
Bellman backup uses the minimum over next candidates.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .catalog import Severity
from .chains import AdaptationChain, ChainSet, Weights
from .errors import ConfigError, SelectionError
from .sim import DecisionContext, Scenario, Strategy, Tenant, execute_instance

ABSTRACTIONS = ("compact", "full")


@dataclass(frozen=True)
class RLState:
    violated_task: str
    attack_type: str
    severity: Severity
    adapted_mask: tuple | None = None  # one bool per task in topological order

    def to_dict(self) -> dict:
        d = {"vt": self.violated_task, "attack": self.attack_type, "severity": self.severity.label}
        if self.adapted_mask is not None:
            d["mask"] = [int(b) for b in self.adapted_mask]
        return d

    @classmethod
    def from_dict(cls, d) -> "RLState":
        mask = d.get("mask")
        return cls(str(d["vt"]), str(d["attack"]), Severity.parse(d["severity"]),
                   None if mask is None else tuple(bool(b) for b in mask))


def encode_state(event, instance, abstraction: str = "compact") -> RLState:
    """State of a detected violation; ``full`` adds the adapted-task mask."""
    if abstraction not in ABSTRACTIONS:
        raise ConfigError(f"unknown state abstraction {abstraction!r}")
    mask = None
    if abstraction == "full":
        adapted = instance.history.adapted_tasks
        mask = tuple(t in adapted for t in instance.w.topo_order)
    return RLState(event.violated_task, event.attack_type, event.severity, mask)


class QTable:
    """Per-state chain-key estimates with visit counts.

    Unseen pairs read as ``default_q`` until any cost has been observed, then
    as a pessimistic bound just above the largest observed cost.
    """

    def __init__(self, default_q: float = 0.0):
        self.default_q = default_q
        self.entries = {}
        self.visits = {}
        self.max_observed = None

    def default(self) -> float:
        if self.max_observed is None:
            return self.default_q
        return self.max_observed + 0.1 * abs(self.max_observed)

    def value(self, st, key) -> float:
        return self.entries.get(st, {}).get(key, self.default())

    def observe(self, cost):
        if math.isfinite(cost) and (self.max_observed is None or cost > self.max_observed):
            self.max_observed = float(cost)

    def __len__(self):
        return sum(len(v) for v in self.entries.values())

    def states(self):
        return list(self.entries)

    def greedy(self, st, candidates: ChainSet) -> tuple:
        """(position, estimate) of the argmin; ties go to the earlier candidate."""
        if not len(candidates):
            raise SelectionError("no candidate chains")
        index = candidates.index()
        seen = self.entries.get(st, {})
        best_i, best_q = None, math.inf
        for key, qv in seen.items():
            i = index.get(key)
            if i is not None and (qv < best_q or (qv == best_q and i < best_i)):
                best_i, best_q = i, qv
        n_seen = sum(1 for k in seen if k in index) if seen else 0
        if n_seen < len(candidates):
            d = self.default()
            if d <= best_q:
                for i, c in enumerate(candidates):
                    if c.key not in seen:
                        if d < best_q or best_i is None or i < best_i:
                            best_i, best_q = i, d
                        break
        return best_i, best_q

    def to_records(self) -> list:
        out = []
        for st in sorted(self.entries, key=_state_sort):
            row = self.entries[st]
            for key in sorted(row):
                out.append({"state": st.to_dict(), "chain": key, "q": row[key],
                            "visits": self.visits[st][key]})
        return out

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_records(), indent=1))

    @classmethod
    def from_records(cls, records, default_q: float = 0.0) -> "QTable":
        q = cls(default_q)
        for r in records:
            st = RLState.from_dict(r["state"])
            q.entries.setdefault(st, {})[r["chain"]] = float(r["q"])
            q.visits.setdefault(st, {})[r["chain"]] = int(r.get("visits", 0))
            q.observe(float(r["q"]))
        return q

    @classmethod
    def load(cls, path, default_q: float = 0.0) -> "QTable":
        try:
            records = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read Q-table {path}: {exc}") from None
        return cls.from_records(records, default_q)


def _state_sort(st: RLState):
    return (st.violated_task, st.attack_type, int(st.severity), st.adapted_mask or ())


@dataclass(frozen=True)
class RLConfig:
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    # multiplicative per-episode factor; None reaches epsilon_end at the last episode
    epsilon_decay: float | None = None
    episodes: int = 2000
    default_q: float = 0.0
    abstraction: str = "compact"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha {self.alpha} outside (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma {self.gamma} outside [0, 1)")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ConfigError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.epsilon_decay is not None and not 0.0 < self.epsilon_decay <= 1.0:
            raise ConfigError(f"epsilon_decay {self.epsilon_decay} outside (0, 1]")
        if self.episodes < 0:
            raise ConfigError("episodes must be nonnegative")
        if self.abstraction not in ABSTRACTIONS:
            raise ConfigError(f"unknown state abstraction {self.abstraction!r}")

    def epsilon(self, episode: int) -> float:
        if self.epsilon_decay is not None:
            return max(self.epsilon_end, self.epsilon_start * self.epsilon_decay ** episode)
        if self.episodes <= 1 or self.epsilon_start == 0.0:
            return self.epsilon_start
        frac = min(episode / (self.episodes - 1), 1.0)
        return self.epsilon_start * (self.epsilon_end / self.epsilon_start) ** frac

    @classmethod
    def from_dict(cls, d) -> "RLConfig":
        d = dict(d or {})
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown RL settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def select_action(q: QTable, st: RLState, candidates: ChainSet, epsilon: float,
                  rng: np.random.Generator) -> AdaptationChain:
    """Uniform pick with probability ``epsilon``, otherwise the lowest estimate."""
    if not len(candidates):
        raise SelectionError(f"no candidate chains for state {st}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return candidates[int(rng.integers(len(candidates)))]
    i, _ = q.greedy(st, candidates)
    return candidates[i]


def q_update(q: QTable, st: RLState, ac, reward: float, st_next: RLState | None,
             next_candidates: ChainSet | None, config: RLConfig) -> float:
    """One Bellman backup; ``st_next=None`` marks a terminal transition."""
    key = ac if isinstance(ac, str) else ac.key
    current = q.value(st, key)
    future = 0.0
    if st_next is not None and next_candidates is not None and len(next_candidates):
        future = q.greedy(st_next, next_candidates)[1]
    new = current + config.alpha * (reward + config.gamma * future - current)
    q.entries.setdefault(st, {})[key] = new
    visits = q.visits.setdefault(st, {})
    visits[key] = visits.get(key, 0) + 1
    q.observe(reward)
    return new


class QLearner(Strategy):
    """Training-time strategy: epsilon-greedy choice, deferred Bellman update."""

    name = "chain_train"

    def __init__(self, q: QTable, config: RLConfig, rng: np.random.Generator):
        self.q = q
        self.config = config
        self.rng = rng
        self.epsilon = config.epsilon_start
        self.pending = None
        self.episode_cost = 0.0
        self.episode_decisions = 0

    def begin_instance(self, inst):
        self.pending = None
        self.episode_cost = 0.0
        self.episode_decisions = 0

    def select(self, ctx: DecisionContext):
        cands = ctx.candidates()
        st = encode_state(ctx.event, ctx.instance, self.config.abstraction)
        if self.pending is not None:
            q_update(self.q, *self.pending, st, cands, self.config)
            self.pending = None
        if not len(cands):
            return None
        chain = select_action(self.q, st, cands, self.epsilon, self.rng)
        reward = ctx.cost(chain).total
        self.pending = (st, chain, reward)
        self.episode_cost += reward
        self.episode_decisions += 1
        return chain

    def end_instance(self, trace):
        if self.pending is not None:
            q_update(self.q, *self.pending, None, None, self.config)
            self.pending = None


class GreedyPolicy(Strategy):
    """Evaluation strategy reading a frozen Q-table."""

    name = "chain"

    def __init__(self, q: QTable, abstraction: str = "compact"):
        self.q = q
        self.abstraction = abstraction

    def select(self, ctx: DecisionContext):
        cands = ctx.candidates()
        if not len(cands):
            return None
        st = encode_state(ctx.event, ctx.instance, self.abstraction)
        return cands[self.q.greedy(st, cands)[0]]


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)  # (episode, epsilon, episode_cost, mean_cost)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["episode", "epsilon", "mean_cost"])
            for ep, eps, _, mean in self.rows:
                wr.writerow([ep, repr(eps), repr(mean)])


def training_rng(seed, episode) -> np.random.Generator:
    """Attack stream of one training episode, disjoint from evaluation streams."""
    return np.random.default_rng([int(seed), 1, episode])


def train(scenario: Scenario, config: RLConfig, seed: int = 0, *, weights: Weights | None = None,
          tenant: Tenant | None = None, pool=None) -> tuple:
    """Run ``config.episodes`` instances, learning from every violation.

    Returns the Q-table and a :class:`TrainingLog`.
    """
    from .chains import CandidatePool
    from .workflow import compute_sdm

    if not isinstance(scenario, Scenario):
        raise ConfigError("train needs a loaded scenario")
    tenant = tenant or scenario.tenant
    if weights is not None:
        tenant = Tenant(tenant.id, Weights.parse(weights), tenant.adapt_trigger_threshold, tenant.workflows)
    w = scenario.workflow
    sdm = compute_sdm(w)
    binding = scenario.bind()
    pool = pool or CandidatePool(w, sdm, scenario.catalog, scenario.constraints)
    q = QTable(config.default_q)
    learner = QLearner(q, config, np.random.default_rng([int(seed), 2]))
    log = TrainingLog()
    total_cost, total_decisions = 0.0, 0
    for ep in range(config.episodes):
        learner.epsilon = config.epsilon(ep)
        execute_instance(w, binding, learner, training_rng(seed, ep), tenant, sdm=sdm,
                         catalog=scenario.catalog, constraints=scenario.constraints,
                         attack_rate=scenario.attack_rate, schedule=scenario.fixed_violations,
                         detection_delay=scenario.detection_delay, pool=pool, instance_id=ep)
        total_cost += learner.episode_cost
        total_decisions += learner.episode_decisions
        mean = total_cost / total_decisions if total_decisions else 0.0
        log.rows.append((ep, learner.epsilon, learner.episode_cost, mean))
    return q, log
