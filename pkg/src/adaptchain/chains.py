"""Adaptation chain generation, loop expansion, constraints and costing."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .catalog import ACTION_TYPES, Catalog, Severity, TaskBinding, default_catalog, normalize_action
from .errors import SelectionError, UnknownTaskError, ValidationError
from .workflow import SecurityDependencyMatrix, Workflow, dependent_tasks, predecessors, successors

_ACTION_INDEX = {a: i for i, a in enumerate(ACTION_TYPES)}


def _action_rank(name):
    return (_ACTION_INDEX.get(name, len(_ACTION_INDEX)), name)


@dataclass(frozen=True)
class ViolationEvent:
    violated_task: str
    attack_type: str
    severity: Severity
    score: float | None = None
    detected_at: float = 0.0

    def to_dict(self) -> dict:
        return {"vt": self.violated_task, "attack": self.attack_type,
                "severity": self.severity.label, "score": self.score,
                "detected_at": self.detected_at}


@dataclass(frozen=True)
class ChainStep:
    task: str
    action: str
    unintentional: bool = False

    def __str__(self):
        return f"{self.action}_{self.task}" + ("*" if self.unintentional else "")


@dataclass(frozen=True)
class AdaptationChain:
    """Ordered adaptation steps, at most one per task, in topological order."""

    steps: tuple
    origin: ViolationEvent | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.steps:
            raise ValidationError("adaptation chain must not be empty")
        tasks = [s.task for s in self.steps]
        if len(set(tasks)) != len(tasks):
            raise ValidationError(f"task repeated in chain: {tasks}")

    @property
    def key(self) -> str:
        return "|".join(f"{s.task}:{s.action}" + ("*" if s.unintentional else "") for s in self.steps)

    @classmethod
    def from_key(cls, key: str) -> "AdaptationChain":
        steps = []
        for part in key.split("|"):
            task, action = part.split(":")
            steps.append(ChainStep(task, normalize_action(action.rstrip("*")), action.endswith("*")))
        return cls(tuple(steps))

    @property
    def tasks(self) -> frozenset:
        return frozenset(s.task for s in self.steps)

    @property
    def pairs(self) -> frozenset:
        return frozenset((s.task, s.action) for s in self.steps)

    @property
    def unintentional_suffix(self) -> tuple:
        return tuple(s.unintentional for s in self.steps)

    def step_for(self, task) -> ChainStep | None:
        for s in self.steps:
            if s.task == task:
                return s
        return None

    def __len__(self):
        return len(self.steps)

    def __str__(self):
        return " » ".join(str(s) for s in self.steps)


def make_chain(w: Workflow, steps: Iterable, origin=None) -> AdaptationChain:
    """Chain from ``(task, action)`` pairs or steps, sorted into topological order."""
    out = []
    for s in steps:
        if not isinstance(s, ChainStep):
            s = ChainStep(s[0], normalize_action(s[1]), *s[2:])
        if s.task not in w.task_map:
            raise UnknownTaskError(s.task)
        out.append(s)
    out.sort(key=lambda s: w.topo_index[s.task])
    return AdaptationChain(tuple(out), origin)


def canonical_key(w: Workflow, chain: AdaptationChain) -> tuple:
    """Shorter chains first, then task sequence, then action sequence."""
    return (len(chain.steps),
            tuple(w.topo_index[s.task] for s in chain.steps),
            tuple(_action_rank(s.action) for s in chain.steps),
            chain.unintentional_suffix)


@dataclass(frozen=True)
class ChainSet:
    chains: tuple
    truncated: bool = False

    def __iter__(self) -> Iterator[AdaptationChain]:
        return iter(self.chains)

    def __len__(self):
        return len(self.chains)

    def __getitem__(self, i):
        return self.chains[i]

    def __contains__(self, chain):
        return chain in self.chains

    def keys(self) -> list:
        return [c.key for c in self.chains]

    def index(self) -> dict:
        """Chain key -> position, computed once per set."""
        idx = self.__dict__.get("_index")
        if idx is None:
            idx = {c.key: i for i, c in enumerate(self.chains)}
            object.__setattr__(self, "_index", idx)
        return idx


@dataclass(frozen=True)
class ChainConstraint:
    kind: str  # "conflict" | "essential"
    left: tuple
    right: tuple

    def __post_init__(self):
        if self.kind not in ("conflict", "essential"):
            raise ValidationError(f"unknown constraint kind {self.kind!r}")
        object.__setattr__(self, "left", (str(self.left[0]), normalize_action(self.left[1])))
        object.__setattr__(self, "right", (str(self.right[0]), normalize_action(self.right[1])))
        if self.left == self.right:
            raise ValidationError("constraint endpoints must differ")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChainConstraint":
        kind = {"conflicting": "conflict", "conflict": "conflict", "essential": "essential"}.get(str(d["kind"]).lower())
        if kind is None:
            raise ValidationError(f"unknown constraint kind {d['kind']!r}")
        return cls(kind, tuple(d["left"]), tuple(d["right"]))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "left": list(self.left), "right": list(self.right)}

    def matches(self, pairs) -> bool:
        if self.kind == "conflict":
            return self.left in pairs and self.right in pairs
        return self.left in pairs and self.right not in pairs


class AdaptationHistory:
    """Chains applied so far to one workflow instance, oldest first."""

    def __init__(self, applied: Sequence = ()):
        self.applied = tuple(applied)

    def __len__(self):
        return len(self.applied)

    def __iter__(self):
        return iter(self.applied)

    @property
    def pairs(self) -> frozenset:
        return frozenset(p for _, chain in self.applied for p in chain.pairs)

    @property
    def adapted_tasks(self) -> frozenset:
        return frozenset(t for _, chain in self.applied for t in chain.tasks)

    @property
    def previous_vt(self):
        return self.applied[-1][0].violated_task if self.applied else None

    def last_action(self, task):
        """(event, step) of the most recent applied chain touching ``task``."""
        for event, chain in reversed(self.applied):
            step = chain.step_for(task)
            if step is not None:
                return event, step
        return None

    def commit(self, event: ViolationEvent, chain: AdaptationChain) -> "AdaptationHistory":
        vt = event.violated_task
        entries = []
        if chain.step_for(vt) is not None:
            # a new action on the violated task supersedes earlier ones
            for ev, ch in self.applied:
                kept = tuple(s for s in ch.steps if s.task != vt)
                if kept:
                    entries.append((ev, AdaptationChain(kept, ch.origin)))
        else:
            entries.extend(self.applied)
        entries.append((event, chain))
        return AdaptationHistory(entries)


@dataclass(frozen=True)
class Weights:
    """Magnitudes; price and time count positive, value and mitigation negative."""

    price: float = 1.0
    time: float = 1.0
    value: float = 1.0
    ms: float = 1.0

    def __post_init__(self):
        if min(self.price, self.time, self.value, self.ms) < 0:
            raise ValidationError("weights must be nonnegative magnitudes")

    @classmethod
    def parse(cls, spec) -> "Weights":
        if isinstance(spec, Weights):
            return spec
        if isinstance(spec, str):
            spec = [s for s in spec.replace("-", ",").split(",") if s.strip()]
        vals = [float(v) for v in spec]
        if len(vals) != 4:
            raise ValidationError("expected four weights (price, time, value, mitigation)")
        return cls(*vals)

    def as_list(self) -> list:
        return [self.price, self.time, self.value, self.ms]

    def scaled(self, k: float) -> "Weights":
        return Weights(self.price * k, self.time * k, self.value * k, self.ms * k)

    def total(self, price, time, value, ms) -> float:
        return self.price * price + self.time * time - self.value * value - self.ms * ms


@dataclass(frozen=True)
class CostBreakdown:
    price: float
    time: float
    value: float
    mitigation_score: float
    total: float

    def to_dict(self) -> dict:
        return {"price": self.price, "time": self.time, "value": self.value,
                "mitigation_score": self.mitigation_score, "total": self.total}


# -- generation -------------------------------------------------------------

def feasible_actions(task, attack_type, severity, catalog: Catalog | None = None) -> frozenset:
    catalog = catalog or default_catalog()
    return frozenset(task.feasible_actions) & catalog.mitigation_actions_for(attack_type, severity)


def chain_count(ks: Iterable[int]) -> int:
    return math.prod(k + 1 for k in ks) - 1


def generate_chain_set(w: Workflow, sdm: SecurityDependencyMatrix, vt, attack_type, severity,
                       catalog: Catalog | None = None, max_chains: int = 200_000,
                       max_chain_length: int = 4) -> ChainSet:
    """All nonempty chains picking at most one feasible action per dependent task.

    Chains come out in canonical order. When the full set would exceed
    ``max_chains`` only chains of up to ``max_chain_length`` steps are produced
    (shortest first, capped at ``max_chains``) and the set is flagged truncated.
    """
    catalog = catalog or default_catalog()
    w._check(vt)
    dt = sorted(dependent_tasks(sdm, vt), key=w.topo_index.get)
    options = []
    for t in dt:
        acts = sorted(feasible_actions(w.task(t), attack_type, severity, catalog), key=_action_rank)
        if acts:
            options.append((t, acts))
    total = chain_count(len(a) for _, a in options)
    truncated = total > max_chains
    max_len = min(max_chain_length, len(options)) if truncated else len(options)
    chains = []
    for length in range(1, max_len + 1):
        for combo in itertools.combinations(options, length):
            tasks = [t for t, _ in combo]
            for acts in itertools.product(*(a for _, a in combo)):
                chains.append(AdaptationChain(tuple(ChainStep(t, a) for t, a in zip(tasks, acts))))
                if truncated and len(chains) >= max_chains:
                    return ChainSet(tuple(chains), True)
    return ChainSet(tuple(chains), truncated)


def expand_chain_loops(w: Workflow, vt, chains: Iterable[AdaptationChain]) -> ChainSet:
    """Append unintentional Rework steps for completed tasks a chain re-enters.

    A starting point is a chain task with no chain task among its control
    predecessors; every predecessor of ``vt`` downstream of a starting point
    that the chain does not already touch gets a Rework step.
    """
    pred_vt = predecessors(w, vt)
    out = {}
    for ac in chains:
        tasks = ac.tasks
        starts = [s.task for s in ac.steps if not (predecessors(w, s.task) & tasks)]
        extra = set()
        for sp in starts:
            extra |= (pred_vt & successors(w, sp)) - tasks
        if extra:
            steps = list(ac.steps) + [ChainStep(t, "Rework", True) for t in extra]
            ac = make_chain(w, steps, ac.origin)
        out.setdefault(ac.key, ac)
    ordered = sorted(out.values(), key=lambda c: canonical_key(w, c))
    return ChainSet(tuple(ordered), getattr(chains, "truncated", False))


def chain_violates(chain: AdaptationChain, constraints: Iterable[ChainConstraint],
                   history: AdaptationHistory | None = None) -> bool:
    pairs = chain.pairs | history.pairs if history is not None else chain.pairs
    return any(c.matches(pairs) for c in constraints)


def resolve_constraints(chains: Iterable[AdaptationChain], constraints: Iterable[ChainConstraint],
                        history: AdaptationHistory | None = None) -> ChainSet:
    constraints = tuple(constraints)
    kept = tuple(c for c in chains if not chain_violates(c, constraints, history))
    return ChainSet(kept, getattr(chains, "truncated", False))


def candidate_chains(w, sdm, vt, attack_type, severity, *, constraints=(), history=None,
                     catalog=None, max_chains=200_000, max_chain_length=4) -> ChainSet:
    """Generation, loop expansion and constraint resolution in one go."""
    acs = generate_chain_set(w, sdm, vt, attack_type, severity, catalog, max_chains, max_chain_length)
    return resolve_constraints(expand_chain_loops(w, vt, acs), constraints, history)


# -- costing ----------------------------------------------------------------

def mitigation_score(action, t, vt, attack_type, sdm: SecurityDependencyMatrix,
                     catalog: Catalog | None = None) -> float:
    """Sum over C, I, A of (1 - req * impact) * MI * SDM[vt][t]."""
    catalog = catalog or default_catalog()
    impact = catalog.attack_impact(attack_type)
    mi = action.mitigation_impact
    dep = sdm[vt, t.id]
    return sum((1.0 - req * imp) * m * d for req, imp, m, d in zip(t.cia, impact, mi, dep))


def default_record(task, binding: TaskBinding) -> tuple:
    """(P, T, V, MS) of a normal, unadapted execution."""
    return (binding.price, binding.time, task.value, 0.0)


def step_record(w: Workflow, step: ChainStep, binding: Mapping[str, TaskBinding], catalog: Catalog,
                vt, attack_type, sdm) -> tuple:
    """(P, T, V, MS) of executing ``step`` on its task."""
    task = w.task(step.task)
    b = binding[step.task]
    spec = catalog.adaptation_properties(step.action, task, b, check_feasible=False)
    ms = mitigation_score(spec, task, vt, attack_type, sdm, catalog)
    p, t, v = spec.price, spec.time, spec.value
    if catalog.rule(step.action).additive:
        p, t, v = p + b.price, t + b.time, v + task.value
    return (p, t, v, ms)


def chain_cost(w: Workflow, chain: AdaptationChain, history: AdaptationHistory | None, weights,
               vt, attack_type, sdm: SecurityDependencyMatrix, binding: Mapping[str, TaskBinding], *,
               catalog: Catalog | None = None, constraints: Iterable[ChainConstraint] = (),
               previous_vt=None) -> CostBreakdown:
    """Whole-instance (P, T, V, MS) under ``chain`` and the weighted total.

    Tasks between the previous violation and ``vt`` are replayed from history
    or default execution, chain steps on ``vt`` and its predecessors are added
    on top, and successors of ``vt`` run with their chain step, a planned
    step from history, or default execution.
    """
    catalog = catalog or default_catalog()
    weights = Weights.parse(weights)
    history = history or AdaptationHistory()
    if previous_vt is None:
        previous_vt = history.previous_vt
    acc = [0.0, 0.0, 0.0, 0.0]

    def add(rec):
        for i in range(4):
            acc[i] += rec[i]

    def from_history(t):
        h = history.last_action(t)
        if h is None:
            return None
        ev, step = h
        return step_record(w, step, binding, catalog, ev.violated_task, ev.attack_type, sdm)

    def history_or_default(t):
        rec = from_history(t)
        return rec if rec is not None else default_record(w.task(t), binding[t])

    pred_vt = predecessors(w, vt)
    succ_vt = successors(w, vt)
    segment = pred_vt if previous_vt is None else successors(w, previous_vt) & pred_vt
    order = w.topo_order
    for t in order:
        if t in segment:
            add(history_or_default(t))
    for t in order:
        if t in pred_vt or t == vt:
            step = chain.step_for(t)
            if step is not None:
                add(step_record(w, step, binding, catalog, vt, attack_type, sdm))
            elif t == vt:
                add(history_or_default(t))
    for t in order:
        if t in succ_vt:
            step = chain.step_for(t)
            if step is not None:
                add(step_record(w, step, binding, catalog, vt, attack_type, sdm))
            else:
                add(history_or_default(t))
    for step in chain.steps:
        if step.task not in pred_vt and step.task not in succ_vt and step.task != vt:
            add(step_record(w, step, binding, catalog, vt, attack_type, sdm))

    p, t, v, ms = acc
    if chain_violates(chain, constraints, history):
        total = math.inf
    else:
        total = weights.total(p, t, v, ms)
    return CostBreakdown(p, t, v, ms, total)


def _normalized_totals(costs: Sequence[CostBreakdown], weights: Weights) -> list:
    cols = list(zip(*[(c.price, c.time, c.value, c.mitigation_score) for c in costs]))
    scaled = []
    for col in cols:
        lo, hi = min(col), max(col)
        span = hi - lo
        scaled.append([(x - lo) / span if span > 0 else 0.0 for x in col])
    out = []
    for c, row in zip(costs, zip(*scaled)):
        out.append(math.inf if math.isinf(c.total) else weights.total(*row))
    return out


def rank_chains(w, chains: Iterable[AdaptationChain], history, weights, vt, attack_type, sdm, binding, *,
                catalog=None, constraints=(), previous_vt=None, normalize=False) -> list:
    """``[(chain, breakdown)]`` sorted by total cost, canonical order breaking ties."""
    weights = Weights.parse(weights)
    chains = list(chains)
    costs = [chain_cost(w, c, history, weights, vt, attack_type, sdm, binding, catalog=catalog,
                        constraints=constraints, previous_vt=previous_vt) for c in chains]
    if normalize and costs:
        totals = _normalized_totals(costs, weights)
        costs = [CostBreakdown(c.price, c.time, c.value, c.mitigation_score, tot)
                 for c, tot in zip(costs, totals)]
    ranked = sorted(zip(chains, costs), key=lambda cc: (cc[1].total, canonical_key(w, cc[0])))
    return ranked


def optimal_chain_exhaustive(w, vt, attack_type, severity, history, weights, *, sdm, binding,
                             catalog=None, constraints=(), previous_vt=None, max_chains=200_000,
                             max_chain_length=4, allow_truncated=False, normalize=False,
                             candidates: ChainSet | None = None) -> AdaptationChain:
    """Argmin of the chain cost over the full resolved chain set."""
    if candidates is None:
        candidates = candidate_chains(w, sdm, vt, attack_type, severity, constraints=constraints,
                                      history=history, catalog=catalog, max_chains=max_chains,
                                      max_chain_length=max_chain_length)
    if candidates.truncated and not allow_truncated:
        raise SelectionError("candidate set was truncated; exhaustive optimum not guaranteed")
    if not len(candidates):
        raise SelectionError(f"no feasible adaptation chain for {attack_type} on {vt}")
    ranked = rank_chains(w, candidates, history, weights, vt, attack_type, sdm, binding, catalog=catalog,
                         constraints=constraints, previous_vt=previous_vt, normalize=normalize)
    return ranked[0][0]


class CandidatePool:
    """Memoized generation + loop expansion per (vt, attack, severity).

    Constraint resolution against a history reuses a (task, action) -> chain
    index, so repeated queries during simulation stay cheap.
    """

    def __init__(self, w, sdm, catalog=None, constraints=(), max_chains=200_000, max_chain_length=4):
        self.w = w
        self.sdm = sdm
        self.catalog = catalog or default_catalog()
        self.constraints = tuple(constraints)
        self.max_chains = max_chains
        self.max_chain_length = max_chain_length
        self._expanded = {}
        self._resolved = {}

    def expanded(self, vt, attack_type, severity):
        key = (vt, attack_type, Severity.parse(severity))
        hit = self._expanded.get(key)
        if hit is None:
            acs = generate_chain_set(self.w, self.sdm, vt, attack_type, key[2], self.catalog,
                                     self.max_chains, self.max_chain_length)
            chains = expand_chain_loops(self.w, vt, acs)
            index = {}
            for i, c in enumerate(chains):
                for p in c.pairs:
                    index.setdefault(p, set()).add(i)
            hit = self._expanded[key] = (chains, index)
        return hit

    def resolved(self, vt, attack_type, severity, history: AdaptationHistory | None = None) -> ChainSet:
        chains, index = self.expanded(vt, attack_type, severity)
        hpairs = history.pairs if history is not None else frozenset()
        relevant = frozenset(p for c in self.constraints for p in (c.left, c.right) if p in hpairs)
        memo_key = (vt, attack_type, Severity.parse(severity), relevant)
        hit = self._resolved.get(memo_key)
        if hit is not None:
            return hit
        n = len(chains)
        removed = set()
        for c in self.constraints:
            a, b = index.get(c.left, set()), index.get(c.right, set())
            if c.kind == "conflict":
                if c.left in relevant and c.right in relevant:
                    removed = set(range(n))
                    break
                if c.left in relevant:
                    removed |= b
                elif c.right in relevant:
                    removed |= a
                else:
                    removed |= a & b
            else:
                if c.right in relevant:
                    continue
                if c.left in relevant:
                    removed |= set(range(n)) - b
                else:
                    removed |= a - b
        kept = ChainSet(tuple(ch for i, ch in enumerate(chains) if i not in removed), chains.truncated)
        self._resolved[memo_key] = kept
        return kept
