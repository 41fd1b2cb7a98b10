"""Multi-cloud execution simulator.

Binds tasks to services, draws attacks per task, runs workflow instances in
topological order and reacts to detected violations with a pluggable
strategy (no adaptation, best single action, exhaustive chain, learned chain).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .catalog import AdaptationParams, Catalog, Severity, TaskBinding, default_catalog
from .chains import (AdaptationChain, AdaptationHistory, CandidatePool, ChainConstraint, ChainSet,
                     ChainStep, CostBreakdown, ViolationEvent, Weights, chain_cost, default_record,
                     feasible_actions, make_chain, optimal_chain_exhaustive, rank_chains, step_record)
from .errors import ApplicationError, BindingError, ConfigError, SelectionError, ValidationError
from .workflow import Workflow, compute_sdm, parse_workflow, predecessors, successors


@dataclass(frozen=True)
class CloudService:
    id: str
    provider: str
    price: float
    time: float
    confidentiality: float = 1.0
    integrity: float = 1.0
    availability: float = 1.0
    attack_frequency: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "price", float(self.price))
        object.__setattr__(self, "time", float(self.time))
        if self.price < 0 or self.time < 0:
            raise ValidationError(f"service {self.id}: negative price or time")
        for v in (self.confidentiality, self.integrity, self.availability, *self.attack_frequency.values()):
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"service {self.id}: value {v} outside [0, 1]")
        if sum(self.attack_frequency.values()) > 1.0 + 1e-9:
            raise ValidationError(f"service {self.id}: attack frequencies sum above 1")

    @classmethod
    def from_dict(cls, d) -> "CloudService":
        return cls(str(d["id"]), str(d.get("provider", "")), float(d["price"]), float(d["time"]),
                   float(d.get("c", 1.0)), float(d.get("i", 1.0)), float(d.get("a", 1.0)),
                   {str(k): float(v) for k, v in d.get("afr", {}).items()})

    def to_dict(self) -> dict:
        return {"id": self.id, "provider": self.provider, "price": self.price, "time": self.time,
                "c": self.confidentiality, "i": self.integrity, "a": self.availability,
                "afr": dict(self.attack_frequency)}


@dataclass(frozen=True)
class Tenant:
    id: str = "tenant"
    weights: Weights = field(default_factory=Weights)
    adapt_trigger_threshold: Severity = Severity.LOW
    workflows: tuple = ()

    @classmethod
    def from_dict(cls, d) -> "Tenant":
        return cls(str(d.get("id", "tenant")), Weights.parse(d.get("weights", [1, 1, 1, 1])),
                   Severity.parse(d.get("adapt_trigger_threshold", "Low")), tuple(d.get("workflows", ())))

    def to_dict(self) -> dict:
        return {"id": self.id, "weights": self.weights.as_list(),
                "adapt_trigger_threshold": self.adapt_trigger_threshold.label,
                "workflows": list(self.workflows)}


class Binding(dict):
    """task id -> :class:`TaskBinding`, plus the service table it was drawn from."""

    def __init__(self, entries, services: Mapping[str, CloudService], policy: str = ""):
        super().__init__(entries)
        self.services = dict(services)
        self.policy = policy

    def service(self, task) -> CloudService:
        return self.services[self[task].service]


def bind_services(w: Workflow, services: Mapping[str, CloudService], policy: str = "cheapest", *,
                  candidates: Mapping | None = None, seed=None, params: AdaptationParams | None = None,
                  overrides: Mapping | None = None) -> Binding:
    """Pick a service and a backup per task.

    ``policy`` is ``cheapest``, ``fastest`` or ``random`` (seeded). The backup
    is the runner-up under the same policy; a task with a single candidate
    gets that service as a degenerate backup.
    """
    params = params or AdaptationParams()
    overrides = overrides or {}
    if policy == "random":
        rng = np.random.default_rng(seed)
    elif policy not in ("cheapest", "fastest"):
        raise ConfigError(f"unknown binding policy {policy!r}")
    entries = {}
    for t in w.topo_order:
        ids = list(candidates[t]) if candidates and t in candidates else list(services)
        cands = []
        for sid in ids:
            if sid not in services:
                raise BindingError(f"task {t}: unknown candidate service {sid!r}")
            cands.append(services[sid])
        if not cands:
            raise BindingError(f"task {t} has no candidate service")
        if policy == "cheapest":
            ranked = sorted(cands, key=lambda s: (s.price, s.time, s.id))
        elif policy == "fastest":
            ranked = sorted(cands, key=lambda s: (s.time, s.price, s.id))
        else:
            ranked = [cands[i] for i in rng.permutation(len(cands))]
        main = ranked[0]
        backup = ranked[1] if len(ranked) > 1 else ranked[0]
        entries[t] = TaskBinding(main.id, main.price, main.time, backup.id, backup.price, backup.time,
                                 degenerate_backup=len(ranked) == 1,
                                 params=overrides.get(t, params))
    return Binding(entries, services, policy)


@dataclass(frozen=True)
class ScheduledAttack:
    task: str
    attack_type: str
    score: float

    @property
    def severity(self) -> Severity:
        return Severity.from_score(self.score)


def inject_attacks(binding: Binding, rng: np.random.Generator, attack_rate: float) -> list:
    """Violation schedule for one instance, in binding (topological) order.

    A task is attacked with probability ``attack_rate * sum(AFR)`` of its
    bound service; the type is drawn in proportion to the per-type AFR and the
    severity score uniformly. Three draws per task keep streams aligned.
    """
    if not 0.0 <= attack_rate <= 1.0:
        raise ConfigError(f"attack rate {attack_rate} outside [0, 1]")
    out = []
    for t in binding:
        afr = binding.service(t).attack_frequency
        u, v, score = rng.random(3)
        total = sum(afr.values())
        if total <= 0 or u >= attack_rate * total:
            continue
        acc = 0.0
        kind = None
        for name, rate in afr.items():
            acc += rate / total
            if v < acc:
                kind = name
                break
        if kind is None:
            kind = [k for k, r in afr.items() if r > 0][-1]
        out.append(ScheduledAttack(t, kind, float(score)))
    return out


# -- execution --------------------------------------------------------------

@dataclass
class TaskRecord:
    task: str
    service: str
    start: float
    end: float
    status: str  # completed | adapted | reworked | skipped
    price: float
    time: float
    value: float
    ms: float = 0.0
    action: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Decision:
    event: ViolationEvent
    strategy: str
    chain: AdaptationChain | None
    cost: CostBreakdown | None
    note: str = ""

    def to_dict(self) -> dict:
        return {"event": self.event.to_dict(), "strategy": self.strategy,
                "chain": self.chain.key if self.chain else None,
                "cost": self.cost.to_dict() if self.cost else None, "note": self.note}


@dataclass
class ExecutionTrace:
    instance_id: int
    records: list
    violations: list
    chains_applied: AdaptationHistory
    decisions: list
    totals: CostBreakdown
    makespan: float

    def to_dict(self) -> dict:
        return {
            "instance": self.instance_id,
            "records": [r.to_dict() for r in self.records],
            "violations": [v.to_dict() for v in self.violations],
            "chains_applied": [{"event": e.to_dict(), "chain": c.key} for e, c in self.chains_applied],
            "decisions": [d.to_dict() for d in self.decisions],
            "totals": self.totals.to_dict(),
            "makespan": self.makespan,
        }


def fold_records(records, weights: Weights) -> CostBreakdown:
    p = sum(r.price for r in records)
    t = sum(r.time for r in records)
    v = sum(r.value for r in records)
    ms = sum(r.ms for r in records)
    return CostBreakdown(p, t, v, ms, weights.total(p, t, v, ms))


class Instance:
    """Mutable state of one running workflow instance."""

    def __init__(self, w: Workflow, binding: Binding, sdm, catalog: Catalog, instance_id: int = 0):
        self.w = w
        self.binding = binding
        self.sdm = sdm
        self.catalog = catalog
        self.id = instance_id
        self.status = {t: "pending" for t in w.topo_order}
        self.finish = {}
        self.records = []
        self.planned = {}  # task -> (event, step) to apply when the task runs
        self.history = AdaptationHistory()
        self.floor = 0.0
        self.suspended = False

    @property
    def clock(self) -> float:
        return max([self.floor, *self.finish.values()])

    def _start_time(self, t) -> float:
        preds = [self.finish[p] for p in self.w.control_pred[t] if p in self.finish]
        return max([self.floor, *preds])

    def _service_for(self, t, action):
        b = self.binding[t]
        if action is None:
            return b.service
        rule = self.catalog.rule(action)
        if "plus_backup" in (rule.time, rule.price):
            return f"{b.service}+{b.backup}"
        if "backup" in (rule.time, rule.price):
            return b.backup
        return b.service

    def _record(self, t, rec, status, action=None):
        start = self._start_time(t)
        p, dt, v, ms = rec
        r = TaskRecord(t, self._service_for(t, action), start, start + dt, status, p, dt, v, ms, action)
        self.records.append(r)
        self.finish[t] = r.end
        self.status[t] = status
        return r

    def _adapted(self, t, event, step, pending):
        rec = step_record(self.w, step, self.binding, self.catalog, event.violated_task, event.attack_type, self.sdm)
        if step.action == "Skip" and pending:
            status = "skipped"
        elif step.action == "Rework":
            status = "reworked"
        else:
            status = "adapted"
        return self._record(t, rec, status, step.action)

    def run(self, t):
        """Execute a pending task, applying a planned adaptation if one exists."""
        if self.suspended:
            raise ApplicationError("instance is suspended")
        planned = self.planned.pop(t, None)
        if planned is not None:
            return self._adapted(t, planned[0], planned[1], pending=True)
        return self._record(t, default_record(self.w.task(t), self.binding[t]), "completed")

    def repeat(self, t):
        return self._record(t, default_record(self.w.task(t), self.binding[t]), "reworked")


def apply_chain(inst: Instance, chain: AdaptationChain, event: ViolationEvent) -> str:
    """Suspend, rewind to the chain's earliest task before ``vt`` and resume.

    Completed tasks from the resume point on are re-run with their chain action
    or repeated as-is; pending chain tasks get the action when they are reached.
    Returns the resume task.
    """
    w = inst.w
    vt = event.violated_task
    for s in chain.steps:
        if s.task not in w.task_map:
            raise ApplicationError(f"chain references task {s.task!r} outside the instance")
    inst.suspended = True
    pred_vt = predecessors(w, vt)
    t_start = vt
    for t in w.topo_order:
        if t in pred_vt and chain.step_for(t) is not None:
            t_start = t
            break
    inst.floor = max(inst.floor, event.detected_at)
    inst.suspended = False
    scope = successors(w, t_start) | {t_start}
    for t in w.topo_order:
        step = chain.step_for(t)
        done = inst.status[t] != "pending"
        if t in scope or step is not None:
            if done:
                if step is not None:
                    inst._adapted(t, event, step, pending=False)
                elif t in scope:
                    inst.repeat(t)
            elif step is not None:
                inst.planned[t] = (event, step)
    inst.history = inst.history.commit(event, chain)
    return t_start


@dataclass
class DecisionContext:
    w: Workflow
    sdm: object
    binding: Binding
    catalog: Catalog
    constraints: tuple
    weights: Weights
    event: ViolationEvent
    history: AdaptationHistory
    pool: CandidatePool
    instance: Instance

    def candidates(self) -> ChainSet:
        e = self.event
        return self.pool.resolved(e.violated_task, e.attack_type, e.severity, self.history)

    def cost(self, chain) -> CostBreakdown:
        e = self.event
        return chain_cost(self.w, chain, self.history, self.weights, e.violated_task, e.attack_type,
                          self.sdm, self.binding, catalog=self.catalog, constraints=self.constraints)


class Strategy:
    name = "base"

    def select(self, ctx: DecisionContext) -> AdaptationChain | None:
        raise NotImplementedError

    def begin_instance(self, inst):
        pass

    def end_instance(self, trace):
        pass


class NoAdaptation(Strategy):
    name = "none"

    def select(self, ctx):
        return None


class SingleBest(Strategy):
    """Best single action on the violated task alone."""

    name = "single"

    def select(self, ctx):
        e = ctx.event
        task = ctx.w.task(e.violated_task)
        singles = [make_chain(ctx.w, [(task.id, a)])
                   for a in feasible_actions(task, e.attack_type, e.severity, ctx.catalog)]
        if not singles:
            return None
        ranked = rank_chains(ctx.w, singles, ctx.history, ctx.weights, e.violated_task, e.attack_type,
                             ctx.sdm, ctx.binding, catalog=ctx.catalog, constraints=ctx.constraints)
        best, cost = ranked[0]
        return None if math.isinf(cost.total) else best


class OracleChain(Strategy):
    """Exhaustive argmin over the resolved chain set."""

    name = "chain_oracle"

    def select(self, ctx):
        cands = ctx.candidates()
        if not len(cands):
            return None
        e = ctx.event
        return optimal_chain_exhaustive(ctx.w, e.violated_task, e.attack_type, e.severity, ctx.history,
                                        ctx.weights, sdm=ctx.sdm, binding=ctx.binding, catalog=ctx.catalog,
                                        constraints=ctx.constraints, allow_truncated=True, candidates=cands)


def execute_instance(w: Workflow, binding: Binding, strategy: Strategy, rng: np.random.Generator | None,
                     tenant: Tenant, *, sdm=None, catalog: Catalog | None = None, constraints=(),
                     attack_rate: float = 0.0, schedule=None, detection_delay: int = 0,
                     pool: CandidatePool | None = None, instance_id: int = 0) -> ExecutionTrace:
    """Run one instance; violations come from ``schedule`` or are drawn with ``rng``."""
    catalog = catalog or default_catalog()
    sdm = sdm if sdm is not None else compute_sdm(w)
    constraints = tuple(constraints)
    pool = pool or CandidatePool(w, sdm, catalog, constraints)
    if schedule is None:
        schedule = inject_attacks(binding, rng, attack_rate) if attack_rate > 0 else []
    order = w.topo_order
    pos = {t: i for i, t in enumerate(order)}
    surfacing = {}
    for a in schedule:
        surfacing.setdefault(min(pos[a.task] + detection_delay, len(order) - 1), []).append(a)

    inst = Instance(w, binding, sdm, catalog, instance_id)
    violations, decisions = [], []
    strategy.begin_instance(inst)
    for i, t in enumerate(order):
        inst.run(t)
        for a in surfacing.get(i, ()):
            event = ViolationEvent(a.task, a.attack_type, a.severity, a.score, inst.clock)
            violations.append(event)
            if event.severity < tenant.adapt_trigger_threshold:
                decisions.append(Decision(event, strategy.name, None, None, "below threshold"))
                continue
            ctx = DecisionContext(w, sdm, binding, catalog, constraints, tenant.weights, event,
                                  inst.history, pool, inst)
            try:
                chain = strategy.select(ctx)
            except SelectionError as exc:
                chain, note = None, str(exc)
            else:
                note = "" if chain is not None or strategy.name == "none" else "no feasible response"
            if chain is None:
                decisions.append(Decision(event, strategy.name, None, None, note))
                continue
            cost = ctx.cost(chain)
            chain = AdaptationChain(chain.steps, event)
            apply_chain(inst, chain, event)
            decisions.append(Decision(event, strategy.name, chain, cost))
    trace = ExecutionTrace(instance_id, inst.records, violations, inst.history, decisions,
                           fold_records(inst.records, tenant.weights),
                           max((r.end for r in inst.records), default=0.0))
    strategy.end_instance(trace)
    return trace


# -- scenario ---------------------------------------------------------------

@dataclass
class Scenario:
    workflow: Workflow
    services: dict
    candidates: dict
    tenants: list
    constraints: tuple = ()
    params: AdaptationParams = field(default_factory=AdaptationParams)
    overrides: dict = field(default_factory=dict)
    binding_policy: str = "cheapest"
    binding_seed: int | None = None
    attack_rate: float = 0.3
    detection_delay: int = 0
    fixed_violations: list | None = None
    catalog: Catalog = field(default_factory=default_catalog)
    providers: list = field(default_factory=list)
    catalog_doc: dict | None = None

    @property
    def tenant(self) -> Tenant:
        return self.tenants[0]

    def bind(self) -> Binding:
        return bind_services(self.workflow, self.services, self.binding_policy, candidates=self.candidates,
                             seed=self.binding_seed, params=self.params, overrides=self.overrides)

    @classmethod
    def from_dict(cls, doc, base_dir: Path | None = None) -> "Scenario":
        try:
            if "workflow" in doc:
                w = parse_workflow(doc["workflow"])
            elif "workflow_path" in doc:
                p = Path(doc["workflow_path"])
                if base_dir is not None and not p.is_absolute():
                    p = base_dir / p
                w = parse_workflow(p.read_text())
            else:
                raise ConfigError("scenario needs 'workflow' or 'workflow_path'")
            services = {}
            for s in doc["services"]:
                svc = CloudService.from_dict(s)
                services[svc.id] = svc
            catalog_doc = doc.get("catalog")
            from .catalog import Catalog as _Catalog
            catalog = _Catalog.from_dict(catalog_doc) if catalog_doc else default_catalog()
            params = AdaptationParams.from_dict(doc.get("adaptation"))
            overrides = {t: AdaptationParams.from_dict({**params.to_dict(), **o})
                         for t, o in doc.get("adaptation_overrides", {}).items()}
            fixed = doc.get("fixed_violations")
            if fixed is not None:
                fixed = [ScheduledAttack(str(f["task"]), str(f["attack"]), float(f["score"])) for f in fixed]
            tenants = [Tenant.from_dict(t) for t in doc.get("tenants", [{}])] or [Tenant()]
            return cls(
                workflow=w, services=services,
                candidates={str(k): [str(x) for x in v] for k, v in doc.get("candidates", {}).items()},
                tenants=tenants,
                constraints=tuple(ChainConstraint.from_dict(c) for c in doc.get("constraints", [])),
                params=params, overrides=overrides,
                binding_policy=doc.get("binding_policy", "cheapest"),
                binding_seed=doc.get("binding_seed"),
                attack_rate=float(doc.get("attack_rate", 0.3)),
                detection_delay=int(doc.get("detection_delay", 0)),
                fixed_violations=fixed, catalog=catalog,
                providers=list(doc.get("providers", [])), catalog_doc=catalog_doc,
            )
        except KeyError as exc:
            raise ConfigError(f"scenario missing field {exc}") from None

    def to_dict(self) -> dict:
        d = {
            "workflow": self.workflow.to_dict(),
            "providers": self.providers,
            "services": [s.to_dict() for s in self.services.values()],
            "candidates": self.candidates,
            "tenants": [t.to_dict() for t in self.tenants],
            "constraints": [c.to_dict() for c in self.constraints],
            "adaptation": self.params.to_dict(),
            "binding_policy": self.binding_policy,
            "attack_rate": self.attack_rate,
            "detection_delay": self.detection_delay,
        }
        if self.binding_seed is not None:
            d["binding_seed"] = self.binding_seed
        if self.overrides:
            d["adaptation_overrides"] = {t: p.to_dict() for t, p in self.overrides.items()}
        if self.fixed_violations is not None:
            d["fixed_violations"] = [{"task": a.task, "attack": a.attack_type, "score": a.score}
                                     for a in self.fixed_violations]
        if self.catalog_doc:
            d["catalog"] = self.catalog_doc
        return d


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    return Scenario.from_dict(doc, path.parent)
