"""Workflow graph, closure sets and the Security Dependency Matrix."""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

from .catalog import ACTION_TYPES, normalize_action
from .errors import CycleError, UnknownTaskError, ValidationError, WorkflowParseError

CIA = tuple[float, float, float]
ZERO: CIA = (0.0, 0.0, 0.0)
ONE: CIA = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class TaskSpec:
    id: str
    confidentiality_req: float
    integrity_req: float
    availability_req: float
    value: float = 0.0
    feasible_actions: frozenset = frozenset()

    def __post_init__(self):
        for name in ("confidentiality_req", "integrity_req", "availability_req"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"task {self.id}: {name}={v} outside [0, 1]")
        if self.value < 0:
            raise ValidationError(f"task {self.id}: negative value {self.value}")
        bad = set(self.feasible_actions) - set(ACTION_TYPES)
        if bad:
            raise ValidationError(f"task {self.id}: unknown actions {sorted(bad)}")

    @property
    def cia(self) -> CIA:
        return (self.confidentiality_req, self.integrity_req, self.availability_req)


@dataclass(frozen=True)
class DataItem:
    id: str
    label: str = ""


def _reach(adj: Mapping[str, Iterable[str]], start: str) -> frozenset:
    seen = set()
    stack = list(adj.get(start, ()))
    while stack:
        t = stack.pop()
        if t not in seen:
            seen.add(t)
            stack.extend(adj.get(t, ()))
    seen.discard(start)
    return frozenset(seen)


@dataclass(frozen=True, eq=False)
class Workflow:
    id: str
    tasks: tuple
    data_items: tuple = ()
    # (src, dst, guard or None)
    control_edges: frozenset = frozenset()
    # (src, dst, data item id)
    data_edges: frozenset = frozenset()

    def __post_init__(self):
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate task ids")
        items = {d.id for d in self.data_items}
        if len(items) != len(self.data_items):
            raise ValidationError("duplicate data item ids")
        known = set(ids)
        for s, d, *_ in list(self.control_edges) + list(self.data_edges):
            for end in (s, d):
                if end not in known:
                    raise ValidationError(f"edge ({s}, {d}) references unknown task {end!r}")
        for s, d, item in self.data_edges:
            if item not in items:
                raise ValidationError(f"data edge ({s}, {d}) references unknown data item {item!r}")
        cycle = _find_cycle(ids, self.control_succ)
        if cycle:
            raise CycleError(cycle)

    # -- lookups ---------------------------------------------------------
    @cached_property
    def task_map(self) -> dict:
        return {t.id: t for t in self.tasks}

    @cached_property
    def task_ids(self) -> tuple:
        return tuple(t.id for t in self.tasks)

    def task(self, tid) -> TaskSpec:
        try:
            return self.task_map[tid]
        except KeyError:
            raise UnknownTaskError(tid) from None

    def _check(self, tid):
        if tid not in self.task_map:
            raise UnknownTaskError(tid)

    @cached_property
    def control_succ(self) -> dict:
        adj = {t: [] for t in self.task_ids}
        for s, d, *_ in sorted(self.control_edges, key=lambda e: (e[0], e[1])):
            adj[s].append(d)
        return adj

    @cached_property
    def control_pred(self) -> dict:
        adj = {t: [] for t in self.task_ids}
        for s, d, *_ in sorted(self.control_edges, key=lambda e: (e[0], e[1])):
            adj[d].append(s)
        return adj

    @cached_property
    def data_succ(self) -> dict:
        adj = {t: [] for t in self.task_ids}
        for s, d, _ in sorted(self.data_edges):
            adj[s].append(d)
        return adj

    @cached_property
    def any_succ(self) -> dict:
        return {t: sorted(set(self.control_succ[t]) | set(self.data_succ[t])) for t in self.task_ids}

    @cached_property
    def topo_order(self) -> tuple:
        """Topological order of the control graph; declaration order breaks ties."""
        index = {t: i for i, t in enumerate(self.task_ids)}
        indeg = {t: len(self.control_pred[t]) for t in self.task_ids}
        heap = [(index[t], t) for t in self.task_ids if indeg[t] == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            _, t = heapq.heappop(heap)
            order.append(t)
            for d in self.control_succ[t]:
                indeg[d] -= 1
                if indeg[d] == 0:
                    heapq.heappush(heap, (index[d], d))
        return tuple(order)

    @cached_property
    def topo_index(self) -> dict:
        return {t: i for i, t in enumerate(self.topo_order)}

    @cached_property
    def _dfcs(self) -> dict:
        return {t: _reach(self.data_succ, t) for t in self.task_ids}

    @cached_property
    def _cfcs(self) -> dict:
        return {t: _reach(self.control_succ, t) for t in self.task_ids}

    @cached_property
    def _pred(self) -> dict:
        return {t: _reach(self.control_pred, t) for t in self.task_ids}

    @cached_property
    def _any_reach(self) -> dict:
        return {t: _reach(self.any_succ, t) for t in self.task_ids}

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "tasks": [
                {"id": t.id, "c": t.confidentiality_req, "i": t.integrity_req,
                 "a": t.availability_req, "value": t.value,
                 "actions": [a for a in ACTION_TYPES if a in t.feasible_actions]}
                for t in self.tasks
            ],
            "data_items": [{"id": d.id, "label": d.label} for d in self.data_items],
            "control_edges": [[s, d] if g is None else [s, d, g]
                              for s, d, g in sorted(self.control_edges, key=lambda e: (e[0], e[1]))],
            "data_edges": [list(e) for e in sorted(self.data_edges)],
        }


def _find_cycle(nodes, succ) -> list | None:
    white, grey, black = 0, 1, 2
    color = {n: white for n in nodes}
    parent = {}
    for root in nodes:
        if color[root] != white:
            continue
        stack = [(root, iter(succ.get(root, ())))]
        color[root] = grey
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = black
                stack.pop()
            elif color[nxt] == grey:
                cycle = [nxt]
                cur = node
                while cur != nxt:
                    cycle.append(cur)
                    cur = parent[cur]
                cycle.append(nxt)
                return cycle[::-1]
            elif color[nxt] == white:
                color[nxt] = grey
                parent[nxt] = node
                stack.append((nxt, iter(succ.get(nxt, ()))))
    return None


# -- parsing -----------------------------------------------------------------

def _req(doc, key, path, kind=None):
    if not isinstance(doc, Mapping) or key not in doc:
        raise WorkflowParseError(path, f"missing required field {key!r}")
    v = doc[key]
    if kind is not None and not isinstance(v, kind):
        raise WorkflowParseError(f"{path}.{key}", f"expected {kind.__name__ if isinstance(kind, type) else 'number'}")
    return v


def _num(doc, key, path, default=None):
    if key not in doc:
        if default is None:
            raise WorkflowParseError(path, f"missing required field {key!r}")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise WorkflowParseError(f"{path}.{key}", "expected a number")
    return float(v)


def parse_workflow(document) -> Workflow:
    """Build a validated :class:`Workflow` from JSON text or a decoded dict."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise WorkflowParseError("$", f"invalid JSON: {exc}") from None
    if not isinstance(document, Mapping):
        raise WorkflowParseError("$", "expected an object")
    wid = str(_req(document, "id", "$"))
    raw_tasks = _req(document, "tasks", "$", list)
    tasks = []
    for i, t in enumerate(raw_tasks):
        path = f"$.tasks[{i}]"
        if not isinstance(t, Mapping):
            raise WorkflowParseError(path, "expected an object")
        actions = t.get("actions", [])
        if not isinstance(actions, list):
            raise WorkflowParseError(f"{path}.actions", "expected a list")
        try:
            tasks.append(TaskSpec(
                id=str(_req(t, "id", path)),
                confidentiality_req=_num(t, "c", path),
                integrity_req=_num(t, "i", path),
                availability_req=_num(t, "a", path),
                value=_num(t, "value", path, 0.0),
                feasible_actions=frozenset(normalize_action(a) for a in actions),
            ))
        except ValidationError as exc:
            if isinstance(exc, WorkflowParseError):
                raise
            raise WorkflowParseError(path, str(exc)) from None

    items = []
    for i, d in enumerate(document.get("data_items", [])):
        if isinstance(d, str):
            items.append(DataItem(d, d))
        elif isinstance(d, Mapping):
            items.append(DataItem(str(_req(d, "id", f"$.data_items[{i}]")), str(d.get("label", ""))))
        else:
            raise WorkflowParseError(f"$.data_items[{i}]", "expected a string or object")

    control = set()
    for i, e in enumerate(document.get("control_edges", [])):
        if not isinstance(e, list) or len(e) not in (2, 3):
            raise WorkflowParseError(f"$.control_edges[{i}]", "expected [src, dst] or [src, dst, guard]")
        control.add((str(e[0]), str(e[1]), None if len(e) == 2 or e[2] is None else str(e[2])))
    data = set()
    for i, e in enumerate(document.get("data_edges", [])):
        if not isinstance(e, list) or len(e) != 3:
            raise WorkflowParseError(f"$.data_edges[{i}]", "expected [src, dst, data_id]")
        data.add((str(e[0]), str(e[1]), str(e[2])))
    return Workflow(wid, tuple(tasks), tuple(items), frozenset(control), frozenset(data))


# -- closures ----------------------------------------------------------------

def data_flow_closure(w: Workflow, t) -> frozenset:
    """Tasks reachable from ``t`` over data edges (``t`` excluded)."""
    w._check(t)
    return w._dfcs[t]


def control_flow_closure(w: Workflow, t) -> frozenset:
    """Tasks reachable from ``t`` over control edges (``t`` excluded)."""
    w._check(t)
    return w._cfcs[t]


def successors(w: Workflow, t) -> frozenset:
    return control_flow_closure(w, t)


def predecessors(w: Workflow, t) -> frozenset:
    w._check(t)
    return w._pred[t]


# -- security dependency matrix ---------------------------------------------

@dataclass(frozen=True, eq=False)
class SecurityDependencyMatrix:
    task_order: tuple
    entries: tuple  # entries[i][j] is the (C, I, A) triple for (task_order[i], task_order[j])

    @cached_property
    def index(self) -> dict:
        return {t: i for i, t in enumerate(self.task_order)}

    def __getitem__(self, key) -> CIA:
        ti, tj = key
        try:
            return self.entries[self.index[ti]][self.index[tj]]
        except KeyError as exc:
            raise UnknownTaskError(exc.args[0]) from None

    def row(self, ti) -> dict:
        if ti not in self.index:
            raise UnknownTaskError(ti)
        return dict(zip(self.task_order, self.entries[self.index[ti]]))

    def to_csv(self) -> str:
        def cell(v):
            return "|".join(repr(float(x)) if x not in (0.0, 1.0) else str(int(x)) for x in v)

        lines = ["," + ",".join(self.task_order)]
        for t, row in zip(self.task_order, self.entries):
            lines.append(t + "," + ",".join(cell(v) for v in row))
        return "\n".join(lines) + "\n"


def _path_tasks(reach, src, dst) -> list:
    # every task on some directed path src -> dst, endpoints included
    return [src] + [k for k in reach[src] if k != dst and dst in reach[k]] + [dst]


def _product(w, tasks, attr) -> float:
    p = 1.0
    for k in sorted(tasks, key=w.topo_index.get):
        p *= getattr(w.task_map[k], attr)
    return p


def compute_sdm(w: Workflow) -> SecurityDependencyMatrix:
    """Pairwise (C, I, A) dependency triples.

    Confidentiality follows data flow in either direction, integrity forward
    data or control flow, availability forward data flow. Each component is
    the product of the requirement over every task on a connecting path.
    """
    dfcs, cfcs, anyr = w._dfcs, w._cfcs, w._any_reach
    rows = []
    for ti in w.task_ids:
        row = []
        for tj in w.task_ids:
            if ti == tj:
                row.append(ONE)
                continue
            c = i = a = 0.0
            if tj in dfcs[ti]:
                c = _product(w, _path_tasks(dfcs, ti, tj), "confidentiality_req")
            elif ti in dfcs[tj]:
                c = _product(w, _path_tasks(dfcs, tj, ti), "confidentiality_req")
            if tj in dfcs[ti] or tj in cfcs[ti]:
                i = _product(w, _path_tasks(anyr, ti, tj), "integrity_req")
            if tj in dfcs[ti]:
                a = _product(w, _path_tasks(dfcs, ti, tj), "availability_req")
            row.append((c, i, a))
        rows.append(tuple(row))
    return SecurityDependencyMatrix(w.task_ids, tuple(rows))


def dependent_tasks(sdm: SecurityDependencyMatrix, vt) -> frozenset:
    """Tasks whose dependency triple with ``vt`` is nonzero (``vt`` included).

    Reads the ``vt`` row, the same orientation the mitigation score uses.
    """
    return frozenset(t for t, v in sdm.row(vt).items() if v != ZERO) | {vt}


def insurance_claim_workflow() -> Workflow:
    """The eight-task insurance claim recovery workflow shipped with the package."""
    from importlib import resources

    return parse_workflow(resources.files("adaptchain").joinpath("data/insurance_claim.json").read_text())
