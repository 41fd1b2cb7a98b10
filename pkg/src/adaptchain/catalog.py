"""Attack catalog and adaptation-action property rules.

The catalog is data: attack impacts, severity-conditioned mitigation sets and
per-action property selectors are loaded from JSON (``data/default_catalog.json``
ships with the package). Extra attack types and alias actions can be added in
a user catalog without touching code.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from enum import Enum, IntEnum
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import BindingError, CatalogError, FeasibilityError

Triple = tuple[float, float, float]


class ActionType(str, Enum):
    INSERT = "Insert"
    SWITCH = "Switch"
    SKIP = "Skip"
    REWORK = "Rework"
    REDUNDANCY = "Redundancy"
    RECONFIGURATION = "Reconfiguration"

    def __str__(self):
        return self.value


ACTION_TYPES = tuple(a.value for a in ActionType)
# Inputs sometimes spell it "ReConfiguration".
_ACTION_SPELLINGS = {a.value.lower(): a.value for a in ActionType}


def normalize_action(name: str) -> str:
    """Canonical spelling for built-in action names; other names pass through."""
    return _ACTION_SPELLINGS.get(str(name).lower(), str(name))


class Severity(IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()

    def __str__(self):
        return self.label

    @classmethod
    def parse(cls, value) -> "Severity":
        if isinstance(value, Severity):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise CatalogError(f"unknown severity {value!r}") from None

    @classmethod
    def from_score(cls, score: float) -> "Severity":
        """Low = [0, 1/3), Medium = [1/3, 2/3), High = [2/3, 1]."""
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"severity score {score} outside [0, 1]")
        if score < 1.0 / 3.0:
            return cls.LOW
        if score < 2.0 / 3.0:
            return cls.MEDIUM
        return cls.HIGH


def _triple(values, what) -> Triple:
    t = tuple(float(v) for v in values)
    if len(t) != 3 or not all(0.0 <= v <= 1.0 for v in t):
        raise CatalogError(f"{what}: expected three values in [0, 1], got {values!r}")
    return t


@dataclass(frozen=True)
class AttackSpec:
    attack_type: str
    impact: Triple
    mitigation_by_severity: Mapping[Severity, frozenset]


@dataclass(frozen=True)
class AdaptationActionSpec:
    action_type: str
    price: float
    time: float
    value: float
    mitigation_impact: Triple


@dataclass(frozen=True)
class AdaptationParams:
    """Free parameters of the adaptation property formulas.

    Multipliers apply to the bound service's (T, P) and the task value.
    """

    new_task_time: float = 1.0
    new_task_price: float = 1.0
    new_task_value: float = 1.0
    switch_time: float = 1.1
    switch_value: float = 1.0
    reconfig_time: float = 0.3
    reconfig_price: float = 0.3
    redundancy_value: float = 0.2
    reconfig_value: float = 0.1

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "AdaptationParams":
        if not d:
            return cls()
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise CatalogError(f"unknown adaptation parameters: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class TaskBinding:
    """Service binding context of one task."""

    service: str
    price: float
    time: float
    backup: str | None = None
    backup_price: float | None = None
    backup_time: float | None = None
    degenerate_backup: bool = False
    params: AdaptationParams = field(default_factory=AdaptationParams)


_TIME = {
    "zero": lambda b, p, v: 0.0,
    "new_task": lambda b, p, v: b.time * p.new_task_time,
    "switch": lambda b, p, v: b.time * p.switch_time,
    "same": lambda b, p, v: b.time,
    "backup": lambda b, p, v: b.backup_time,
    "max_backup": lambda b, p, v: max(b.backup_time, b.time),
    "plus_reconfig": lambda b, p, v: b.time + b.time * p.reconfig_time,
}
_PRICE = {
    "zero": lambda b, p, v: 0.0,
    "new_task": lambda b, p, v: b.price * p.new_task_price,
    "same": lambda b, p, v: b.price,
    "backup": lambda b, p, v: b.backup_price,
    "plus_backup": lambda b, p, v: b.price + b.backup_price,
    "plus_reconfig": lambda b, p, v: b.price + b.price * p.reconfig_price,
}
_VALUE = {
    "zero": lambda b, p, v: 0.0,
    "new_task": lambda b, p, v: v * p.new_task_value,
    "switch": lambda b, p, v: v * p.switch_value,
    "same": lambda b, p, v: v,
    "plus_redundancy": lambda b, p, v: v + v * p.redundancy_value,
    "plus_reconfig": lambda b, p, v: v + v * p.reconfig_value,
}
_NEEDS_BACKUP = {"backup", "max_backup", "plus_backup"}


@dataclass(frozen=True)
class ActionRule:
    name: str
    mi: Triple
    time: str
    price: str
    value: str
    # Additive actions run on top of the task's normal execution instead of
    # replacing it (Insert adds a new task next to the original one).
    additive: bool = False
    alias_of: str | None = None

    def __post_init__(self):
        for sel, table in ((self.time, _TIME), (self.price, _PRICE), (self.value, _VALUE)):
            if sel not in table:
                raise CatalogError(f"action {self.name}: unknown selector {sel!r}")

    @property
    def needs_backup(self) -> bool:
        return self.time in _NEEDS_BACKUP or self.price in _NEEDS_BACKUP

    def to_dict(self) -> dict:
        d = {"name": self.name, "mi": list(self.mi), "time": self.time,
             "price": self.price, "value": self.value}
        if self.additive:
            d["additive"] = True
        if self.alias_of:
            d["alias_of"] = self.alias_of
        return d


class Catalog:
    def __init__(self, attacks: Mapping[str, AttackSpec], actions: Mapping[str, ActionRule],
                 check_monotone: bool = False):
        self.attacks = dict(attacks)
        self.actions = dict(actions)
        for a in self.attacks.values():
            for acts in a.mitigation_by_severity.values():
                for name in acts:
                    if name not in self.actions:
                        raise CatalogError(f"attack {a.attack_type}: unknown action {name!r}")
        if check_monotone:
            bad = [a for a in self.attacks if not self.is_monotone(a)]
            if bad:
                raise CatalogError(f"mitigation sets not monotone in severity for {bad}")

    def is_monotone(self, attack_type) -> bool:
        """Low set within Medium set within High set.

        False for the built-in DoS row: Switch mitigates low-severity DoS only.
        """
        m = self._attack(attack_type).mitigation_by_severity
        return m[Severity.LOW] <= m[Severity.MEDIUM] <= m[Severity.HIGH]

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Catalog":
        try:
            actions = {}
            for a in doc["actions"]:
                name = normalize_action(a["name"])
                base = a.get("alias_of")
                if base is not None:
                    base_rule = actions.get(normalize_action(base))
                    if base_rule is None:
                        raise CatalogError(f"alias {name}: base action {base!r} must be listed first")
                    actions[name] = replace(base_rule, name=name, alias_of=base_rule.name)
                    continue
                actions[name] = ActionRule(
                    name=name, mi=_triple(a["mi"], f"action {name} mi"),
                    time=a["time"], price=a["price"], value=a["value"],
                    additive=bool(a.get("additive", False)))
            attacks = {}
            for a in doc["attacks"]:
                mit = {Severity.parse(k): frozenset(normalize_action(x) for x in v)
                       for k, v in a["mitigation"].items()}
                if set(mit) != set(Severity):
                    raise CatalogError(f"attack {a['type']}: mitigation needs Low, Medium and High")
                attacks[a["type"]] = AttackSpec(a["type"], _triple(a["impact"], f"attack {a['type']} impact"), mit)
        except KeyError as exc:
            raise CatalogError(f"catalog entry missing field {exc}") from None
        return cls(attacks, actions)

    def to_dict(self) -> dict:
        order = {a: i for i, a in enumerate(ACTION_TYPES)}

        def sort(acts):
            return sorted(acts, key=lambda n: (order.get(n, len(order)), n))

        return {
            "attacks": [
                {"type": a.attack_type, "impact": list(a.impact),
                 "mitigation": {s.label: sort(a.mitigation_by_severity[s]) for s in Severity}}
                for a in self.attacks.values()
            ],
            "actions": [r.to_dict() if r.alias_of is None else {"name": r.name, "alias_of": r.alias_of}
                        for r in self.actions.values()],
        }

    def _attack(self, attack_type) -> AttackSpec:
        try:
            return self.attacks[attack_type]
        except KeyError:
            raise CatalogError(f"unknown attack type {attack_type!r}") from None

    def rule(self, action) -> ActionRule:
        try:
            return self.actions[normalize_action(action)]
        except KeyError:
            raise CatalogError(f"unknown action {action!r}") from None

    def attack_impact(self, attack_type) -> Triple:
        return self._attack(attack_type).impact

    def mitigation_actions_for(self, attack_type, severity) -> frozenset:
        return self._attack(attack_type).mitigation_by_severity[Severity.parse(severity)]

    def adaptation_properties(self, action, task, binding: TaskBinding,
                              check_feasible: bool = True) -> AdaptationActionSpec:
        """Resolve (P, T, V, MI) of ``action`` on ``task`` under ``binding``."""
        rule = self.rule(action)
        if check_feasible and rule.name not in task.feasible_actions:
            raise FeasibilityError(f"{rule.name} is not feasible for task {task.id}")
        if rule.needs_backup and (binding.backup is None or binding.backup_time is None
                                  or binding.backup_price is None):
            raise BindingError(f"{rule.name} on task {task.id} needs a backup service")
        p = binding.params
        return AdaptationActionSpec(
            action_type=rule.name,
            price=float(_PRICE[rule.price](binding, p, task.value)),
            time=float(_TIME[rule.time](binding, p, task.value)),
            value=float(_VALUE[rule.value](binding, p, task.value)),
            mitigation_impact=rule.mi,
        )


def load_catalog(path: str | Path | None = None) -> Catalog:
    if path is None:
        text = resources.files("adaptchain").joinpath("data/default_catalog.json").read_text()
    else:
        text = Path(path).read_text()
    return Catalog.from_dict(json.loads(text))


_DEFAULT: Catalog | None = None


def default_catalog() -> Catalog:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_catalog()
    return _DEFAULT
