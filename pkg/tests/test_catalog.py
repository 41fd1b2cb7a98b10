import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptchain.catalog import (ACTION_TYPES, ActionType, AdaptationParams, Catalog, Severity, TaskBinding,
                                load_catalog, normalize_action)
from adaptchain.errors import BindingError, CatalogError, FeasibilityError
from adaptchain.workflow import TaskSpec

IMPACT = {"DoS": (0.56, 0.56, 0.56), "Probe": (0.22, 0.22, 0.0),
          "U2R": (0.56, 0.22, 0.22), "R2L": (0.56, 0.56, 0.22)}

MITIGATION = {
    ("DoS", "Low"): {"Switch", "Rework"},
    ("DoS", "Medium"): {"Insert", "Rework"},
    ("DoS", "High"): {"Insert", "Rework", "Redundancy", "Reconfiguration"},
    ("Probe", "Low"): {"Skip"},
    ("Probe", "Medium"): {"Skip", "Reconfiguration"},
    ("Probe", "High"): {"Skip", "Reconfiguration"},
    ("U2R", "Low"): {"Insert", "Rework"},
    ("U2R", "Medium"): {"Insert", "Rework"},
    ("U2R", "High"): {"Insert", "Rework", "Redundancy", "Reconfiguration"},
    ("R2L", "Low"): {"Rework"},
    ("R2L", "Medium"): {"Insert", "Rework"},
    ("R2L", "High"): {"Insert", "Rework", "Reconfiguration"},
}

MI = {"Insert": (0.7, 0.9, 0.9), "Switch": (0.7, 0.6, 0.8), "Skip": (0.5, 0.4, 0.6),
      "Rework": (0.5, 0.9, 0.7), "Redundancy": (0.5, 0.8, 0.9), "Reconfiguration": (0.6, 0.7, 0.5)}

EVERYTHING = frozenset(ACTION_TYPES)


def task(value=8.0, actions=EVERYTHING):
    return TaskSpec("t", 0.5, 0.5, 0.5, value=value, feasible_actions=frozenset(actions))


def test_attack_impacts(catalog):
    for a, imp in IMPACT.items():
        assert catalog.attack_impact(a) == imp


def test_mitigation_table(catalog):
    for (a, sev), acts in MITIGATION.items():
        assert catalog.mitigation_actions_for(a, sev) == acts
        assert catalog.mitigation_actions_for(a, Severity.parse(sev)) == acts


def test_mitigation_impacts(catalog):
    b = TaskBinding("s", 2.0, 10.0, "bk", 3.0, 14.0)
    for name, mi in MI.items():
        assert catalog.adaptation_properties(name, task(), b).mitigation_impact == mi


def test_unknown_members(catalog):
    with pytest.raises(CatalogError):
        catalog.attack_impact("Phishing")
    with pytest.raises(CatalogError):
        catalog.mitigation_actions_for("DoS", "Extreme")
    with pytest.raises(CatalogError):
        catalog.rule("Teleport")


def test_action_type_enum():
    assert [a.value for a in ActionType] == list(ACTION_TYPES)
    assert len(ACTION_TYPES) == 6
    assert normalize_action("ReConfiguration") == "Reconfiguration"
    assert normalize_action("Late") == "Late"


def test_monotone_except_dos(catalog):
    # Switch mitigates low-severity DoS only, so DoS is not nested.
    assert {a: catalog.is_monotone(a) for a in IMPACT} == {"DoS": False, "Probe": True, "U2R": True, "R2L": True}
    with pytest.raises(CatalogError):
        Catalog(catalog.attacks, catalog.actions, check_monotone=True)


class TestProperties:
    b = TaskBinding("s", 2.0, 10.0, "bk", 3.0, 14.0)

    def test_skip_is_zero(self, catalog):
        spec = catalog.adaptation_properties("Skip", task(), self.b)
        assert (spec.time, spec.price, spec.value) == (0.0, 0.0, 0.0)

    def test_redundancy(self, catalog):
        spec = catalog.adaptation_properties("Redundancy", task(value=10.0), self.b)
        assert (spec.time, spec.price) == (14.0, 5.0)
        assert spec.value == pytest.approx(12.0)

    def test_default_multipliers(self, catalog):
        t = task(value=10.0)
        ins = catalog.adaptation_properties("Insert", t, self.b)
        assert (ins.time, ins.price, ins.value) == (10.0, 2.0, 10.0)
        sw = catalog.adaptation_properties("Switch", t, self.b)
        assert (sw.time, sw.price, sw.value) == (pytest.approx(11.0), 2.0, 10.0)
        rw = catalog.adaptation_properties("Rework", t, self.b)
        assert (rw.time, rw.price, rw.value) == (14.0, 3.0, 10.0)
        rc = catalog.adaptation_properties("Reconfiguration", t, self.b)
        assert (rc.time, rc.price, rc.value) == pytest.approx((13.0, 2.6, 11.0))

    def test_params_override(self, catalog):
        b = TaskBinding("s", 2.0, 10.0, "bk", 3.0, 14.0, params=AdaptationParams(switch_time=2.0))
        assert catalog.adaptation_properties("Switch", task(), b).time == 20.0

    def test_infeasible(self, catalog):
        with pytest.raises(FeasibilityError):
            catalog.adaptation_properties("Skip", task(actions={"Insert"}), self.b)

    def test_missing_backup(self, catalog):
        b = TaskBinding("s", 2.0, 10.0)
        with pytest.raises(BindingError):
            catalog.adaptation_properties("Rework", task(), b)
        assert catalog.adaptation_properties("Insert", task(), b).price == 2.0

    def test_unknown_parameter(self):
        with pytest.raises(CatalogError):
            AdaptationParams.from_dict({"warp": 1.0})


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 100))
def test_skip_always_zero(price, time, value):
    from adaptchain.catalog import default_catalog
    b = TaskBinding("s", price, time, "bk", price, time)
    spec = default_catalog().adaptation_properties("Skip", task(value=value), b)
    assert (spec.price, spec.time, spec.value, spec.mitigation_impact) == (0.0, 0.0, 0.0, MI["Skip"])


@given(st.floats(0, 1))
def test_severity_bands_partition(score):
    sev = Severity.from_score(score)
    lo, hi = {Severity.LOW: (0, 1 / 3), Severity.MEDIUM: (1 / 3, 2 / 3), Severity.HIGH: (2 / 3, 1.0000001)}[sev]
    assert lo <= score < hi


def test_severity_edges():
    assert Severity.from_score(0.0) is Severity.LOW
    assert Severity.from_score(1 / 3) is Severity.MEDIUM
    assert Severity.from_score(2 / 3) is Severity.HIGH
    assert Severity.from_score(1.0) is Severity.HIGH
    with pytest.raises(ValueError):
        Severity.from_score(1.5)
    assert Severity.parse("high") is Severity.HIGH


def test_round_trip(catalog, tmp_path):
    doc = catalog.to_dict()
    again = Catalog.from_dict(json.loads(json.dumps(doc)))
    assert again.attacks == catalog.attacks
    assert again.actions == catalog.actions
    p = tmp_path / "cat.json"
    p.write_text(json.dumps(doc))
    assert load_catalog(p).to_dict() == doc


def test_user_catalog_extends(catalog):
    doc = catalog.to_dict()
    doc["actions"].append({"name": "Late", "alias_of": "Switch"})
    doc["attacks"].append({"type": "Ransom", "impact": [0.1, 0.9, 0.9],
                           "mitigation": {"Low": ["Late"], "Medium": ["Late", "Rework"], "High": ["Rework"]}})
    ext = Catalog.from_dict(doc)
    assert ext.mitigation_actions_for("Ransom", "Low") == {"Late"}
    assert ext.rule("Late").mi == MI["Switch"]
    with pytest.raises(CatalogError):
        Catalog.from_dict({"attacks": [], "actions": [{"name": "X", "alias_of": "Nope"}]})
