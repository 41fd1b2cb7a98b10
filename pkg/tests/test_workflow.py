import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptchain.errors import CycleError, UnknownTaskError, ValidationError, WorkflowParseError
from adaptchain.workflow import (TaskSpec, Workflow, compute_sdm, control_flow_closure, data_flow_closure,
                                 dependent_tasks, parse_workflow, predecessors, successors)
from oracles import random_workflow, reach, sdm_oracle, workflows


def chain3(c=0.5, i=0.5, a=0.5):
    return parse_workflow({
        "id": "abc",
        "tasks": [{"id": t, "c": c, "i": i, "a": a} for t in "abc"],
        "data_items": ["x", "y"],
        "control_edges": [["a", "b"], ["b", "c"]],
        "data_edges": [["a", "b", "x"], ["b", "c", "y"]],
    })


class TestParse:
    def test_single_task(self):
        w = parse_workflow('{"id": "w", "tasks": [{"id": "t", "c": 1, "i": 1, "a": 1}]}')
        assert w.task_ids == ("t",)
        assert not w.control_edges and not w.data_edges

    def test_insurance_fixture(self, claim):
        assert claim.task_ids == tuple(f"t{i}" for i in range(1, 9))
        assert {("t1", "t3"), ("t1", "t4"), ("t3", "t5"), ("t4", "t5")} <= {(s, d) for s, d, _ in claim.control_edges}

    def test_self_loop_is_cycle(self):
        doc = {"id": "w", "tasks": [{"id": "t1", "c": 1, "i": 1, "a": 1}, {"id": "t2", "c": 1, "i": 1, "a": 1}],
               "control_edges": [["t1", "t2"], ["t2", "t2"]]}
        with pytest.raises(CycleError) as err:
            parse_workflow(doc)
        assert err.value.cycle[0] == err.value.cycle[-1] == "t2"

    def test_longer_cycle(self):
        doc = {"id": "w", "tasks": [{"id": t, "c": 1, "i": 1, "a": 1} for t in "xyz"],
               "control_edges": [["x", "y"], ["y", "z"], ["z", "x"]]}
        with pytest.raises(CycleError):
            parse_workflow(doc)

    @pytest.mark.parametrize("doc, path", [
        ({"tasks": []}, "$"),
        ({"id": "w", "tasks": [{"id": "t", "c": 2, "i": 1, "a": 1}]}, "$.tasks[0]"),
        ({"id": "w", "tasks": [{"c": 1, "i": 1, "a": 1}]}, "$.tasks[0]"),
        ({"id": "w", "tasks": [{"id": "t", "c": 1, "i": 1, "a": 1}], "control_edges": [["t"]]}, "$.control_edges[0]"),
        ({"id": "w", "tasks": [{"id": "t", "c": 1, "i": 1, "a": 1}], "data_edges": [["t", "t"]]}, "$.data_edges[0]"),
    ])
    def test_schema_errors_name_the_path(self, doc, path):
        with pytest.raises(WorkflowParseError) as err:
            parse_workflow(doc)
        assert err.value.path.startswith(path)

    def test_bad_json(self):
        with pytest.raises(WorkflowParseError):
            parse_workflow("{not json")

    def test_unknown_endpoint_and_item(self):
        base = {"id": "w", "tasks": [{"id": "t", "c": 1, "i": 1, "a": 1}]}
        with pytest.raises(ValidationError):
            parse_workflow({**base, "control_edges": [["t", "ghost"]]})
        with pytest.raises(ValidationError):
            parse_workflow({**base, "tasks": base["tasks"] + [{"id": "u", "c": 1, "i": 1, "a": 1}],
                            "data_edges": [["t", "u", "nope"]]})

    def test_duplicate_ids(self):
        with pytest.raises(ValidationError):
            parse_workflow({"id": "w", "tasks": [{"id": "t", "c": 1, "i": 1, "a": 1}] * 2})

    def test_task_invariants(self):
        with pytest.raises(ValidationError):
            TaskSpec("t", 0.5, 0.5, 0.5, value=-1)
        with pytest.raises(ValidationError):
            TaskSpec("t", 0.5, 0.5, 0.5, feasible_actions=frozenset({"Teleport"}))

    def test_round_trip(self, claim):
        again = parse_workflow(json.dumps(claim.to_dict()))
        assert again.to_dict() == claim.to_dict()


class TestClosures:
    def test_dfcs_example(self, claim):
        assert data_flow_closure(claim, "t3") == {"t5", "t6"}

    def test_cfcs_example(self, claim):
        assert control_flow_closure(claim, "t3") == {"t5", "t6", "t7", "t8"}

    def test_sinks_are_empty(self, claim):
        assert data_flow_closure(claim, "t8") == frozenset()
        assert control_flow_closure(claim, "t8") == frozenset()

    def test_chain_and_diamond(self):
        assert data_flow_closure(chain3(), "a") == {"b", "c"}
        d = parse_workflow({"id": "d", "tasks": [{"id": t, "c": 1, "i": 1, "a": 1} for t in "abcd"],
                            "control_edges": [["a", "b"], ["a", "c"], ["b", "d"], ["c", "d"]]})
        assert control_flow_closure(d, "a") == {"b", "c", "d"}

    def test_pred_succ(self, claim):
        assert predecessors(claim, "t5") >= {"t1", "t3", "t4"}
        assert predecessors(claim, "t1") == frozenset()
        for t in claim.task_ids:
            assert successors(claim, t) == control_flow_closure(claim, t)

    def test_unknown_task(self, claim):
        with pytest.raises(UnknownTaskError):
            data_flow_closure(claim, "t99")
        with pytest.raises(UnknownTaskError):
            predecessors(claim, "t99")

    def test_topological_order(self, claim):
        pos = claim.topo_index
        assert all(pos[s] < pos[d] for s, d, _ in claim.control_edges)

    @settings(max_examples=60, deadline=None)
    @given(workflows(max_tasks=10))
    def test_closures_match_reachability(self, w):
        data = {(s, d) for s, d, _ in w.data_edges}
        control = {(s, d) for s, d, _ in w.control_edges}
        for t in w.task_ids:
            assert data_flow_closure(w, t) == reach(data, t)
            assert control_flow_closure(w, t) == reach(control, t)
            assert predecessors(w, t) == {u for u in w.task_ids if t in reach(control, u)}


class TestSDM:
    def test_fixture_entries(self, claim_sdm):
        assert claim_sdm["t8", "t5"] == (0.0, 0.0, 0.0)
        assert claim_sdm["t5", "t5"] == (1.0, 1.0, 1.0)
        assert claim_sdm["t3", "t5"] == (0.25, 1.0, 1.0)
        assert claim_sdm["t4", "t6"] == pytest.approx((0.35, 1.0, 0.5), abs=1e-12)
        assert claim_sdm["t5", "t6"] == (0.5, 1.0, 1.0)

    def test_edgeless_is_identity(self):
        w = Workflow("e", tuple(TaskSpec(t, 0.5, 0.5, 0.5) for t in "xyz"))
        sdm = compute_sdm(w)
        for a in "xyz":
            for b in "xyz":
                assert sdm[a, b] == ((1.0, 1.0, 1.0) if a == b else (0.0, 0.0, 0.0))
            assert dependent_tasks(sdm, a) == {a}

    def test_three_task_chain(self):
        sdm = compute_sdm(chain3())
        assert sdm["a", "c"] == (0.125, 0.125, 0.125)
        assert dependent_tasks(sdm, "b") == {"a", "b", "c"}

    def test_dependent_tasks_example(self, claim_sdm):
        assert dependent_tasks(claim_sdm, "t5") == {"t3", "t4", "t5", "t6", "t8"}

    def test_csv(self, claim_sdm):
        lines = claim_sdm.to_csv().splitlines()
        assert lines[0] == ",t1,t2,t3,t4,t5,t6,t7,t8"
        assert len(lines) == 9
        row5 = dict(zip(lines[0].split(",")[1:], lines[5].split(",")[1:]))
        assert row5["t5"] == "1|1|1"
        assert row5["t6"] == "0.5|1|1"

    @settings(max_examples=60, deadline=None)
    @given(workflows(max_tasks=9))
    def test_matches_path_oracle(self, w):
        sdm = compute_sdm(w)
        oracle = sdm_oracle(w)
        for (a, b), want in oracle.items():
            assert np.allclose(sdm[a, b], want, atol=1e-12, rtol=0)

    @settings(max_examples=40, deadline=None)
    @given(workflows(max_tasks=9))
    def test_ranges_and_diagonal(self, w):
        sdm = compute_sdm(w)
        for a in w.task_ids:
            assert sdm[a, a] == (1.0, 1.0, 1.0)
            assert a in dependent_tasks(sdm, a)
            for b in w.task_ids:
                assert all(0.0 <= x <= 1.0 for x in sdm[a, b])

    @settings(max_examples=40, deadline=None)
    @given(workflows(max_tasks=8), st.data())
    def test_lowering_a_requirement_never_raises_entries(self, w, data):
        t = data.draw(st.sampled_from(w.task_ids))
        old = w.task(t)
        lowered = TaskSpec(t, old.confidentiality_req * 0.5, old.integrity_req * 0.5,
                           old.availability_req * 0.5, old.value, old.feasible_actions)
        w2 = Workflow(w.id, tuple(lowered if x.id == t else x for x in w.tasks), w.data_items,
                      w.control_edges, w.data_edges)
        s1, s2 = compute_sdm(w), compute_sdm(w2)
        for a in w.task_ids:
            for b in w.task_ids:
                assert all(y <= x + 1e-15 for x, y in zip(s1[a, b], s2[a, b]))

    def test_all_ones_gives_exact_ones(self):
        w = random_workflow(np.random.default_rng(3), 9)
        ones = Workflow(w.id, tuple(TaskSpec(t.id, 1, 1, 1) for t in w.tasks), w.data_items,
                        w.control_edges, w.data_edges)
        sdm = compute_sdm(ones)
        for a in ones.task_ids:
            dfcs, cfcs = data_flow_closure(ones, a), control_flow_closure(ones, a)
            for b in ones.task_ids:
                if a == b:
                    continue
                c, i, av = sdm[a, b]
                assert c == (1.0 if b in dfcs or a in data_flow_closure(ones, b) else 0.0)
                assert i == (1.0 if b in dfcs or b in cfcs else 0.0)
                assert av == (1.0 if b in dfcs else 0.0)
