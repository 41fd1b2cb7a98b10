"""Walk through the insurance-claim workflow: closures, SDM row, candidate chains and the best one."""
from adaptchain.catalog import TaskBinding, default_catalog
from adaptchain.chains import candidate_chains, rank_chains
from adaptchain.workflow import compute_sdm, control_flow_closure, data_flow_closure, dependent_tasks
from adaptchain.workflow import insurance_claim_workflow

w = insurance_claim_workflow()
sdm = compute_sdm(w)
print("DFCS(t3):", sorted(data_flow_closure(w, "t3")))
print("CFCS(t3):", sorted(control_flow_closure(w, "t3")))
print("DT(t5):  ", sorted(dependent_tasks(sdm, "t5")))
print()
print(sdm.to_csv())

binding = {t: TaskBinding(f"s-{t}", 2.0, 5.0, f"b-{t}", 3.0, 4.0) for t in w.task_ids}
cands = candidate_chains(w, sdm, "t5", "DoS", "High", catalog=default_catalog())
print(f"{len(cands)} candidate chains for a high-severity DoS at t5")
for weights in ("1,1,1,7", "3,3,3,1"):
    ranked = rank_chains(w, cands, None, weights, "t5", "DoS", sdm, binding)
    print(f"\nweights {weights}: best five")
    for chain, cost in ranked[:5]:
        print(f"  {cost.total:9.4f}  {chain}")
