"""Security-driven adaptation chains for multi-cloud workflows."""
from .catalog import (ActionType, AdaptationParams, Catalog, Severity, TaskBinding, default_catalog,
                      load_catalog)
from .chains import (AdaptationChain, AdaptationHistory, CandidatePool, ChainConstraint, ChainSet, ChainStep,
                     CostBreakdown, ViolationEvent, Weights, candidate_chains, chain_cost, expand_chain_loops,
                     feasible_actions, generate_chain_set, make_chain, mitigation_score,
                     optimal_chain_exhaustive, rank_chains, resolve_constraints)
from .harness import ExperimentConfig, MetricsReport, export_metrics, generate_scenario, run_experiment
from .rl import QTable, RLConfig, RLState, encode_state, q_update, select_action, train
from .sim import (CloudService, ExecutionTrace, Scenario, Tenant, apply_chain, bind_services,
                  execute_instance, inject_attacks, load_scenario)
from .workflow import (SecurityDependencyMatrix, TaskSpec, Workflow, compute_sdm, control_flow_closure,
                       data_flow_closure, dependent_tasks, parse_workflow, predecessors, successors)

__version__ = "0.1.0"
