"""Budget-constrained scheduling of DAG workflows on heterogeneous VMs."""

from .budget import (BudgetPlan, budget_levels, check_feasible, min_budget, split_proportional,
                     split_uniform)
from .dag import ExtendedDag, Job, WorkflowDag, merge_workflows, topological_order, validate
from .platform import VmCatalog, VmInstance, VmType, eligible_vms, exec_cost, running_time
from .ranking import (build_transition_matrix, plain_upward_rank, priority_list,
                      stationary_distribution, weighted_upward_rank)
from .scheduler import Schedule, schedule_greedy, schedule_heft, validate_schedule

__version__ = "0.1.0"
