"""Executive agents and the non-agent baselines they are compared against."""

from .agent import (
    ASSURANCE,
    HEALING,
    ExecutiveAgent,
    GoalQueueEntry,
    Plan,
    PlanningError,
    Verification,
    plan_assurance,
    plan_healing,
)
from .baseline import (
    AlarmWatch,
    HumanOperator,
    RuleBasedDecisionTree,
    RuleBasedQosScript,
    StageTimes,
    run_sequence,
)

__all__ = [
    "ASSURANCE",
    "HEALING",
    "AlarmWatch",
    "ExecutiveAgent",
    "GoalQueueEntry",
    "HumanOperator",
    "Plan",
    "PlanningError",
    "RuleBasedDecisionTree",
    "RuleBasedQosScript",
    "StageTimes",
    "Verification",
    "plan_assurance",
    "plan_healing",
    "run_sequence",
]
