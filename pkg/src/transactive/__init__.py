"""Double-sided resource market with an on-ledger verifier and off-ledger solvers.

Modules:

- :mod:`.model`      offers, assignments, constraints and the feasibility verdict
- :mod:`.contract`   the verifier state machine and its operation log format
- :mod:`.solver`     exact, branch-and-bound and local-search allocation solvers
- :mod:`.harness`    deterministic multi-agent simulation, replay and verification
- :mod:`.scenarios`  carpooling and microgrid energy scenario generators
- :mod:`.fuzz`       randomised operation sequences with an exact rational oracle
"""

from .contract import Contract, ContractParams, Operation, Reject, Rejection
from .model import Assignment, ConstraintSet, ObjectiveKind, ObjectiveSpec, Offer, Side, check_allocation, objective
from .solver import SolverConfig, Strategy, solve

__version__ = "0.1.0"

__all__ = [
    "Assignment", "ConstraintSet", "Contract", "ContractParams", "ObjectiveKind", "ObjectiveSpec",
    "Offer", "Operation", "Reject", "Rejection", "Side", "SolverConfig", "Strategy",
    "check_allocation", "objective", "solve",
]
