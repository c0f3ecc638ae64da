"""
Reverse-mode differentiation contract

Scalar-loss evaluation with gradients w.r.t. named variables, the supported
op set, and finite-difference verification.
"""

from .core import GradRecord, evaluate_with_grads, finite_diff_check
from .ops import GradCheckResult, OpCapability, required_op_set, run_checks, run_op_checks

__all__ = [
    "GradRecord", "evaluate_with_grads", "finite_diff_check",
    "GradCheckResult", "OpCapability", "required_op_set", "run_checks", "run_op_checks",
]
