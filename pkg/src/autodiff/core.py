"""
Reverse-mode evaluation contract

An expression is a callable over a dict of named variables that reduces to a
scalar. `evaluate_with_grads` runs it once and returns the loss together with
one gradient per tracked variable; `finite_diff_check` verifies those
gradients against central differences.
"""

import re
from typing import Any, Callable, Dict, Iterable, Mapping

import torch
from pydantic import BaseModel, ConfigDict, Field

from ..utils.errors import ConfigError, ContractViolation, ShapeError

Expression = Callable[[Dict[str, Any]], torch.Tensor]

_SHAPE_MESSAGE = re.compile(r"size of tensor|shape|mat1 and mat2|must match|dimension", re.IGNORECASE)


class GradRecord(BaseModel):
    """Loss value plus gradients of the tracked variables"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    value: torch.Tensor = Field(..., description="Scalar loss")
    grads: Dict[str, torch.Tensor] = Field(default_factory=dict, description="Gradient per tracked variable")

    def item(self) -> float:
        return float(self.value.item())

    def is_finite(self) -> bool:
        return bool(torch.isfinite(self.value).item())


def _bind(variables: Mapping[str, Any], tracked: Iterable[str]) -> Dict[str, Any]:
    tracked = set(tracked)
    leaves: Dict[str, Any] = {}
    for name, value in variables.items():
        if not torch.is_tensor(value):
            leaves[name] = value
        elif name in tracked:
            leaves[name] = value.detach().requires_grad_(True)
        else:
            leaves[name] = value.detach()
    return leaves


def _evaluate(expression: Expression, leaves: Dict[str, Any]) -> torch.Tensor:
    try:
        value = expression(leaves)
    except RuntimeError as e:
        if _SHAPE_MESSAGE.search(str(e)):
            raise ShapeError(f"Operand dimensions disagree: {e}") from e
        raise
    if not torch.is_tensor(value) or value.numel() != 1:
        shape = tuple(value.shape) if torch.is_tensor(value) else type(value).__name__
        raise ContractViolation(f"Expression must reduce to a scalar, got {shape}")
    return value.reshape(())


def evaluate_with_grads(expression: Expression, variables: Mapping[str, Any], tracked: Iterable[str]) -> GradRecord:
    """Evaluate the expression once and differentiate it w.r.t. every tracked variable.

    A tracked variable that does not influence the loss gets an all-zero gradient.
    """
    tracked = list(tracked)
    unbound = [name for name in tracked if name not in variables]
    if unbound:
        raise ContractViolation(f"Tracked variables are not bound: {unbound}")

    leaves = _bind(variables, tracked)
    with torch.enable_grad():
        value = _evaluate(expression, leaves)
        inputs = [leaves[name] for name in tracked]
        if inputs and value.requires_grad:
            raw = torch.autograd.grad(value, inputs, allow_unused=True)
        else:
            raw = [None] * len(inputs)

    grads = {
        name: (g.detach() if g is not None else torch.zeros_like(leaves[name]))
        for name, g in zip(tracked, raw)
    }
    return GradRecord(value=value.detach(), grads=grads)


def finite_diff_check(
    expression: Expression,
    variables: Mapping[str, Any],
    variable: str,
    step: float = 1e-5,
    mode: str = "central",
) -> float:
    """Max over components of |analytic - numeric| / max(1, |numeric|)."""
    if step <= 0:
        raise ConfigError(f"Finite-difference step must be positive, got {step}", step=step)
    if mode != "central":
        raise ConfigError(f"Unsupported finite-difference mode: {mode}")
    if variable not in variables:
        raise ContractViolation(f"Variable not bound: {variable}")
    base = variables[variable]
    if base.dtype != torch.float64:
        raise ContractViolation("finite_diff_check needs 64-bit variables", dtype=str(base.dtype))

    analytic = evaluate_with_grads(expression, variables, [variable]).grads[variable]

    flat = base.detach().clone().reshape(-1)
    shifted = dict(variables)
    shifted[variable] = flat.view(base.shape)
    numeric = torch.zeros_like(flat)
    with torch.no_grad():
        for i in range(flat.numel()):
            original = flat[i].item()
            flat[i] = original + step
            upper = _evaluate(expression, _bind(shifted, ())).item()
            flat[i] = original - step
            lower = _evaluate(expression, _bind(shifted, ())).item()
            flat[i] = original
            numeric[i] = (upper - lower) / (2.0 * step)

    numeric = numeric.view(base.shape)
    error = (analytic - numeric).abs() / numeric.abs().clamp_min(1.0)
    return float(error.max().item()) if error.numel() else 0.0
