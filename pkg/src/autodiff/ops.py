"""
Differentiable op registry

Lists the operations the denoiser, the losses and the attacks rely on, each
with a small 64-bit gradient check.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field

from .core import Expression, finite_diff_check

CheckCase = Tuple[Expression, Dict[str, torch.Tensor], List[str]]


class OpCapability(BaseModel):
    """One supported op"""
    name: str = Field(..., description="Op name")
    description: str = Field(..., description="What the op computes")
    differentiable: bool = Field(True, description="Gradients available")


class GradCheckResult(BaseModel):
    """Outcome of one finite-difference check"""
    name: str
    variable: str
    max_rel_error: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class OpCheck:
    name: str
    description: str
    build: Callable[[torch.Generator], CheckCase]


def _rand(gen: torch.Generator, *shape: int) -> torch.Tensor:
    return torch.randn(*shape, generator=gen, dtype=torch.float64)


def _projected(out: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    return (out * weights).sum()


def _matmul(gen):
    a, b, w = _rand(gen, 4, 5), _rand(gen, 5, 3), _rand(gen, 4, 3)
    return (lambda v: _projected(v["a"] @ v["b"], w)), {"a": a, "b": b}, ["a", "b"]


def _bmm(gen):
    a, b, w = _rand(gen, 2, 3, 4), _rand(gen, 2, 4, 5), _rand(gen, 2, 3, 5)
    return (lambda v: _projected(torch.bmm(v["a"], v["b"]), w)), {"a": a, "b": b}, ["a", "b"]


def _conv(stride: int):
    def build(gen):
        x, k, b = _rand(gen, 1, 2, 6, 6), _rand(gen, 3, 2, 3, 3), _rand(gen, 3)
        w = _rand(gen, 1, 3, 6 // stride, 6 // stride)
        expr = lambda v: _projected(F.conv2d(v["x"], v["k"], v["b"], stride=stride, padding=1), w)
        return expr, {"x": x, "k": k, "b": b}, ["x", "k", "b"]
    return build


def _conv_transpose(gen):
    x, k, w = _rand(gen, 1, 2, 4, 4), _rand(gen, 2, 3, 4, 4), _rand(gen, 1, 3, 8, 8)
    expr = lambda v: _projected(F.conv_transpose2d(v["x"], v["k"], stride=2, padding=1), w)
    return expr, {"x": x, "k": k}, ["x", "k"]


def _upsample_conv(gen):
    x, k, w = _rand(gen, 1, 2, 4, 4), _rand(gen, 2, 2, 3, 3), _rand(gen, 1, 2, 8, 8)
    expr = lambda v: _projected(F.conv2d(F.interpolate(v["x"], scale_factor=2, mode="nearest"), v["k"], padding=1), w)
    return expr, {"x": x, "k": k}, ["x", "k"]


def _group_norm(gen):
    x, g, b, w = _rand(gen, 2, 4, 3, 3), _rand(gen, 4), _rand(gen, 4), _rand(gen, 2, 4, 3, 3)
    expr = lambda v: _projected(F.group_norm(v["x"], 2, v["g"], v["b"], eps=1e-5), w)
    return expr, {"x": x, "g": g, "b": b}, ["x", "g", "b"]


def _layer_norm(gen):
    x, w = _rand(gen, 3, 6), _rand(gen, 3, 6)
    expr = lambda v: _projected(F.layer_norm(v["x"], (6,), eps=1e-5), w)
    return expr, {"x": x}, ["x"]


def _softmax(gen):
    x, w = _rand(gen, 3, 5), _rand(gen, 3, 5)
    return (lambda v: _projected(torch.softmax(v["x"], dim=-1), w)), {"x": x}, ["x"]


def _unary(fn):
    def build(gen):
        x, w = _rand(gen, 4, 6), _rand(gen, 4, 6)
        return (lambda v: _projected(fn(v["x"]), w)), {"x": x}, ["x"]
    return build


def _elementwise(gen):
    a, b, w = _rand(gen, 3, 4), _rand(gen, 3, 4), _rand(gen, 3, 4)
    expr = lambda v: _projected(0.5 * (v["a"] + v["b"]) * v["a"], w)
    return expr, {"a": a, "b": b}, ["a", "b"]


def _embedding(gen):
    table, w = _rand(gen, 7, 4), _rand(gen, 3, 4)
    ids = torch.tensor([1, 5, 1])
    return (lambda v: _projected(F.embedding(ids, v["table"]), w)), {"table": table}, ["table"]


def _reshape_transpose(gen):
    x, w = _rand(gen, 2, 3, 4), _rand(gen, 4, 6)
    return (lambda v: _projected(v["x"].reshape(6, 4).transpose(0, 1), w)), {"x": x}, ["x"]


def _reductions(gen):
    x = _rand(gen, 3, 5)
    return (lambda v: v["x"].mean(dim=0).pow(2).sum() + v["x"].sum(dim=1).pow(3).mean()), {"x": x}, ["x"]


OP_CHECKS: Dict[str, OpCheck] = {check.name: check for check in [
    OpCheck("matmul", "matrix multiply", _matmul),
    OpCheck("bmm", "batched matrix multiply", _bmm),
    OpCheck("conv2d_s1", "3x3 convolution, stride 1", _conv(1)),
    OpCheck("conv2d_s2", "3x3 convolution, stride 2", _conv(2)),
    OpCheck("conv_transpose2d", "transposed (upsampling) convolution", _conv_transpose),
    OpCheck("upsample_conv", "nearest upsample followed by 3x3 convolution", _upsample_conv),
    OpCheck("group_norm", "group normalization, eps 1e-5", _group_norm),
    OpCheck("layer_norm", "layer normalization, eps 1e-5", _layer_norm),
    OpCheck("softmax", "softmax over the last axis", _softmax),
    OpCheck("silu", "SiLU activation", _unary(F.silu)),
    OpCheck("gelu", "GELU activation", _unary(F.gelu)),
    OpCheck("elementwise", "elementwise add, mul and scale", _elementwise),
    OpCheck("embedding", "embedding-table lookup", _embedding),
    OpCheck("reshape_transpose", "reshape and transpose", _reshape_transpose),
    OpCheck("reductions", "mean and sum reductions", _reductions),
]}


def required_op_set() -> List[OpCapability]:
    """Capabilities the denoiser and the attacks need, all differentiable"""
    return [OpCapability(name=c.name, description=c.description) for c in OP_CHECKS.values()]


def run_checks(
    checks: Dict[str, Callable[[torch.Generator], CheckCase]],
    tolerance: float = 1e-5,
    step: float = 1e-5,
    seed: int = 0,
) -> List[GradCheckResult]:
    """Run every named check against every variable it tracks"""
    results = []
    for name, build in checks.items():
        gen = torch.Generator().manual_seed(seed)
        expression, variables, tracked = build(gen)
        for variable in tracked:
            error = finite_diff_check(expression, variables, variable, step=step)
            results.append(GradCheckResult(
                name=name, variable=variable, max_rel_error=error,
                tolerance=tolerance, passed=error < tolerance,
            ))
    return results


def run_op_checks(tolerance: float = 1e-5, step: float = 1e-5, seed: int = 0) -> List[GradCheckResult]:
    return run_checks({name: c.build for name, c in OP_CHECKS.items()}, tolerance, step, seed)
