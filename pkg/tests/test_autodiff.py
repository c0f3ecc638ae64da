"""
Autodiff Core Tests
"""

import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.autodiff.core import evaluate_with_grads, finite_diff_check
from src.autodiff.ops import OP_CHECKS, required_op_set, run_op_checks
from src.utils.errors import ConfigError, ContractViolation, ShapeError


def _f64(values):
    return torch.tensor(values, dtype=torch.float64)


class TestEvaluateWithGrads:
    """Reverse-mode evaluation"""

    def test_scalar_square(self):
        record = evaluate_with_grads(lambda v: v["x"] * v["x"], {"x": _f64(3.0)}, ["x"])
        assert record.item() == pytest.approx(9.0)
        assert record.grads["x"].item() == pytest.approx(6.0)

    def test_residual_matches_finite_differences(self):
        gen = torch.Generator().manual_seed(0)
        variables = {"w": torch.randn(4, 4, generator=gen, dtype=torch.float64),
                     "v": torch.randn(4, generator=gen, dtype=torch.float64),
                     "b": torch.randn(4, generator=gen, dtype=torch.float64)}
        error = finite_diff_check(lambda v: ((v["w"] @ v["v"] - v["b"]) ** 2).sum(), variables, "w")
        assert error < 1e-6

    def test_square_sum(self):
        record = evaluate_with_grads(lambda v: (v["x"] * v["x"]).sum(), {"x": _f64([1.0, 2.0, 3.0])}, ["x"])
        assert record.item() == pytest.approx(14.0)
        assert torch.allclose(record.grads["x"], _f64([2.0, 4.0, 6.0]))

    def test_softmax_sum_has_zero_gradient(self):
        # sum of a softmax is constant
        record = evaluate_with_grads(lambda v: torch.softmax(v["x"], dim=-1).sum(), {"x": _f64([0.3, -1.2, 2.0])}, ["x"])
        assert record.item() == pytest.approx(1.0)
        assert torch.allclose(record.grads["x"], torch.zeros(3, dtype=torch.float64), atol=1e-12)

    def test_bilinear_form(self):
        w = torch.arange(16, dtype=torch.float64).reshape(4, 4) / 10.0
        a, b = _f64([1.0, 0.0, -1.0, 2.0]), _f64([0.5, 1.0, 0.0, -1.0])
        record = evaluate_with_grads(lambda v: v["a"] @ v["w"] @ v["b"], {"a": a, "w": w, "b": b}, ["w", "a"])
        assert torch.allclose(record.grads["w"], torch.outer(a, b))
        assert torch.allclose(record.grads["a"], w @ b)
        assert "b" not in record.grads

    def test_unused_tracked_variable_gets_zero_gradient(self):
        record = evaluate_with_grads(lambda v: v["x"].sum(), {"x": _f64([1.0]), "y": _f64([2.0, 3.0])}, ["x", "y"])
        assert torch.equal(record.grads["y"], torch.zeros(2, dtype=torch.float64))

    def test_inputs_are_not_mutated(self):
        x = _f64([1.0, 2.0])
        evaluate_with_grads(lambda v: (v["x"] ** 2).sum(), {"x": x}, ["x"])
        assert not x.requires_grad
        assert x.grad is None

    def test_unbound_tracked_variable(self):
        with pytest.raises(ContractViolation):
            evaluate_with_grads(lambda v: v["x"].sum(), {"x": _f64([1.0])}, ["z"])

    def test_non_scalar_result(self):
        with pytest.raises(ContractViolation):
            evaluate_with_grads(lambda v: v["x"] * 2, {"x": _f64([1.0, 2.0])}, ["x"])

    def test_shape_mismatch(self):
        variables = {"a": torch.ones(2, 3, dtype=torch.float64), "b": torch.ones(4, 2, dtype=torch.float64)}
        with pytest.raises(ShapeError):
            evaluate_with_grads(lambda v: (v["a"] @ v["b"]).sum(), variables, ["a"])


class TestFiniteDiffCheck:
    """Central-difference verification"""

    def test_polynomial(self):
        error = finite_diff_check(lambda v: (v["x"] ** 3).sum(), {"x": _f64([0.5, -1.5, 2.0])}, "x")
        assert error < 1e-6

    def test_linear_is_exact(self):
        w = _f64([0.5, -2.0, 1.5])
        error = finite_diff_check(lambda v: w @ v["x"], {"x": _f64([1.0, 2.0, 3.0])}, "x", step=1e-3)
        assert error < 1e-10

    def test_independent_variable(self):
        variables = {"x": _f64([1.0, 2.0]), "y": _f64([3.0])}
        record = evaluate_with_grads(lambda v: (v["x"] ** 2).sum(), variables, ["y"])
        assert torch.equal(record.grads["y"], torch.zeros(1, dtype=torch.float64))
        assert finite_diff_check(lambda v: (v["x"] ** 2).sum(), variables, "y") < 1e-8

    def test_rejects_non_positive_step(self):
        with pytest.raises(ConfigError):
            finite_diff_check(lambda v: v["x"].sum(), {"x": _f64([1.0])}, "x", step=0.0)

    def test_rejects_forward_mode(self):
        with pytest.raises(ConfigError):
            finite_diff_check(lambda v: v["x"].sum(), {"x": _f64([1.0])}, "x", mode="forward")

    def test_needs_64_bit(self):
        with pytest.raises(ContractViolation):
            finite_diff_check(lambda v: v["x"].sum(), {"x": torch.ones(2)}, "x")


class TestOpRegistry:
    """Capability set and its gradient checks"""

    def test_required_ops_listed(self):
        names = {op.name for op in required_op_set()}
        for needed in ("matmul", "bmm", "conv2d_s1", "conv2d_s2", "group_norm", "layer_norm",
                       "softmax", "silu", "gelu", "embedding", "reductions"):
            assert needed in names
        assert all(op.differentiable for op in required_op_set())

    def test_op_values(self):
        assert torch.softmax(torch.zeros(1, 2), dim=-1).tolist() == [[0.5, 0.5]]
        conv = torch.nn.functional.conv2d(torch.ones(1, 1, 5, 5), torch.ones(1, 1, 3, 3), padding=1)
        assert conv[0, 0, 1:4, 1:4].eq(9).all()
        assert conv[0, 0, 0, 0].item() == 4
        normed = torch.nn.functional.layer_norm(torch.full((1, 6), 2.5), (6,), eps=1e-5)
        assert torch.equal(normed, torch.zeros(1, 6))

    def test_every_op_passes(self):
        results = run_op_checks(tolerance=1e-4)
        assert {r.name for r in results} == set(OP_CHECKS)
        failed = [(r.name, r.variable, r.max_rel_error) for r in results if not r.passed]
        assert failed == []
