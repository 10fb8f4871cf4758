import pytest
import torch
import torch.nn as nn

from core.errors import ShapeMismatch
from network.stacker import StackConfig, StackedCoAttention, stack_forward


def _inputs(channels=4, k=2, size=3, semantic_dim=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    v_q = torch.randn(1, channels, size, size, generator=g, dtype=torch.float64)
    supports = [torch.randn(1, channels, size, size, generator=g, dtype=torch.float64) for _ in range(k)]
    z = torch.randn(1, semantic_dim, generator=g, dtype=torch.float64) if semantic_dim else None
    return v_q, supports, z


def _manual_step(stack, i, v_q, supports, z):
    out = stack.block(i)(v_q, supports, z)
    q = stack.phi_q[i](v_q + stack.head_q[i](out.query))
    s = [stack.phi_s[i](v + stack.head_s[i](o)) for v, o in zip(supports, out.supports)]
    return q, s


def test_one_iteration_equals_manual_application():
    torch.manual_seed(0)
    stack = StackedCoAttention(4, 2, StackConfig(depth=1)).double()
    v_q, supports, z = _inputs()
    q, s = _manual_step(stack, 0, v_q, supports, z)
    out = stack_forward(stack, v_q, supports, z)
    assert torch.equal(out.query, q)
    assert all(torch.equal(a, b) for a, b in zip(out.supports, s))


def test_two_iterations_equal_two_manual_steps():
    torch.manual_seed(1)
    stack = StackedCoAttention(4, 2, StackConfig(depth=2)).double()
    v_q, supports, z = _inputs(seed=1)
    q, s = _manual_step(stack, 0, v_q, supports, z)
    q, s = _manual_step(stack, 1, q, s, z)
    out = stack(v_q, supports, z)
    assert torch.allclose(out.query, q, atol=1e-6)
    for a, b in zip(out.supports, s):
        assert torch.allclose(a, b, atol=1e-6)


def test_zero_interaction_reduces_to_relu():
    stack = StackedCoAttention(4, 2, StackConfig(depth=2)).double()
    with torch.no_grad():
        for block in stack.blocks:
            block.w_co.zero_()
            block.gate_q.bias.fill_(-20.0)
        for head in list(stack.head_q) + list(stack.head_s):
            head.weight.zero_()
            head.bias.zero_()
        for phi in list(stack.phi_q) + list(stack.phi_s):
            phi[0].weight.copy_(torch.eye(4, dtype=torch.float64)[:, :, None, None])
            phi[0].bias.zero_()
    v_q, supports, z = _inputs(seed=2)
    out = stack(v_q, supports, z)
    assert torch.allclose(out.query, torch.relu(v_q), atol=1e-6)


@pytest.mark.parametrize("depth", [1, 2, 3, 4])
def test_shapes_preserved_and_nonnegative(depth):
    torch.manual_seed(depth)
    stack = StackedCoAttention(4, 3, StackConfig(depth=depth)).double()
    v_q, supports, z = _inputs(k=3, size=5, semantic_dim=3, seed=depth)
    out = stack(v_q, supports, z)
    assert out.query.shape == v_q.shape
    assert [s.shape for s in out.supports] == [s.shape for s in supports]
    assert (out.query >= 0).all()
    assert out.gate is not None


def test_gradient_reaches_input_at_depth_four():
    torch.manual_seed(4)
    stack = StackedCoAttention(4, 2, StackConfig(depth=4)).double()
    v_q, supports, z = _inputs(seed=4)
    v_q = v_q.abs().requires_grad_(True)
    stack(v_q, supports, z).query.sum().backward()
    assert v_q.grad is not None
    assert v_q.grad.abs().sum() > 0


def test_visual_only_stack():
    stack = StackedCoAttention(4, 0, StackConfig(depth=2))
    v_q, supports, _ = _inputs(semantic_dim=0)
    out = stack(v_q.float(), [s.float() for s in supports])
    assert out.query.shape == v_q.shape


def test_shared_weights_use_single_block():
    stack = StackedCoAttention(4, 2, StackConfig(depth=3, share_weights=True))
    assert len(stack.blocks) == 1
    assert stack.block(0) is stack.block(2)
    assert len(stack.phi_q) == 3


def test_invalid_depth_and_channels():
    with pytest.raises(ValueError):
        StackConfig(depth=0)
    stack = StackedCoAttention(4, 0, StackConfig(depth=1))
    with pytest.raises(ShapeMismatch):
        stack(torch.randn(1, 3, 2, 2), [torch.randn(1, 3, 2, 2)])


def test_phi_is_conv_then_relu():
    stack = StackedCoAttention(4, 0, StackConfig(depth=1))
    assert isinstance(stack.phi_q[0][0], nn.Conv2d)
    assert stack.phi_q[0][0].kernel_size == (1, 1)
    assert isinstance(stack.phi_q[0][1], nn.ReLU)
