import numpy as np
import pytest
import torch
import torch.nn as nn

from network.coattention import CoAttentionBlock
from network.semantics import SemanticProjection
from utils.gradcheck import (GradCheckResult, check_module_gradients, numerical_gradient,
                             relative_error)


class SemanticInteraction(nn.Module):
    """Projection + one co-attention block, the unit checked below."""

    def __init__(self, embedding_dim, channels, semantic_dim):
        super().__init__()
        self.projection = SemanticProjection(embedding_dim, semantic_dim)
        self.block = CoAttentionBlock(channels, semantic_dim, share_gate=False)

    def forward(self, v_q, supports, embeddings):
        out = self.block(v_q, supports, self.projection(embeddings))
        return torch.cat([out.query] + out.supports, dim=1)


def _setup(seed):
    torch.manual_seed(seed)
    module = SemanticInteraction(embedding_dim=3, channels=4, semantic_dim=2).double()
    for conv in (module.block.gate_q, module.block.gate_s):
        nn.init.normal_(conv.weight, std=0.5)
        nn.init.normal_(conv.bias, std=0.5)
    v_q = torch.randn(1, 4, 3, 3, dtype=torch.float64)
    supports = [torch.randn(1, 4, 3, 3, dtype=torch.float64) for _ in range(2)]
    embeddings = torch.randn(1, 3, dtype=torch.float64)
    with torch.no_grad():
        weights = torch.randn_like(module(v_q, supports, embeddings))
    return module, lambda: (module(v_q, supports, embeddings) * weights).sum()


@pytest.mark.parametrize("seed", range(20))
def test_two_shot_semantic_block_gradients(seed):
    module, loss_fn = _setup(seed)
    result = check_module_gradients(module, loss_fn)
    assert result.passed(1e-4), result.per_parameter
    expected = sum(p.numel() for p in module.parameters())
    assert result.checked_elements == expected


def test_numerical_gradient_of_quadratic():
    p = torch.tensor([1.0, -2.0, 3.0], dtype=torch.float64)
    grad = numerical_gradient(lambda: (p ** 2).sum(), p)
    np.testing.assert_allclose(grad.numpy(), [2.0, -4.0, 6.0], atol=1e-8)
    assert torch.equal(p, torch.tensor([1.0, -2.0, 3.0], dtype=torch.float64))


def test_relative_error_uses_floor_for_tiny_gradients():
    err = relative_error(torch.tensor([1e-6]), torch.tensor([0.0]))
    assert float(err) == pytest.approx(1e-2)
    err = relative_error(torch.tensor([1e-3]), torch.tensor([0.0]))
    assert float(err) == pytest.approx(1.0)
    err = relative_error(torch.tensor([2.0]), torch.tensor([1.0]))
    assert float(err) == pytest.approx(0.5)


def test_float32_modules_are_refused():
    layer = nn.Linear(2, 2)
    x = torch.randn(3, 2)
    with pytest.raises(TypeError):
        check_module_gradients(layer, lambda: layer(x).sum())


def test_subsampled_check_counts_elements():
    torch.manual_seed(0)
    layer = nn.Linear(10, 10).double()
    x = torch.randn(4, 10, dtype=torch.float64)
    result = check_module_gradients(layer, lambda: torch.tanh(layer(x)).sum(), max_elements=5,
                                    rng=np.random.default_rng(1))
    assert isinstance(result, GradCheckResult)
    assert result.checked_elements == 10
    assert result.passed()


def test_broken_gradient_is_detected():
    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, x):
            return x ** 2

        @staticmethod
        def backward(ctx, grad):
            return grad * 0.0

    class Module(nn.Module):
        def __init__(self):
            super().__init__()
            self.p = nn.Parameter(torch.tensor([1.5], dtype=torch.float64))

        def forward(self):
            return Wrong.apply(self.p).sum()

    module = Module()
    assert not check_module_gradients(module, module).passed()
