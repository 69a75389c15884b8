"""
Tests for the numeric substrate: matmul, softmax, gradients, AdamW, checkpoints.
"""
import io
import os
import sys

import numpy as np
import pytest
import torch
import torch.nn.functional as F

# Add the project root to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from numkit import (
    GradTape,
    OptimizerState,
    adamw_step,
    as_tensor,
    check_gradients,
    load_checkpoint,
    matmul,
    save_checkpoint,
    softmax_rows,
)
from utils.errors import ContractError, DimensionError, NumericError


def naive_matmul(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            for x in range(k):
                out[i, j] += float(a[i, x]) * float(b[x, j])
    return out


def test_matmul_identity_and_hand_example():
    eye = torch.eye(3)
    assert torch.equal(matmul(eye, eye), eye)
    out = matmul(as_tensor([[1, 2], [3, 4]]), as_tensor([[1], [1]]))
    assert out.tolist() == [[3.0], [7.0]]


@pytest.mark.parametrize("size", [8, 17, 32])
def test_matmul_matches_triple_loop(size):
    gen = torch.Generator().manual_seed(size)
    a = torch.randn(size, size, generator=gen)
    b = torch.randn(size, size, generator=gen)
    expected = naive_matmul(a.numpy(), b.numpy())
    assert np.allclose(matmul(a, b).numpy(), expected, atol=1e-5 * size / 8, rtol=0)


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(torch.zeros(2, 3), torch.zeros(2, 3))


def test_softmax_examples():
    assert torch.allclose(softmax_rows(torch.zeros(1, 3)), torch.full((1, 3), 1 / 3), atol=1e-7)
    out = softmax_rows(torch.tensor([[1000.0, 0.0]]))
    assert torch.isfinite(out).all()
    assert abs(out[0, 0].item() - 1.0) < 1e-6 and out[0, 1].item() < 1e-6
    row = np.array([1.0, 2.0, 3.0], dtype=np.longdouble)
    oracle = np.exp(row) / np.exp(row).sum()
    got = softmax_rows(torch.tensor([[1.0, 2.0, 3.0]], dtype=torch.float64))[0].numpy()
    assert np.allclose(got, oracle.astype(np.float64), atol=1e-7)


def test_softmax_rows_sum_to_one():
    gen = torch.Generator().manual_seed(0)
    rows = torch.randn(1000, 17, generator=gen) * 30
    sums = softmax_rows(rows).sum(dim=-1)
    assert torch.all((sums - 1).abs() <= 1e-6)
    assert torch.all(softmax_rows(rows) >= 0)


def test_softmax_rejects_nan():
    with pytest.raises(NumericError):
        softmax_rows(torch.tensor([[0.0, float("nan")]]))


def test_backward_sum_gives_ones():
    w = torch.randn(3, 4)
    with GradTape({"w": w}) as tape:
        grads = tape.backward(w.sum())
    assert torch.equal(grads["w"], torch.ones(3, 4))


def test_backward_detached_parameter_gets_zero():
    w = torch.randn(2, 2)
    unused = torch.randn(5)
    with GradTape({"w": w, "unused": unused}) as tape:
        grads = tape.backward((w * 2).sum())
    assert torch.equal(grads["unused"], torch.zeros(5))


def test_backward_rejects_non_scalar():
    w = torch.randn(2, 2)
    with GradTape({"w": w}) as tape:
        with pytest.raises(ContractError):
            tape.backward(w * 3)


def test_least_squares_gradient_matches_finite_differences():
    gen = torch.Generator().manual_seed(1)
    w = torch.randn(4, 4, generator=gen, dtype=torch.float64)
    x = torch.randn(4, 1, generator=gen, dtype=torch.float64)
    y = torch.randn(4, 1, generator=gen, dtype=torch.float64)
    assert check_gradients(lambda: ((matmul(w, x) - y) ** 2).sum(), {"w": w}) <= 1e-3


def test_layer_types_match_finite_differences():
    gen = torch.Generator().manual_seed(2)
    d = torch.float64
    x = torch.randn(1, 4, 6, 6, generator=gen, dtype=d)
    params = {
        "conv_w": torch.randn(4, 4, 3, 3, generator=gen, dtype=d) * 0.3,
        "conv_b": torch.randn(4, generator=gen, dtype=d) * 0.1,
        "gn_w": 1 + torch.randn(4, generator=gen, dtype=d) * 0.1,
        "gn_b": torch.randn(4, generator=gen, dtype=d) * 0.1,
        "emb": torch.randn(5, 4, generator=gen, dtype=d),
        "wq": torch.randn(4, 4, generator=gen, dtype=d) * 0.5,
        "wk": torch.randn(4, 4, generator=gen, dtype=d) * 0.5,
        "wv": torch.randn(4, 4, generator=gen, dtype=d) * 0.5,
        "lin": torch.randn(4, 3, generator=gen, dtype=d) * 0.5,
    }
    index = torch.tensor([1, 3])

    def loss():
        h = F.conv2d(x, params["conv_w"], params["conv_b"], padding=1)
        h = F.group_norm(h, 2, params["gn_w"], params["gn_b"])
        h = h + F.embedding(index, params["emb"]).sum(0).view(1, 4, 1, 1)
        tokens = h.flatten(2).transpose(1, 2)[0]
        q, k, v = matmul(tokens, params["wq"]), matmul(tokens, params["wk"]), matmul(tokens, params["wv"])
        attn = matmul(softmax_rows(matmul(q, k.T) / 2.0), v)
        return (matmul(attn, params["lin"]) ** 2).mean()

    assert check_gradients(loss, params) <= 1e-3


def test_adamw_zero_gradient_no_decay_is_identity():
    p = torch.tensor([0.3, -0.2])
    state = OptimizerState({"p": p}, lr=1e-2, weight_decay=0.0)
    before = p.clone()
    adamw_step({"p": p}, {"p": torch.zeros(2)}, state)
    assert torch.equal(p, before)
    assert state.step == 1


def test_adamw_constant_gradient_approaches_sign_step():
    p = torch.zeros(2)
    lr = 1e-3
    state = OptimizerState({"p": p}, lr=lr, weight_decay=0.0)
    g = torch.tensor([0.5, -3.0])
    for _ in range(200):
        prev = p.clone()
        adamw_step({"p": p}, {"p": g}, state)
    step = p - prev
    assert torch.allclose(step, -lr * torch.sign(g), rtol=1e-3)


def test_adamw_matches_hand_recurrence():
    p0 = np.array([0.1, -0.05])
    g = np.array([0.02, -0.07])
    lr, wd, b1, b2, eps = 1e-2, 0.1, 0.9, 0.999, 1e-8
    p = torch.tensor(p0, dtype=torch.float32)
    state = OptimizerState({"p": p}, lr=lr, weight_decay=wd, betas=(b1, b2), eps=eps)
    adamw_step({"p": p}, {"p": torch.tensor(g, dtype=torch.float32)}, state)

    expected = p0 * (1 - lr * wd)
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    m_hat = m / (1 - b1)
    denom = np.sqrt(v) / np.sqrt(1 - b2) + eps
    expected = expected - lr * m_hat / denom
    assert np.allclose(p.numpy(), expected, atol=1e-7, rtol=0)


def test_adamw_shape_mismatch():
    p = torch.zeros(3)
    state = OptimizerState({"p": p})
    with pytest.raises(DimensionError):
        adamw_step({"p": p}, {"p": torch.zeros(4)}, state)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    gen = torch.Generator().manual_seed(3)
    tensors = {
        "scalar": torch.tensor(1.5),
        "block.weight": torch.randn(3, 4, 5, generator=gen),
        "emb": torch.randn(7, generator=gen),
    }
    path = tmp_path / "params.ckpt"
    save_checkpoint(tensors, str(path))
    with open(path, "rb") as handle:
        assert handle.read(4) == b"VIA1"
    loaded = load_checkpoint(str(path))
    assert list(loaded) == list(tensors)
    for name, tensor in tensors.items():
        assert loaded[name].shape == tensor.shape
        assert torch.equal(loaded[name], tensor)

    buffer = io.BytesIO()
    save_checkpoint(tensors, buffer)
    assert buffer.getvalue() == path.read_bytes()
