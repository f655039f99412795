"""Gradient oracle suite: every primitive and composite graphs checked
against central finite differences at f64, relative error < 1e-4."""

import numpy as np
import pytest

from wrenchflow import autodiff as ad

RNG = np.random.default_rng(0)


def rel_err(a, b):
    return abs(a - b) / max(1e-10, abs(a), abs(b))


def gradcheck(build, arrays, n_coords=10, eps=1e-6, tol=1e-4, rng=None):
    """build(list[Tensor]) -> scalar Tensor; checks d(out)/d(arrays)."""
    rng = rng or RNG
    tensors = [ad.Tensor.param(np.array(a, dtype=np.float64)) for a in arrays]
    out = build(tensors)
    out.backward()
    worst = 0.0
    for t in tensors:
        flat = t.data.reshape(-1)
        coords = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            f_plus = float(build([x.detach() for x in tensors]).data)
            flat[idx] = orig - eps
            f_minus = float(build([x.detach() for x in tensors]).data)
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            analytic = float(t.grad.reshape(-1)[idx])
            worst = max(worst, rel_err(numeric, analytic))
    assert worst < tol, f"worst relative gradient error {worst}"
    return worst


# ---------------------------------------------------------------------------
# individual primitives

def test_matmul_linear_case():
    # d/dx of sum(x @ W) equals the broadcast of W row sums
    x = ad.Tensor.param(RNG.normal(size=(4, 3)))
    W = ad.Tensor(RNG.normal(size=(3, 5)))
    (x @ W).sum().backward()
    np.testing.assert_allclose(x.grad, np.tile(W.data.sum(axis=1), (4, 1)), atol=1e-12)


def test_matmul_gradcheck():
    gradcheck(lambda ts: (ts[0] @ ts[1]).sum(),
              [RNG.normal(size=(3, 4)), RNG.normal(size=(4, 2))])


def test_matmul_batched_gradcheck():
    gradcheck(lambda ts: ((ts[0] @ ts[1]) * ts[2]).sum(),
              [RNG.normal(size=(2, 5, 3, 4)), RNG.normal(size=(4, 2)),
               RNG.normal(size=(2, 5, 3, 2))])


def test_add_broadcast_gradcheck():
    gradcheck(lambda ts: ((ts[0] + ts[1]) * (ts[0] + ts[1])).sum(),
              [RNG.normal(size=(3, 4)), RNG.normal(size=(4,))])


def test_mul_broadcast_gradcheck():
    gradcheck(lambda ts: (ts[0] * ts[1]).sum(),
              [RNG.normal(size=(2, 3, 4)), RNG.normal(size=(3, 1))])


@pytest.mark.parametrize("op", ["relu", "tanh", "silu", "exp"])
def test_elementwise_gradcheck(op):
    # keep relu inputs away from the kink
    base = RNG.normal(size=(4, 5))
    base[np.abs(base) < 0.05] += 0.1
    gradcheck(lambda ts: (getattr(ts[0], op)() * ts[1]).sum(),
              [base, RNG.normal(size=(4, 5))])


def test_sigmoid_gradcheck():
    gradcheck(lambda ts: (ad.sigmoid(ts[0]) * ts[1]).sum(),
              [RNG.normal(size=(3, 6)), RNG.normal(size=(3, 6))])


def test_layer_norm_gradcheck():
    gradcheck(lambda ts: (ts[0].layer_norm(ts[1], ts[2]) * ts[3]).sum(),
              [RNG.normal(size=(4, 8)), RNG.normal(size=(8,)) + 1.0,
               RNG.normal(size=(8,)), RNG.normal(size=(4, 8))],
              )


def test_softmax_gradcheck():
    gradcheck(lambda ts: (ad.softmax(ts[0], axis=-1) * ts[1]).sum(),
              [RNG.normal(size=(3, 7)), RNG.normal(size=(3, 7))])


def test_concat_reshape_gradcheck():
    def build(ts):
        c = ad.concat([ts[0], ts[1]], axis=-1)
        return (c.reshape(2, 12) * ts[2]).sum()
    gradcheck(build, [RNG.normal(size=(2, 2, 3)), RNG.normal(size=(2, 2, 3)),
                      RNG.normal(size=(2, 12))])


def test_mean_keepdims_gradcheck():
    gradcheck(lambda ts: (ts[0].mean(axis=-1, keepdims=True) * ts[1]).sum(),
              [RNG.normal(size=(3, 5)), RNG.normal(size=(3, 1))])


def test_bce_gradcheck_and_closed_form():
    targets = (RNG.random((4, 6)) > 0.5).astype(float)
    gradcheck(lambda ts: ad.bce_with_logits(ts[0], targets),
              [RNG.normal(size=(4, 6))])
    # closed form: per-element grad at logits 0, target 1 is sigmoid(0) - 1 = -0.5
    t = ad.Tensor.param(np.zeros(1))
    ad.bce_with_logits(t, np.ones(1)).backward()
    np.testing.assert_allclose(t.grad, [-0.5], atol=1e-12)


def test_mse_gradcheck():
    target = RNG.normal(size=(3, 4))
    weights = RNG.random((3, 4)) + 0.1
    gradcheck(lambda ts: ad.mse(ts[0], target, weights=weights),
              [RNG.normal(size=(3, 4))])


def test_weighted_bce_gradcheck():
    targets = (RNG.random((3, 4)) > 0.5).astype(float)
    weights = RNG.random((3, 4)) + 0.5
    gradcheck(lambda ts: ad.bce_with_logits(ts[0], targets, weights=weights),
              [RNG.normal(size=(3, 4))])


# ---------------------------------------------------------------------------
# composite graphs

def test_random_composite_graph_50_coordinates():
    W1 = RNG.normal(size=(7, 16))
    b1 = RNG.normal(size=(16,))
    g = RNG.normal(size=(16,)) + 1.5
    be = RNG.normal(size=(16,))
    W2 = RNG.normal(size=(16, 5))
    x = RNG.normal(size=(3, 4, 7))
    y = RNG.normal(size=(3, 4, 5))
    m = (RNG.random((3, 4, 5)) > 0.5).astype(float)

    def build(ts):
        W1t, b1t, gt, bt, W2t = ts
        h = (ad.Tensor(x) @ W1t + b1t).layer_norm(gt, bt).silu()
        o = h @ W2t
        cat = ad.concat([o, h], axis=-1)
        return (ad.mse(o, y, weights=m + 0.1)
                + ad.bce_with_logits(o, m)
                + (ad.softmax(o, axis=-1) * ad.Tensor(y)).sum() * 0.01
                + (cat * cat).mean() * 0.1)

    gradcheck(build, [W1, b1, g, be, W2], n_coords=10)


def test_gradient_accumulates_on_reuse():
    x = ad.Tensor.param(np.array([2.0]))
    y = x * x + x * 3.0
    y.backward()
    np.testing.assert_allclose(x.grad, [7.0])  # 2x + 3


def test_backward_requires_scalar():
    x = ad.Tensor.param(np.ones((2, 2)))
    with pytest.raises(ValueError):
        (x * 2).backward()
