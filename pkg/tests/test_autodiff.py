import numpy as np
import pytest

from freqflow import autodiff as ad


def fd_check(build_loss, tensors, h=1e-6, tol=1e-5):
    """Central-difference check of d(loss)/d(tensor) for every element."""
    loss = build_loss()
    loss.backward()
    grads = [t.grad.copy() for t in tensors]
    for t, grad in zip(tensors, grads):
        flat = t.data.reshape(-1)
        g = np.random.default_rng(0)
        idxs = g.choice(flat.size, size=min(12, flat.size), replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            up = build_loss().item()
            flat[i] = orig - h
            dn = build_loss().item()
            flat[i] = orig
            fd = (up - dn) / (2 * h)
            assert abs(fd - grad.reshape(-1)[i]) < tol, f"fd {fd} vs analytic {grad.reshape(-1)[i]}"


def leaf(shape, seed, scale=1.0):
    data = np.random.default_rng(seed).normal(size=shape) * scale
    return ad.Tensor(data, requires_grad=True)


def test_add_mul_broadcast():
    a = leaf((3, 4), 1)
    b = leaf((4,), 2)
    c = leaf((3, 1), 3)
    fd_check(lambda: ad.mean_all(ad.mul(ad.add(a, b), c)), [a, b, c])


def test_matmul_2d():
    a = leaf((3, 5), 4)
    b = leaf((5, 2), 5)
    fd_check(lambda: ad.mean_all(ad.square(ad.matmul(a, b))), [a, b])


def test_matmul_batched_with_2d_rhs():
    a = leaf((4, 3, 5), 6)
    b = leaf((5, 2), 7)
    fd_check(lambda: ad.mean_all(ad.square(ad.matmul(a, b))), [a, b])


def test_matmul_2d_lhs_batched_rhs():
    a = leaf((6, 4), 8)
    b = leaf((2, 4, 3), 9)
    fd_check(lambda: ad.mean_all(ad.square(ad.matmul(a, b))), [a, b])


def test_matmul_batched_both():
    a = leaf((2, 3, 4), 10)
    b = leaf((2, 4, 5), 11)
    fd_check(lambda: ad.mean_all(ad.square(ad.matmul(a, b))), [a, b])


def test_reshape_transpose_concat():
    a = leaf((2, 3, 4), 12)
    b = leaf((2, 3, 4), 13)

    def build():
        t = ad.transpose(ad.concat([a, b], axis=2), (0, 2, 1))
        return ad.mean_all(ad.square(ad.reshape(t, (2, -1))))

    fd_check(build, [a, b])


def test_sigmoid_gelu_softmax():
    a = leaf((4, 6), 14)
    fd_check(lambda: ad.mean_all(ad.mul(ad.sigmoid(a), ad.gelu(a))), [a], tol=1e-6)
    fd_check(lambda: ad.mean_all(ad.square(ad.softmax_last(a))), [a], tol=1e-6)


def test_layernorm_gradients():
    x = leaf((5, 8), 15)
    gamma = ad.Tensor(np.random.default_rng(16).normal(size=8), requires_grad=True)
    beta = ad.Tensor(np.random.default_rng(17).normal(size=8), requires_grad=True)
    weight = np.random.default_rng(18).normal(size=(5, 8))

    def build():
        return ad.mean_all(ad.mul(ad.layernorm(x, gamma, beta), ad.Tensor(weight)))

    fd_check(build, [x, gamma, beta], tol=1e-6)


def test_conv3x3_gradients():
    x = leaf((2, 4, 5, 3), 19)
    w = leaf((3, 3, 3, 2), 20, scale=0.5)
    b = leaf((2,), 21)
    fd_check(lambda: ad.mean_all(ad.square(ad.conv3x3(x, w, b))), [x, w, b])


def test_embedding_gradients():
    table = leaf((5, 3), 22)
    idx = np.array([0, 2, 2, 4])
    weight = np.random.default_rng(23).normal(size=(4, 3))
    fd_check(lambda: ad.mean_all(ad.mul(ad.embedding(table, idx), ad.Tensor(weight))), [table])


def test_mse_gradient_and_value():
    p = leaf((3, 4), 24)
    t = np.random.default_rng(25).normal(size=(3, 4))
    loss = ad.mse(p, t)
    assert loss.item() == pytest.approx(((p.data - t) ** 2).mean())
    fd_check(lambda: ad.mse(p, t), [p], tol=1e-6)


def test_freq_mse_matches_parseval_and_gradient():
    p = leaf((2, 1, 4, 4), 26)
    t = np.random.default_rng(27).normal(size=(2, 1, 4, 4))
    lf = ad.freq_mse(p, t)
    ls = ad.mse(p, t)
    assert lf.item() == pytest.approx(16 * ls.item(), rel=1e-12)
    fd_check(lambda: ad.freq_mse(p, t), [p], tol=1e-4)


def test_scalar_expression_sugar():
    a = leaf((2, 2), 28)
    total = ad.mean_all(a) + 0.5 * ad.mean_all(ad.square(a))
    total.backward()
    expected = 0.25 + 0.5 * a.data * 0.25 * 2
    assert np.allclose(a.grad, expected)


def test_constant_graph_builds_no_tape():
    a = ad.Tensor(np.ones((2, 2)))
    b = ad.Tensor(np.ones((2, 2)))
    out = ad.matmul(a, b)
    assert not out.requires_grad
    assert out._parents == ()


def test_grad_accumulates_across_reuse():
    a = leaf((3,), 29)
    loss = ad.sum_all(ad.add(ad.square(a), a))
    loss.backward()
    assert np.allclose(a.grad, 2 * a.data + 1)


def test_backward_is_repeatable():
    a = leaf((3,), 30)
    loss = ad.sum_all(ad.square(a))
    loss.backward()
    g1 = a.grad.copy()
    loss.backward()
    assert np.array_equal(g1, a.grad)
