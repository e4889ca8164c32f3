import numpy as np
import pytest

from freqflow import kernels


def conv3x3_naive(x, w, b):
    """Scalar-loop oracle for the 3x3 same convolution."""
    B, H, W, Ci = x.shape
    Co = w.shape[3]
    y = np.zeros((B, H, W, Co), dtype=np.float64)
    for bi in range(B):
        for oy in range(H):
            for ox in range(W):
                for co in range(Co):
                    acc = b[co]
                    for ky in range(3):
                        for kx in range(3):
                            iy, ix = oy + ky - 1, ox + kx - 1
                            if 0 <= iy < H and 0 <= ix < W:
                                for ci in range(Ci):
                                    acc += x[bi, iy, ix, ci] * w[ky, kx, ci, co]
                    y[bi, oy, ox, co] = acc
    return y


@pytest.fixture
def conv_data():
    g = np.random.default_rng(0)
    x = g.normal(size=(2, 5, 6, 3))
    w = g.normal(size=(3, 3, 3, 4))
    b = g.normal(size=4)
    return x, w, b


def test_conv3x3_matches_naive(conv_data):
    x, w, b = conv_data
    y, _ = kernels.conv3x3_fwd(x, w, b)
    assert np.max(np.abs(y - conv3x3_naive(x, w, b))) < 1e-12


def test_conv3x3_backends_agree(conv_data):
    if not kernels.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    x, w, b = conv_data
    y_np, cols_np = kernels._conv3x3_fwd_numpy(x, w, b)
    y_nb, cols_nb = kernels._conv3x3_fwd_numba(x, w, b)
    assert np.max(np.abs(y_np - y_nb)) < 1e-12
    assert np.array_equal(cols_np, cols_nb)

    gy = np.random.default_rng(1).normal(size=y_np.shape)
    gx_np, gw_np, gb_np = kernels._conv3x3_bwd_numpy(cols_np, x, w, gy)
    gx_nb, gw_nb, gb_nb = kernels._conv3x3_bwd_numba(cols_nb, x, w, gy)
    assert np.max(np.abs(gx_np - gx_nb)) < 1e-10
    assert np.max(np.abs(gw_np - gw_nb)) < 1e-10
    assert np.max(np.abs(gb_np - gb_nb)) < 1e-10
    # and ctx=None recomputes the forward context
    gx2, gw2, gb2 = kernels._conv3x3_bwd_numba(None, x, w, gy)
    assert np.max(np.abs(gx2 - gx_nb)) < 1e-12


def test_conv3x3_bwd_finite_difference(conv_data):
    x, w, b = conv_data
    gy = np.random.default_rng(2).normal(size=(2, 5, 6, 4))
    _, ctx = kernels.conv3x3_fwd(x, w, b)
    gx, gw, gb = kernels.conv3x3_bwd(ctx, x, w, gy)

    def loss(xx, ww, bb):
        return float((kernels.conv3x3_fwd(xx, ww, bb)[0] * gy).sum())

    h = 1e-6
    for arr, grad in ((x, gx), (w, gw), (b, gb)):
        flat = arr.reshape(-1)
        idxs = np.random.default_rng(3).choice(flat.size, size=min(10, flat.size), replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            up = loss(x, w, b)
            flat[i] = orig - h
            dn = loss(x, w, b)
            flat[i] = orig
            fd = (up - dn) / (2 * h)
            assert abs(fd - grad.reshape(-1)[i]) < 1e-5


def test_layernorm_roundtrip_stats():
    g = np.random.default_rng(4)
    x = g.normal(size=(64, 16)) * 3 + 1
    gamma = np.ones(16)
    beta = np.zeros(16)
    y, mean, rstd = kernels.layernorm_fwd(x, gamma, beta)
    assert np.max(np.abs(y.mean(axis=1))) < 1e-10
    assert np.max(np.abs(y.std(axis=1) - 1)) < 1e-4
    assert np.max(np.abs(mean - x.mean(axis=1))) < 1e-12


def test_layernorm_bwd_finite_difference():
    g = np.random.default_rng(5)
    x = g.normal(size=(4, 8))
    gamma = g.normal(size=8)
    beta = g.normal(size=8)
    gy = g.normal(size=(4, 8))
    _, mean, rstd = kernels.layernorm_fwd(x, gamma, beta)
    gx, ggamma, gbeta = kernels.layernorm_bwd(x, gamma, mean, rstd, gy)

    def loss():
        y, _, _ = kernels.layernorm_fwd(x, gamma, beta)
        return float((y * gy).sum())

    h = 1e-6
    for arr, grad in ((x, gx), (gamma, ggamma), (beta, gbeta)):
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss()
            flat[i] = orig - h
            dn = loss()
            flat[i] = orig
            assert abs((up - dn) / (2 * h) - grad.reshape(-1)[i]) < 1e-6


def test_gelu_shape_and_gradient():
    g = np.random.default_rng(6)
    x = g.normal(size=(3, 7))
    y, ctx = kernels.gelu_fwd(x)
    assert y.shape == x.shape
    gy = g.normal(size=(3, 7))
    gx = kernels.gelu_bwd(x, ctx, gy)
    h = 1e-6
    fd = (kernels.gelu_fwd(x + h)[0] - kernels.gelu_fwd(x - h)[0]) / (2 * h) * gy
    assert np.max(np.abs(fd - gx)) < 1e-7


def test_softmax_rows():
    g = np.random.default_rng(7)
    x = g.normal(size=(5, 9)) * 4
    y = kernels.softmax_fwd(x)
    assert np.max(np.abs(y.sum(axis=1) - 1)) < 1e-12
    assert np.all(y > 0)
    # invariant under row-wise shift
    y2 = kernels.softmax_fwd(x + 100.0)
    assert np.max(np.abs(y - y2)) < 1e-12


def test_softmax_bwd_finite_difference():
    g = np.random.default_rng(8)
    x = g.normal(size=(3, 5))
    gy = g.normal(size=(3, 5))
    y = kernels.softmax_fwd(x)
    gx = kernels.softmax_bwd(y, gy)
    h = 1e-6
    for i in range(x.size):
        flat = x.reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        up = float((kernels.softmax_fwd(x) * gy).sum())
        flat[i] = orig - h
        dn = float((kernels.softmax_fwd(x) * gy).sum())
        flat[i] = orig
        assert abs((up - dn) / (2 * h) - gx.reshape(-1)[i]) < 1e-7


def test_adamw_update_matches_numpy_reference():
    g = np.random.default_rng(9)
    p = g.normal(size=100)
    grad = g.normal(size=100)
    m = np.zeros(100)
    v = np.zeros(100)
    p_ref, m_ref, v_ref = p.copy(), m.copy(), v.copy()

    kernels.adamw_update(p, grad, m, v, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8, wd=0.1, step=1)

    b1, b2 = 0.9, 0.999
    m_ref = b1 * m_ref + (1 - b1) * grad
    v_ref = b2 * v_ref + (1 - b2) * grad * grad
    mh = m_ref / (1 - b1)
    vh = v_ref / (1 - b2)
    p_ref = p_ref - 1e-2 * mh / (np.sqrt(vh) + 1e-8)
    p_ref = p_ref - 1e-2 * 0.1 * p_ref
    assert np.max(np.abs(p - p_ref)) < 1e-14
    assert np.max(np.abs(m - m_ref)) < 1e-14
    assert np.max(np.abs(v - v_ref)) < 1e-14


def test_backend_flag_resolved():
    assert kernels.BACKEND in ("auto", "numba", "numpy")
    if kernels.BACKEND == "auto":
        assert kernels.HAVE_NUMBA
    assert set(kernels._AUTO) == {"conv", "layernorm", "gelu_fwd", "gelu_bwd", "softmax", "adamw"}
