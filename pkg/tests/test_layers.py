import numpy as np
import pytest
from hypothesis import given, strategies as st

from prognoscope.errors import ConfigError, ShapeError
from prognoscope.nn import (
    BatchNorm, Concat, Conv2d, Conv3d, Dense, Dropout, Flatten,
    GlobalAveragePool, LSTM, MaxPool2d, MaxPool3d, ReLU, Sigmoid, Tensor,
)


def t(arr, dtype=np.float64):
    return Tensor(np.asarray(arr, dtype=dtype))


# ---------------------------------------------------------------------------
# convolution

def test_conv2d_all_ones_padding_arithmetic():
    conv = Conv2d(1, 1, dtype=np.float64)
    conv.set_param("weight", np.ones((1, 1, 3, 3)))
    y = conv.forward(t(np.ones((1, 1, 5, 5)))).data[0, 0]
    assert y[2, 2] == pytest.approx(9.0)
    for corner in [(0, 0), (0, 4), (4, 0), (4, 4)]:
        assert y[corner] == pytest.approx(4.0)
    assert y[0, 2] == pytest.approx(6.0)   # edge, not corner


def test_conv2d_delta_kernel_is_identity(rng):
    conv = Conv2d(1, 1, dtype=np.float64)
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    conv.set_param("weight", w)
    x = rng.random((2, 1, 6, 7))
    assert np.allclose(conv.forward(t(x)).data, x)


def _conv3d_loop_oracle(x, w, b):
    n, ci, tt, hh, ww = x.shape
    co = w.shape[0]
    xp = np.zeros((n, ci, tt + 2, hh + 2, ww + 2))
    xp[:, :, 1:-1, 1:-1, 1:-1] = x
    y = np.zeros((n, co, tt, hh, ww))
    for ni in range(n):
        for o in range(co):
            for c in range(ci):
                for dt in range(3):
                    for dh in range(3):
                        for dw in range(3):
                            y[ni, o] += (w[o, c, dt, dh, dw]
                                         * xp[ni, c, dt:dt + tt, dh:dh + hh, dw:dw + ww])
            y[ni, o] += b[o]
    return y


def test_conv3d_matches_six_loop_oracle(rng):
    conv = Conv3d(1, 2, rng=rng, dtype=np.float64)
    x = rng.random((1, 1, 4, 4, 4))
    got = conv.forward(t(x)).data
    want = _conv3d_loop_oracle(x, conv.params["weight"].data, conv.params["bias"].data)
    assert np.allclose(got, want, atol=1e-6)


def test_conv3d_multichannel_matches_oracle(rng):
    conv = Conv3d(3, 4, rng=rng, dtype=np.float64)
    x = rng.standard_normal((2, 3, 5, 4, 6))
    got = conv.forward(t(x)).data
    want = _conv3d_loop_oracle(x, conv.params["weight"].data, conv.params["bias"].data)
    assert np.allclose(got, want, atol=1e-6)


def test_conv_channel_mismatch_rejected(rng):
    conv = Conv3d(2, 4, rng=rng)
    with pytest.raises(ShapeError):
        conv.forward(t(np.ones((1, 3, 4, 4, 4)), np.float32))


def test_conv_shape_preserved(rng):
    conv = Conv2d(1, 4, rng=rng)
    y = conv.forward(Tensor(rng.random((2, 1, 9, 13)).astype(np.float32)))
    assert y.shape == (2, 4, 9, 13)


@given(h=st.integers(1, 12), w=st.integers(1, 12))
def test_same_padding_preserves_dims_for_any_size(h, w):
    conv = Conv2d(1, 2, rng=np.random.default_rng(0))
    x = Tensor(np.random.default_rng(1).random((1, 1, h, w)).astype(np.float32))
    assert conv.forward(x).shape == (1, 2, h, w)


# ---------------------------------------------------------------------------
# max pooling

def test_pool_table_dims():
    pool = MaxPool3d()
    # the canonical first-block reduction: 60x109x150 -> 20x36x50
    assert pool.output_shape((1, 4, 60, 109, 150)) == (1, 4, 20, 36, 50)


def test_pool_constant_input(rng):
    pool = MaxPool3d()
    y = pool.forward(t(np.full((1, 2, 6, 6, 6), 3.25)))
    assert y.shape == (1, 2, 2, 2, 2)
    assert np.allclose(y.data, 3.25)


def test_pool_linear_index_matches_block_scan():
    x = np.arange(1 * 1 * 9 * 7 * 8, dtype=np.float64).reshape(1, 1, 9, 7, 8)
    pool = MaxPool3d()
    got = pool.forward(t(x)).data
    for ot in range(3):
        for oh in range(2):
            for ow in range(2):
                block = x[0, 0, ot * 3:ot * 3 + 3, oh * 3:oh * 3 + 3, ow * 3:ow * 3 + 3]
                assert got[0, 0, ot, oh, ow] == block.max()


def test_pool_small_axis_rejected():
    with pytest.raises(ShapeError):
        MaxPool2d().output_shape((1, 1, 2, 9))


@given(n=st.integers(3, 40))
def test_pool_floor_rule(n):
    assert MaxPool2d().output_shape((1, 1, n, n))[2] == n // 3


def test_pool2d_backward_routes_to_argmax(rng):
    pool = MaxPool2d()
    x = rng.standard_normal((1, 1, 3, 3))
    y = pool.forward(t(x))
    g = pool.backward(t(np.ones((1, 1, 1, 1)))).data
    am = np.unravel_index(np.argmax(x[0, 0]), (3, 3))
    assert g[0, 0][am] == 1.0
    assert g.sum() == 1.0


# ---------------------------------------------------------------------------
# batch norm

def test_batchnorm_zero_variance_gives_beta():
    bn = BatchNorm(1, dtype=np.float64)
    bn.set_param("beta", [0.7])
    x = np.full((4, 1, 5), 3.0)
    y = bn.forward(t(x), mode="train").data
    assert np.allclose(y, 0.7, atol=1e-3)


def test_batchnorm_pm_one_formula():
    bn = BatchNorm(1, dtype=np.float64)
    x = np.array([[-1.0], [1.0]]).reshape(2, 1, 1)
    y = bn.forward(t(x), mode="train").data
    want = np.array([-1.0, 1.0]) / np.sqrt(1.0 + bn.eps)
    assert np.allclose(y.reshape(-1), want, atol=1e-12)


def test_batchnorm_param_accounting():
    bn = BatchNorm(4)
    assert bn.param_count() == 16            # gamma, beta, moving mean, moving var
    assert sorted(bn.params) == ["beta", "gamma", "moving_mean", "moving_var"]
    assert sorted(bn.trainable()) == ["beta", "gamma"]


def test_batchnorm_train_normalizes(rng):
    bn = BatchNorm(3, dtype=np.float64)
    x = rng.standard_normal((8, 3, 11)) * 4.0 + 2.0
    y = bn.forward(t(x), mode="train").data
    mean = y.mean(axis=(0, 2))
    var = y.var(axis=(0, 2))
    assert np.all(np.abs(mean) < 1e-5)
    assert np.all(np.abs(var - 1.0) < 1e-3)


def test_batchnorm_infer_before_train_rejected(rng):
    bn = BatchNorm(2)
    with pytest.raises(ConfigError):
        bn.forward(Tensor(rng.random((2, 2, 3)).astype(np.float32)), mode="infer")


def test_batchnorm_infer_uses_moving_stats(rng):
    bn = BatchNorm(2, dtype=np.float64)
    for _ in range(200):
        bn.forward(t(rng.standard_normal((16, 2, 7)) * 3.0 + 1.0), mode="train")
    y = bn.forward(t(rng.standard_normal((16, 2, 7)) * 3.0 + 1.0), mode="infer").data
    assert abs(y.mean()) < 0.2


# ---------------------------------------------------------------------------
# LSTM

def test_lstm_zero_params_zero_output(rng):
    lstm = LSTM(5, 3, return_sequences=True, dtype=np.float64)
    lstm.set_param("bias", np.zeros(12))
    y = lstm.forward(t(rng.standard_normal((2, 7, 5)))).data
    assert np.allclose(y, 0.0)


def test_lstm_parameter_counts():
    assert LSTM(16, 8).param_count() == 800
    assert LSTM(8, 4).param_count() == 208


def test_lstm_single_step_gate_oracle(rng):
    lstm = LSTM(3, 2, return_sequences=False, rng=rng, dtype=np.float64)
    x = rng.standard_normal((1, 1, 3))
    got = lstm.forward(t(x)).data[0]
    wx = lstm.params["w_x"].data
    b = lstm.params["bias"].data
    z = x[0, 0] @ wx + b     # h0 = 0, so the recurrent term vanishes
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    i, f, o, g = sig(z[0:2]), sig(z[2:4]), sig(z[4:6]), np.tanh(z[6:8])
    c = i * g
    want = o * np.tanh(c)
    assert np.allclose(got, want, atol=1e-6)


def test_lstm_sequence_and_last_shapes(rng):
    seq = LSTM(4, 3, return_sequences=True, rng=rng)
    last = LSTM(4, 3, return_sequences=False, rng=rng)
    x = Tensor(rng.random((2, 6, 4)).astype(np.float32))
    assert seq.forward(x).shape == (2, 6, 3)
    assert last.forward(x).shape == (2, 3)


def test_lstm_empty_sequence_rejected(rng):
    lstm = LSTM(4, 3, rng=rng)
    with pytest.raises(ShapeError):
        lstm.output_shape((2, 0, 4))


def test_lstm_forget_bias_initialized_to_one(rng):
    lstm = LSTM(4, 3, rng=rng)
    b = lstm.params["bias"].data
    assert np.allclose(b[3:6], 1.0)
    assert np.allclose(b[:3], 0.0) and np.allclose(b[6:], 0.0)


# ---------------------------------------------------------------------------
# dense / gap / activations / dropout / flatten / concat

def test_dense_parameter_counts():
    assert Dense(640, 1).param_count() == 641
    assert Dense(16, 1).param_count() == 17


def test_dense_affine(rng):
    d = Dense(3, 2, dtype=np.float64)
    d.set_param("weight", [[1, 0], [0, 1], [1, 1]])
    d.set_param("bias", [0.5, -0.5])
    y = d.forward(t([[1.0, 2.0, 3.0]])).data
    assert np.allclose(y, [[4.5, 4.5]])


def test_gap_constant_per_channel():
    gap = GlobalAveragePool()
    x = np.stack([np.full((4, 5), 2.0), np.full((4, 5), -1.0)])[np.newaxis]
    y = gap.forward(t(x)).data
    assert np.allclose(y, [[2.0, -1.0]])


def test_dropout_rate_zero_identity(rng):
    drop = Dropout(0.0)
    x = rng.standard_normal((3, 4))
    for mode in ("train", "infer"):
        y = drop.forward(t(x), mode=mode, rng=rng).data
        assert np.array_equal(y, x)


def test_dropout_infer_identity_and_train_scaling(rng):
    drop = Dropout(0.5)
    x = np.ones((2000,))
    assert np.array_equal(drop.forward(t(x), mode="infer").data, x)
    y = drop.forward(t(x), mode="train", rng=np.random.default_rng(7)).data
    kept = y > 0
    assert np.allclose(y[kept], 2.0)          # inverted scaling
    assert 0.35 < kept.mean() < 0.65


def test_dropout_train_needs_rng():
    with pytest.raises(ConfigError):
        Dropout(0.5).forward(t(np.ones(4)), mode="train")


def test_relu_and_sigmoid_ranges(rng):
    x = rng.standard_normal((5, 5))
    r = ReLU().forward(t(x)).data
    assert (r >= 0).all() and np.allclose(r, np.maximum(x, 0))
    s = Sigmoid().forward(t(x)).data
    assert ((s > 0) & (s < 1)).all()


def test_flatten_round_trip(rng):
    f = Flatten()
    x = rng.random((2, 3, 4, 5))
    y = f.forward(t(x))
    assert y.shape == (2, 60)
    back = f.backward(y).data
    assert np.array_equal(back, x)


def test_concat_joins_and_splits(rng):
    c = Concat()
    a = rng.random((3, 4))
    b = rng.random((3, 6))
    y = c.forward([t(a), t(b)])
    assert y.shape == (3, 10)
    ga, gb = c.backward(y)
    assert np.array_equal(ga.data, a) and np.array_equal(gb.data, b)


# ---------------------------------------------------------------------------
# contracts

def test_backward_before_forward_rejected(rng):
    for layer in (Conv2d(1, 1, rng=rng), Dense(3, 2, rng=rng), BatchNorm(2),
                  MaxPool2d(), ReLU(), Sigmoid(), Flatten(), Dropout(0.5),
                  LSTM(3, 2, rng=rng), GlobalAveragePool()):
        with pytest.raises(ConfigError):
            layer.backward(t(np.ones((2, 2))))


@pytest.mark.parametrize("make,shape", [
    (lambda r: Conv3d(2, 3, rng=r, dtype=np.float64), (2, 2, 4, 5, 6)),
    (lambda r: Conv2d(2, 3, rng=r, dtype=np.float64), (2, 2, 5, 6)),
    (lambda r: Dense(5, 3, rng=r, dtype=np.float64), (4, 5)),
    (lambda r: BatchNorm(3, dtype=np.float64), (4, 3, 5)),
    (lambda r: LSTM(4, 3, rng=r, dtype=np.float64), (2, 6, 4)),
    (lambda r: MaxPool3d(), (1, 2, 6, 6, 6)),
    (lambda r: ReLU(), (3, 4)),
    (lambda r: Sigmoid(), (3, 4)),
    (lambda r: GlobalAveragePool(), (2, 3, 4, 5)),
    (lambda r: Flatten(), (2, 3, 4)),
])
def test_backward_shapes_mirror_forward(make, shape, rng):
    layer = make(rng)
    x = rng.standard_normal(shape)
    y = layer.forward(t(x), mode="train", rng=rng)
    g = layer.backward(Tensor(np.ones_like(y.data)))
    assert g.shape == x.shape
    for name in layer.trainable():
        assert layer.grads[name].shape == layer.params[name].shape
