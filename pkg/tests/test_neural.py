import numpy as np
import pytest

from fogdetect.errors import ShapeError
from fogdetect.neural import (AdamState, Conv1D, Dense, Dropout, EncoderBlock, GlobalAveragePool1D,
                              LayerNorm, MaxPool1D, MultiHeadSelfAttention, ReLU, Sequential, Sigmoid,
                              TimeDistributed, TrainConfig, adam_step, bce_loss, fit, grad_check,
                              predict_proba)
from fogdetect.neural.gradcheck import kink_margin
from fogdetect.neural.losses import bce_sigmoid_logit_grad


def _perturb(layer, rng, scale=0.1):
    for _, lay, key in layer.named_parameters():
        lay.params[key] = lay.params[key] + scale * rng.standard_normal(lay.params[key].shape)
    return layer


def _smooth_input(layer, shape, rng):
    x = rng.standard_normal(shape)
    while kink_margin(layer, x) < 1e-3:
        x = rng.standard_normal(shape)
    return x


# ------------------------------------------------------------ conv

def test_conv_direct_cross_correlation():
    conv = Conv1D(1, 1, 3)
    conv.params["kernel"][:] = np.array([1.0, 0.0, -1.0]).reshape(1, 3, 1)
    out = conv.forward(np.arange(1.0, 6.0).reshape(1, 5, 1))
    assert out.reshape(-1).tolist() == [-2.0, -2.0, -2.0]


def test_conv_kernel_size_one_is_pointwise_affine():
    rng = np.random.default_rng(0)
    conv = _perturb(Conv1D(3, 2, 1, rng=rng), rng)
    x = rng.standard_normal((2, 6, 3))
    expect = x @ conv.params["kernel"][:, 0, :].T + conv.params["bias"]
    np.testing.assert_allclose(conv.forward(x), expect, atol=1e-12)


@pytest.mark.parametrize("c_in,c_out", [(3, 5), (6, 2)])
def test_conv_paths_match_loop_oracle(c_in, c_out):
    rng = np.random.default_rng(1)
    conv = _perturb(Conv1D(c_in, c_out, 4, rng=rng), rng)
    x = rng.standard_normal((2, 11, c_in))
    k = conv.params["kernel"]
    ref = np.zeros((2, 8, c_out))
    for n in range(2):
        for t in range(8):
            for o in range(c_out):
                ref[n, t, o] = np.sum(x[n, t:t + 4, :] * k[o]) + conv.params["bias"][o]
    np.testing.assert_allclose(conv.forward(x), ref, atol=1e-12)


@pytest.mark.parametrize("c_in,c_out,k", [(3, 4, 3), (6, 2, 4), (2, 2, 1)])
@pytest.mark.parametrize("seed", range(3))
def test_conv_gradients(c_in, c_out, k, seed):
    rng = np.random.default_rng(seed)
    conv = _perturb(Conv1D(c_in, c_out, k, rng=rng), rng)
    assert grad_check(conv, rng.standard_normal((2, 9, c_in)), tolerance=1e-6).passed


def test_conv_without_input_gradient():
    rng = np.random.default_rng(2)
    conv = Conv1D(3, 4, 2, rng=rng, input_grad=False)
    conv.forward(rng.standard_normal((1, 5, 3)))
    assert conv.backward(np.ones((1, 4, 4))) is None
    assert conv.grads["kernel"].shape == (4, 2, 3)


def test_conv_shape_errors():
    with pytest.raises(ShapeError):
        Conv1D(1, 1, 4).forward(np.zeros((1, 3, 1)))
    with pytest.raises(ShapeError):
        Conv1D(2, 1, 2).forward(np.zeros((1, 5, 3)))


# ------------------------------------------------------------ pooling

def test_maxpool_drops_trailing_sample():
    assert MaxPool1D().forward(np.array([1.0, 3, 2, 2, 5]).reshape(1, 5, 1)).reshape(-1).tolist() == [3, 2]


def test_maxpool_tie_routes_gradient_to_first():
    pool = MaxPool1D()
    pool.forward(np.array([2.0, 2.0]).reshape(1, 2, 1))
    assert pool.backward(np.ones((1, 1, 1))).reshape(-1).tolist() == [1.0, 0.0]


def test_maxpool_gradient_and_length_error():
    rng = np.random.default_rng(3)
    pool = MaxPool1D()
    assert grad_check(pool, _smooth_input(pool, (2, 9, 3), rng), tolerance=1e-6).passed
    with pytest.raises(ShapeError):
        pool.forward(np.zeros((1, 1, 2)))


def test_gap_values_and_gradient():
    gap = GlobalAveragePool1D(1)
    assert gap.forward(np.array([0.0, 2.0]).reshape(1, 2, 1)).item() == 1.0
    assert np.all(gap.forward(np.full((1, 7, 2), 3.5)) == 3.5)
    gap.forward(np.zeros((1, 4, 2)))
    np.testing.assert_allclose(gap.backward(np.ones((1, 2))), np.full((1, 4, 2), 0.25))
    assert grad_check(gap, np.random.default_rng(4).standard_normal((2, 5, 3)), tolerance=1e-8).passed


# ------------------------------------------------------------ dense and activations

def test_dense_identity_and_bias():
    d = Dense(3, 3)
    d.params["W"] = np.eye(3)
    x = np.array([[1.0, -2.0, 0.5]])
    np.testing.assert_array_equal(d.forward(x), x)
    d.params["b"] = np.array([0.1, 0.2, 0.3])
    np.testing.assert_array_equal(d.forward(np.zeros((1, 3))), [[0.1, 0.2, 0.3]])


@pytest.mark.parametrize("seed", range(3))
def test_dense_gradient(seed):
    rng = np.random.default_rng(seed)
    d = _perturb(Dense(5, 4, rng=rng), rng)
    assert grad_check(d, rng.standard_normal((3, 5)), tolerance=1e-6).passed


def test_relu_and_sigmoid_values():
    assert ReLU().forward(np.array([-1.0, 0.0, 2.0])).tolist() == [0.0, 0.0, 2.0]
    s = Sigmoid()
    assert s.forward(np.array([0.0])).item() == 0.5
    with np.errstate(over="raise", invalid="raise"):
        out = s.forward(np.array([-800.0, 800.0]))
    assert out.tolist() == [0.0, 1.0]


def test_activation_only_fragments_pass_input_check():
    rng = np.random.default_rng(5)
    for layer in (ReLU(), Sigmoid()):
        x = _smooth_input(layer, (4, 6), rng)
        rep = grad_check(layer, x, tolerance=1e-6)
        assert set(rep.per_array) == {"input"} and rep.passed


# ------------------------------------------------------------ layer norm and attention

def test_layer_norm_closed_form():
    out = LayerNorm(3).forward(np.array([[1.0, 2.0, 3.0]]))
    np.testing.assert_allclose(out, [[-1.2247, 0.0, 1.2247]], atol=1e-3)
    ln = LayerNorm(4)
    ln.params["beta"] = np.array([0.5, -1, 2, 0])
    np.testing.assert_allclose(ln.forward(np.full((1, 4), 7.0)), [ln.params["beta"]], atol=1e-3)


@pytest.mark.parametrize("seed", range(3))
def test_layer_norm_gradient(seed):
    rng = np.random.default_rng(seed)
    ln = _perturb(LayerNorm(6), rng)
    assert grad_check(ln, rng.standard_normal((2, 3, 6))).passed


def test_attention_single_step_is_projection_of_values():
    rng = np.random.default_rng(6)
    mha = _perturb(MultiHeadSelfAttention(6, heads=2, head_dim=3, rng=rng), rng)
    x = rng.standard_normal((2, 1, 6))
    assert np.all(mha.attention_weights(x) == 1.0)
    v = x @ mha.params["Wv"] + mha.params["bv"]
    np.testing.assert_allclose(mha.forward(x), v @ mha.params["Wo"] + mha.params["bo"], atol=1e-12)


def test_attention_identical_steps_give_identical_rows():
    rng = np.random.default_rng(7)
    mha = MultiHeadSelfAttention(6, heads=3, head_dim=2, rng=rng)
    row = rng.standard_normal(6)
    out = mha.forward(np.tile(row, (1, 2, 1)))
    np.testing.assert_allclose(out[0, 0], out[0, 1], atol=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_attention_gradient(seed):
    rng = np.random.default_rng(seed)
    mha = _perturb(MultiHeadSelfAttention(6, heads=3, head_dim=2, rng=rng), rng)
    rep = grad_check(mha, rng.standard_normal((2, 4, 6)))
    assert {"Wq", "Wk", "Wv", "Wo"} <= {k.split(".")[-1] for k in rep.per_array}
    assert rep.passed


def test_attention_shape_error():
    with pytest.raises(ShapeError):
        MultiHeadSelfAttention(6, heads=2, head_dim=3).forward(np.zeros((1, 4, 5)))


def test_encoder_block_gradient():
    rng = np.random.default_rng(8)
    block = _perturb(EncoderBlock(6, heads=2, head_dim=3, ff_dim=4, dropout=0.25, rng=rng), rng)
    x = _smooth_input(block, (2, 3, 6), rng)
    assert grad_check(block, x).passed


def test_time_distributed_matches_per_step_application():
    rng = np.random.default_rng(9)
    inner = Sequential([Conv1D(3, 4, 2, rng=rng), ReLU(), GlobalAveragePool1D(1)])
    td = TimeDistributed(inner)
    x = rng.standard_normal((2, 3, 8, 3))
    out = td.forward(x)
    for t in range(3):
        np.testing.assert_allclose(out[:, t], inner.forward(x[:, t]), atol=1e-14)
    assert grad_check(td, _smooth_input(td, (2, 3, 8, 3), rng)).passed


# ------------------------------------------------------------ dropout

def test_dropout_identities():
    x = np.random.default_rng(10).standard_normal((4, 5))
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(Dropout(0.0).forward(x, training=True, rng=rng), x)
    np.testing.assert_array_equal(Dropout(0.6).forward(x, training=False), x)


def test_dropout_expectation():
    x = np.linspace(0.5, 2.0, 8)
    d = Dropout(0.4)
    rng = np.random.default_rng(11)
    mean = np.mean([d.forward(x, training=True, rng=rng) for _ in range(10_000)], axis=0)
    np.testing.assert_allclose(mean, x, rtol=0.02)


def test_dropout_backward_uses_the_same_mask():
    d = Dropout(0.5)
    y = d.forward(np.ones((3, 10)), training=True, rng=np.random.default_rng(12))
    np.testing.assert_array_equal(d.backward(np.ones((3, 10))), y)


def test_dropout_bad_rate():
    with pytest.raises(ValueError):
        Dropout(1.0)


# ------------------------------------------------------------ loss

def test_bce_values():
    assert bce_loss(np.array([1.0]), np.array([1.0]))[0] == pytest.approx(0.0, abs=1e-6)
    assert bce_loss(np.array([0.5, 0.5]), np.array([0.0, 1.0]))[0] == pytest.approx(np.log(2))
    assert np.isfinite(bce_loss(np.array([0.0]), np.array([1.0]))[0])


def test_bce_gradient_vs_finite_differences():
    rng = np.random.default_rng(13)
    p = rng.uniform(0.05, 0.95, 10)
    y = (rng.random(10) < 0.5).astype(float)
    _, g = bce_loss(p, y)
    h = 1e-6
    num = np.array([(bce_loss(p + h * e, y)[0] - bce_loss(p - h * e, y)[0]) / (2 * h)
                    for e in np.eye(10)])
    np.testing.assert_allclose(g, num, rtol=1e-6)


def test_fused_logit_gradient_equals_chain_rule():
    rng = np.random.default_rng(14)
    z = rng.standard_normal(8)
    p = 1 / (1 + np.exp(-z))
    y = (rng.random(8) < 0.5).astype(float)
    _, dp = bce_loss(p, y)
    np.testing.assert_allclose(bce_sigmoid_logit_grad(p, y), dp * p * (1 - p), rtol=1e-12)


# ------------------------------------------------------------ grad_check negative control

def test_corrupted_gradient_fails_the_check():
    rng = np.random.default_rng(15)
    d = _perturb(Dense(4, 3, rng=rng), rng)
    assert not grad_check(d, rng.standard_normal((2, 4)), backward_scale=2.0).passed


def test_miniature_transformer_gradient_over_seeds():
    from fogdetect.fogformer import build_fog_transformer

    rng = np.random.default_rng(16)
    for _ in range(3):
        while True:
            m = _perturb(build_fog_transformer(1, seed=int(rng.integers(1 << 30)), conv_filters=[6, 5, 4],
                                               heads=2, head_dim=3, ff_dim=3, mlp_units=[5, 3],
                                               n_blocks=1, n_bins=32), rng)
            x = rng.standard_normal((2, 2, 32, 3))
            if kink_margin(m, x) > 1e-3:
                break
        assert grad_check(m, x).passed


# ------------------------------------------------------------ Adam

def test_adam_first_step_magnitude():
    p = {"w": np.zeros(4)}
    adam_step(p, {"w": np.ones(4)}, AdamState(), lr=0.01)
    np.testing.assert_allclose(p["w"], -0.01 / (1 + 1e-7), rtol=1e-12)


def test_adam_zero_gradient_leaves_params():
    p = {"w": np.array([1.0, -2.0])}
    st = AdamState()
    for _ in range(20):
        adam_step(p, {"w": np.zeros(2)}, st, lr=0.1)
    assert p["w"].tolist() == [1.0, -2.0]


def test_adam_minimises_quadratic():
    p = {"w": np.array([1.0])}
    st = AdamState()
    for _ in range(100):
        adam_step(p, {"w": 2 * p["w"]}, st, lr=0.1)
    assert abs(p["w"][0]) < 0.1


# ------------------------------------------------------------ training loop

def _toy(n=400, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    y = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(int)
    return x, y


def _toy_net(seed=0):
    rng = np.random.default_rng(seed)
    return Sequential([Dense(2, 8, rng=rng, name="d1"), ReLU(), Dense(8, 1, rng=rng, name="d2"), Sigmoid()])


def test_fit_separable_toy_problem():
    x, y = _toy()
    cfg = TrainConfig(learning_rate=0.05, batch_size=32, max_epochs=200, patience=20, dtype="float64")
    res = fit(_toy_net(), x, y, cfg)
    acc = np.mean((predict_proba(res.model, x[res.train_index]) >= 0.5) == y[res.train_index])
    assert acc >= 0.99


def test_patience_stops_after_seven_non_improving_epochs():
    x, y = _toy(100)
    cfg = TrainConfig(batch_size=50, max_epochs=50, patience=7)
    res = fit(_toy_net(), x, y, cfg, monitor=lambda epoch, loss: 1.0)
    assert res.epochs_run == 8 and res.best_epoch == 1


def test_best_weights_are_restored():
    x, y = _toy(100)
    losses = iter([0.9, 0.5, 0.7, 0.8, 0.9, 1.0])
    seen = {}

    def monitor(epoch, loss):
        from fogdetect.neural.training import parameters
        if epoch == 2:
            seen.update({k: v.copy() for k, v in parameters(net).items()})
        return next(losses)

    net = _toy_net()
    res = fit(net, x, y, TrainConfig(batch_size=50, max_epochs=6, patience=10, dtype="float64"),
              monitor=monitor)
    assert res.best_epoch == 2
    for name, layer, key in net.named_parameters():
        np.testing.assert_array_equal(layer.params[key], seen[name])


def test_fit_is_bitwise_deterministic():
    x, y = _toy(300)
    cfg = TrainConfig(learning_rate=0.01, batch_size=64, max_epochs=5, seed=3)
    a = fit(_toy_net(1), x, y, cfg).model
    b = fit(_toy_net(1), x, y, cfg).model
    for (_, la, ka), (_, lb, kb) in zip(a.named_parameters(), b.named_parameters()):
        assert la.params[ka].tobytes() == lb.params[kb].tobytes()


def test_split_is_stratified_and_disjoint():
    x, y = _toy(500)
    res = fit(_toy_net(), x, y, TrainConfig(max_epochs=1))
    assert not set(res.train_index) & set(res.val_index)
    assert len(res.train_index) + len(res.val_index) == 500
    for cls in (0, 1):
        frac = np.mean(y[res.val_index] == cls) / np.mean(y == cls)
        assert frac == pytest.approx(1.0, abs=0.05)


def test_single_class_training_warns_but_runs():
    x, _ = _toy(60)
    with pytest.warns(RuntimeWarning):
        res = fit(_toy_net(), x, np.zeros(60, dtype=int), TrainConfig(max_epochs=2))
    assert np.all(np.isfinite([h["train_loss"] for h in res.history]))


def test_float32_training_stays_float32():
    x, y = _toy(100)
    res = fit(_toy_net(), x, y, TrainConfig(max_epochs=1, dtype="float32"))
    assert all(layer.params[k].dtype == np.float32 for _, layer, k in res.model.named_parameters())
