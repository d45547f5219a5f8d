import math

import numpy as np
import pytest

from ner_forge import autodiff as ad
from ner_forge.errors import GradCheckError, ShapeError


class Bag:
    """Named float64 parameters for gradient checks."""

    def __init__(self, seed=0, **shapes):
        rng = np.random.default_rng(seed)
        self.params = {name: ad.Parameter(name, rng.normal(size=shape)) for name, shape in shapes.items()}

    def __getitem__(self, name):
        return self.params[name]

    def parameters(self):
        return list(self.params.values())


def nll_head(y, seed=3):
    """Scalar loss over any [..., K] output: log-softmax then NLL against fixed random targets."""
    rng = np.random.default_rng(seed)
    y2 = ad.reshape(y, (-1, y.shape[-1]))
    gold = rng.integers(0, y.shape[-1], size=y2.shape[0])
    return ad.masked_nll(ad.log_softmax(y2), gold, np.ones_like(gold, dtype=bool))


def lstm_weights(bag, prefix=""):
    return ad.LSTMWeights(bag[prefix + "W"], bag[prefix + "U"], bag[prefix + "b"])


def assert_grad_check_passes(build, loss_fn):
    report = ad.grad_check(build, loss_fn, tolerance=1e-4)
    report.raise_for_failure()
    assert report.passed
    return report


def test_affine_identity():
    y = ad.affine(ad.constant(np.eye(2)), ad.constant(np.eye(2)), ad.constant(np.zeros(2)))
    np.testing.assert_array_equal(y.data, np.eye(2))


def test_affine_zero_weight_gives_bias_rows():
    c = np.array([1.5, -2.0, 0.25])
    y = ad.affine(ad.constant(np.ones((4, 2))), ad.constant(np.zeros((2, 3))), ad.constant(c))
    np.testing.assert_array_equal(y.data, np.tile(c, (4, 1)))


def test_affine_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.affine(ad.constant(np.ones((2, 3))), ad.constant(np.ones((4, 2))), ad.constant(np.zeros(2)))


def test_affine_gradients():
    assert_grad_check_passes(
        lambda: Bag(x=(3, 4), W=(4, 5), b=(5,)),
        lambda m: nll_head(ad.affine(m["x"], m["W"], m["b"])),
    )


def test_conv_output_length():
    rng = np.random.default_rng(0)
    out = ad.conv1d_maxpool(
        ad.constant(rng.normal(size=(7, 25))), ad.constant(rng.normal(size=(3, 25, 25))), ad.constant(np.zeros(25))
    )
    assert out.shape == (25,)


def test_conv_zero_chars_zero_bias():
    rng = np.random.default_rng(0)
    out = ad.conv1d_maxpool(ad.constant(np.zeros((5, 4))), ad.constant(rng.normal(size=(3, 4, 6))), ad.constant(np.zeros(6)))
    np.testing.assert_array_equal(out.data, np.zeros(6))


def test_conv_too_short():
    with pytest.raises(ShapeError):
        ad.conv1d_maxpool(ad.constant(np.zeros((2, 4))), ad.constant(np.zeros((3, 4, 6))), ad.constant(np.zeros(6)))


def test_conv_lengths_ignore_padding_windows():
    rng = np.random.default_rng(1)
    filters, bias = ad.constant(rng.normal(size=(3, 2, 4))), ad.constant(rng.normal(size=4))
    word = rng.normal(size=(4, 2))
    padded = np.vstack([word, 100 * np.ones((3, 2))])
    short = ad.conv1d_maxpool(ad.constant(word), filters, bias)
    masked = ad.conv1d_maxpool(ad.constant(padded[None]), filters, bias, lengths=[4])
    np.testing.assert_allclose(masked.data[0], short.data)


def test_conv_gradients():
    assert_grad_check_passes(
        lambda: Bag(seed=4, chars=(5, 3), filters=(3, 3, 4), bias=(4,)),
        lambda m: nll_head(ad.reshape(ad.conv1d_maxpool(m["chars"], m["filters"], m["bias"]), (1, 4))),
    )


def test_conv_batched_gradients():
    lengths = np.array([[5, 3], [4, 6]])
    assert_grad_check_passes(
        lambda: Bag(seed=5, chars=(2, 2, 6, 3), filters=(3, 3, 4), bias=(4,)),
        lambda m: nll_head(ad.conv1d_maxpool(m["chars"], m["filters"], m["bias"], lengths)),
    )


def test_lstm_zero_everything():
    s, d = 4, 3
    weights = ad.LSTMWeights(
        ad.Parameter("W", np.zeros((d, 4 * s))), ad.Parameter("U", np.zeros((s, 4 * s))), ad.Parameter("b", np.zeros(4 * s))
    )
    zero = ad.constant(np.zeros(s))
    h, c = ad.lstm_step(ad.constant(np.ones(d)), zero, zero, weights)
    np.testing.assert_array_equal(h.data, np.zeros(s))
    np.testing.assert_array_equal(c.data, np.zeros(s))


def test_lstm_forget_bias_scales_cell():
    s, d = 3, 2
    b = np.zeros(4 * s)
    b[s:2 * s] = 1.0
    weights = ad.LSTMWeights(
        ad.Parameter("W", np.zeros((d, 4 * s))), ad.Parameter("U", np.zeros((s, 4 * s))), ad.Parameter("b", b)
    )
    c_prev = np.array([1.0, -2.0, 0.5])
    _, c = ad.lstm_step(ad.constant(np.ones(d)), ad.constant(np.ones(s)), ad.constant(c_prev), weights)
    np.testing.assert_allclose(c.data, c_prev / (1 + math.exp(-1)), rtol=1e-12)


def test_lstm_masked_rows_are_zero():
    bag = Bag(x=(2, 3), h=(2, 4), c=(2, 4), W=(3, 16), U=(4, 16), b=(16,))
    h, c = ad.lstm_step(bag["x"], bag["h"], bag["c"], lstm_weights(bag), mask=[True, False])
    assert not h.data[1].any() and not c.data[1].any()
    assert h.data[0].any()


def test_lstm_step_gradients():
    def loss(m):
        h, c = ad.lstm_step(m["x"], m["h"], m["c"], lstm_weights(m))
        return nll_head(ad.add(h, c))

    assert_grad_check_passes(lambda: Bag(seed=6, x=(2, 3), h=(2, 4), c=(2, 4), W=(3, 16), U=(4, 16), b=(16,)), loss)


def test_bilstm_single_step_same_weights():
    bag = Bag(x=(1, 3), W=(3, 8), U=(2, 8), b=(8,))
    hf, hb = ad.bilstm(bag["x"], lstm_weights(bag), lstm_weights(bag))
    assert hf.shape == hb.shape == (1, 2)
    np.testing.assert_array_equal(hf.data, hb.data)


def test_bilstm_reversal_symmetry():
    bag = Bag(seed=2, x=(5, 3), fW=(3, 8), fU=(2, 8), fb=(8,), bW=(3, 8), bU=(2, 8), bb=(8,))
    fwd, bwd = lstm_weights(bag, "f"), lstm_weights(bag, "b")
    _, hb = ad.bilstm(bag["x"], fwd, bwd)
    hf_rev, _ = ad.bilstm(ad.constant(bag["x"].data[::-1].copy()), bwd, fwd)
    np.testing.assert_allclose(hb.data, hf_rev.data[::-1], rtol=1e-12)


def test_bilstm_gradients():
    def loss(m):
        hf, hb = ad.bilstm(m["x"], lstm_weights(m, "f"), lstm_weights(m, "b"))
        return nll_head(ad.add(hf, hb))

    assert_grad_check_passes(
        lambda: Bag(seed=7, x=(3, 3), fW=(3, 8), fU=(2, 8), fb=(8,), bW=(3, 8), bU=(2, 8), bb=(8,)), loss
    )


def test_bilstm_masked_gradients():
    mask = np.array([[True, True, True], [True, True, False]])

    def loss(m):
        hf, hb = ad.bilstm(m["x"], lstm_weights(m, "f"), lstm_weights(m, "b"), mask)
        logp = ad.log_softmax(ad.add(hf, hb))
        return ad.masked_nll(logp, np.zeros(mask.shape, dtype=int), mask)

    assert_grad_check_passes(
        lambda: Bag(seed=8, x=(2, 3, 3), fW=(3, 8), fU=(2, 8), fb=(8,), bW=(3, 8), bU=(2, 8), bb=(8,)), loss
    )


def test_embedding_and_concat_gradients():
    ids = np.array([[0, 2, 2], [1, 0, 3]])

    def loss(m):
        emb = ad.embedding(m["table"], ids)
        return nll_head(ad.affine(ad.concat([emb, m["extra"]], axis=-1), m["W"], m["b"]))

    assert_grad_check_passes(lambda: Bag(seed=9, table=(4, 3), extra=(2, 3, 2), W=(5, 3), b=(3,)), loss)


def test_dropout_identity_cases():
    x = ad.constant(np.arange(6.0))
    assert ad.dropout(x, 0.5, training=False) is x
    assert ad.dropout(x, 0.0, training=True, rng=np.random.default_rng(0)) is x


def test_dropout_rate_out_of_range():
    with pytest.raises(ValueError):
        ad.dropout(ad.constant(np.ones(3)), 1.0, training=True, rng=np.random.default_rng(0))


def test_dropout_is_unbiased():
    rng = np.random.default_rng(0)
    x = ad.constant(np.ones(100))
    total = np.zeros(100)
    for _ in range(10_000):
        total += ad.dropout(x, 0.5, training=True, rng=rng).data
    mean = total / 10_000
    assert abs(mean.mean() - 1.0) < 0.02
    assert np.abs(mean - 1.0).max() < 0.06


def test_dropout_backward_uses_mask():
    x = ad.Parameter("x", np.ones(50))
    with ad.Tape() as tape:
        y = ad.dropout(x, 0.5, training=True, rng=np.random.default_rng(1))
        loss = ad.masked_nll(ad.log_softmax(ad.reshape(y, (1, 50))), [0], [True])
        tape.backward(loss)
    kept = y.data != 0
    assert not x.grad[~kept].any()


def test_log_softmax_examples():
    np.testing.assert_allclose(ad.log_softmax(ad.constant([0.0, 0.0])).data, [-math.log(2)] * 2, rtol=1e-15)
    z = np.random.default_rng(0).normal(size=(4, 7))
    out = ad.log_softmax(ad.constant(z)).data
    np.testing.assert_allclose(ad.log_softmax(ad.constant(z + 123.0)).data, out, atol=1e-12)
    assert (out <= 0).all()
    np.testing.assert_allclose(np.exp(out).sum(axis=-1), 1.0, atol=1e-12)


def test_log_softmax_large_logits_are_finite():
    out = ad.log_softmax(ad.constant([1000.0, 0.0])).data
    assert np.isfinite(out).all()


def test_masked_nll_examples():
    perfect = ad.constant([[0.0, -50.0], [-50.0, 0.0]])
    assert ad.masked_nll(perfect, [0, 1], [True, True]).item() == 0.0
    uniform = ad.log_softmax(ad.constant(np.zeros((3, 2))))
    assert ad.masked_nll(uniform, [0, 1, 0], [True, True, True]).item() == pytest.approx(math.log(2))


def test_masked_nll_ignores_masked_positions():
    rng = np.random.default_rng(0)
    logp = ad.log_softmax(ad.constant(rng.normal(size=(4, 3))))
    mask = [True, False, True, False]
    base = ad.masked_nll(logp, [0, 1, 2, 0], mask).item()
    changed = logp.data.copy()
    changed[1] = rng.normal(size=3)
    changed[3] = -np.inf
    assert ad.masked_nll(ad.constant(changed), [0, 1, 2, 0], mask).item() == base


def test_masked_nll_errors():
    logp = ad.constant(np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        ad.masked_nll(logp, [0, 1], [False, False])
    with pytest.raises(ShapeError):
        ad.masked_nll(logp, [0, 2], [True, True])


def test_tape_backward_once_and_scalar_only():
    p = ad.Parameter("p", np.ones((2, 2)))
    with ad.Tape() as tape:
        y = ad.affine(p, ad.constant(np.eye(2)), ad.constant(np.zeros(2)))
        with pytest.raises(ShapeError):
            tape.backward(y)
        loss = nll_head(y)
        tape.backward(loss)
        with pytest.raises(RuntimeError):
            tape.backward(loss)


def test_unused_parameter_gradient_is_zero():
    used, unused = ad.Parameter("used", np.ones((1, 2))), ad.Parameter("unused", np.ones(3))
    with ad.Tape() as tape:
        tape.backward(nll_head(used))
    assert used.gradient().any()
    np.testing.assert_array_equal(unused.gradient(), np.zeros(3))


def test_no_tape_records_nothing():
    p = ad.Parameter("p", np.ones((1, 2)))
    nll_head(p)
    assert p.grad is None
    assert ad.current_tape() is None


def scalar_param(value=0.0):
    return ad.Parameter("w", np.array([value]))


def test_adam_first_step():
    p = scalar_param()
    state = ad.AdamState.for_parameters([p])
    assert ad.adam_step([p], [np.array([1.0])], state, lr=0.001)
    assert state.t == 1
    assert p.data[0] == pytest.approx(-0.001, rel=1e-6)


def test_adam_zero_gradients_leave_parameters():
    p = scalar_param(0.7)
    state = ad.AdamState.for_parameters([p])
    for _ in range(20):
        ad.adam_step([p], [np.zeros(1)], state, lr=0.01)
    assert p.data[0] == 0.7


def test_adam_clips_to_global_norm():
    a, b = ad.Parameter("a", np.zeros(2)), ad.Parameter("b", np.zeros(1))
    grads = [np.array([60.0, 0.0]), np.array([80.0])]
    assert ad.global_norm(grads) == pytest.approx(100.0)
    state = ad.AdamState.for_parameters([a, b])
    ad.adam_step([a, b], grads, state, lr=0.001, clip=5.0)
    np.testing.assert_allclose(state.m["a"], [0.1 * 3.0, 0.0])
    np.testing.assert_allclose(state.m["b"], [0.1 * 4.0])


def test_adam_zero_lr_is_bit_identical():
    rng = np.random.default_rng(0)
    p = ad.Parameter("p", rng.normal(size=(3, 3)))
    before = p.data.copy()
    state = ad.AdamState.for_parameters([p])
    ad.adam_step([p], [rng.normal(size=(3, 3))], state, lr=0.0)
    np.testing.assert_array_equal(p.data, before)


def test_adam_skips_non_finite_gradient(caplog):
    p = scalar_param(1.0)
    state = ad.AdamState.for_parameters([p])
    assert not ad.adam_step([p], [np.array([np.nan])], state, lr=0.1)
    assert state.t == 0
    assert p.data[0] == 1.0
    assert "non-finite" in caplog.text


def test_grad_check_constant_loss():
    report = ad.grad_check(lambda: Bag(w=(2, 3)), lambda m: ad.constant(1.0))
    assert report.passed
    assert all(c.analytic == 0.0 and c.numeric == 0.0 for c in report.checks)


def test_grad_check_samples_per_tensor():
    report = ad.grad_check(lambda: Bag(big=(10, 10), small=(3,)), lambda m: nll_head(ad.reshape(m["big"], (1, 100))))
    names = [c.parameter for c in report.checks]
    assert names.count("big") == 20
    assert names.count("small") == 3


def test_grad_check_needs_float64():
    class Single:
        def parameters(self):
            return [ad.Parameter("w", np.ones(2, dtype=np.float32))]

    with pytest.raises(GradCheckError):
        ad.grad_check(Single, lambda m: ad.constant(0.0))


def test_grad_check_catches_corrupted_backward():
    def doubled(x):
        out = ad.Value(2.0 * x.data)

        def backward():
            # drops the factor 2
            x.accumulate(out.grad)

        ad._record([x], [out], backward)
        return out

    report = ad.grad_check(lambda: Bag(w=(1, 4)), lambda m: nll_head(doubled(m["w"])))
    assert not report.passed
    with pytest.raises(GradCheckError):
        report.raise_for_failure()
