import math

import numpy as np
import pytest

from topiclabel.errors import NumericError
from topiclabel.nn import autodiff as ad
from topiclabel.nn.layers import (
    AttentionParams,
    GruParams,
    attention,
    bigru_encode,
    decoder_step,
    dropout_apply,
    gru_cell,
    masked_cross_entropy,
    output_distribution,
)
from topiclabel.nn.optim import Parameter, adam_step, rmsprop_step


def make_gru(rng, in_dim, hidden, scale=0.3, zero=False):
    def mk(name, shape):
        data = np.zeros(shape) if zero else rng.normal(0, scale, shape)
        return Parameter(data, name)

    return GruParams(
        w_z=mk("w_z", (in_dim, hidden)), u_z=mk("u_z", (hidden, hidden)), b_z=mk("b_z", (hidden,)),
        w_r=mk("w_r", (in_dim, hidden)), u_r=mk("u_r", (hidden, hidden)), b_r=mk("b_r", (hidden,)),
        w_h=mk("w_h", (in_dim, hidden)), u_h=mk("u_h", (hidden, hidden)), b_h=mk("b_h", (hidden,)),
    )


def gru_oracle(x, h_prev, p):
    """Scalar-loop recomputation of one GRU step (single example)."""
    hidden = len(h_prev)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    out = np.zeros(hidden)
    for i in range(hidden):
        z = sig(x @ p.w_z.data[:, i] + h_prev @ p.u_z.data[:, i] + p.b_z.data[i])
        r_vec = np.array(
            [
                sig(x @ p.w_r.data[:, j] + h_prev @ p.u_r.data[:, j] + p.b_r.data[j])
                for j in range(hidden)
            ]
        )
        hc = math.tanh(
            x @ p.w_h.data[:, i] + (r_vec * h_prev) @ p.u_h.data[:, i] + p.b_h.data[i]
        )
        out[i] = (1 - z) * h_prev[i] + z * hc
    return out


class TestGruCell:
    def test_zero_params_halve_state(self):
        rng = np.random.default_rng(0)
        p = make_gru(rng, 3, 4, zero=True)
        h_prev = ad.Tensor(rng.normal(0, 0.5, (1, 4)))
        out = gru_cell(ad.Tensor(np.zeros((1, 3))), h_prev, p)
        np.testing.assert_allclose(out.data, 0.5 * h_prev.data, atol=1e-12)

    def test_zero_state_zero_params(self):
        p = make_gru(np.random.default_rng(0), 3, 4, zero=True)
        out = gru_cell(ad.Tensor(np.zeros((1, 3))), ad.Tensor(np.zeros((1, 4))), p)
        np.testing.assert_array_equal(out.data, np.zeros((1, 4)))

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(1)
        p = make_gru(rng, 3, 4)
        x = rng.normal(0, 1, 3)
        h_prev = rng.normal(0, 0.5, 4)
        out = gru_cell(ad.Tensor(x[None, :]), ad.Tensor(h_prev[None, :]), p)
        np.testing.assert_allclose(out.data[0], gru_oracle(x, h_prev, p), atol=1e-12)

    def test_zero_state_zero_biases_identity(self):
        # h_prev = 0, zero biases: out = sigmoid(x W_z) * tanh(x W_h)
        rng = np.random.default_rng(2)
        p = make_gru(rng, 3, 4)
        for b in (p.b_z, p.b_r, p.b_h):
            b.data[...] = 0.0
        x = rng.normal(0, 1, 3)
        out = gru_cell(ad.Tensor(x[None, :]), ad.Tensor(np.zeros((1, 4))), p)
        z = 1.0 / (1.0 + np.exp(-(x @ p.w_z.data)))
        expected = z * np.tanh(x @ p.w_h.data)
        np.testing.assert_allclose(out.data[0], expected, atol=1e-12)

    def test_dim_mismatch(self):
        p = make_gru(np.random.default_rng(0), 3, 4)
        with pytest.raises(ValueError):
            gru_cell(ad.Tensor(np.zeros((1, 5))), ad.Tensor(np.zeros((1, 4))), p)


class TestBigruEncode:
    def test_single_step(self):
        rng = np.random.default_rng(3)
        fwd, bwd = make_gru(rng, 3, 4), make_gru(rng, 3, 4)
        x = rng.normal(0, 1, (1, 3))
        h, hf, hb = bigru_encode([ad.Tensor(x)], fwd, bwd)
        assert h.shape == (1, 1, 8)
        np.testing.assert_allclose(h.data[0, 0, :4], gru_oracle(x[0], np.zeros(4), fwd))
        np.testing.assert_allclose(h.data[0, 0, 4:], gru_oracle(x[0], np.zeros(4), bwd))

    def test_palindrome_symmetry(self):
        rng = np.random.default_rng(4)
        p = make_gru(rng, 3, 4)
        xs = [rng.normal(0, 1, (1, 3)) for _ in range(2)]
        steps = [ad.Tensor(xs[0]), ad.Tensor(xs[1]), ad.Tensor(xs[0])]
        h, _, _ = bigru_encode(steps, p, p)
        t_len = 3
        for t in range(t_len):
            np.testing.assert_allclose(
                h.data[0, t, :4], h.data[0, t_len - 1 - t, 4:], atol=1e-12
            )

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(5)
        fwd, bwd = make_gru(rng, 3, 4), make_gru(rng, 3, 4)
        xs = [rng.normal(0, 1, 3) for _ in range(3)]
        h, hf, hb = bigru_encode([ad.Tensor(x[None, :]) for x in xs], fwd, bwd)
        state = np.zeros(4)
        for t, x in enumerate(xs):
            state = gru_oracle(x, state, fwd)
            np.testing.assert_allclose(h.data[0, t, :4], state, atol=1e-12)
        np.testing.assert_allclose(hf.data[0], state, atol=1e-12)
        state = np.zeros(4)
        for t in reversed(range(3)):
            state = gru_oracle(xs[t], state, bwd)
            np.testing.assert_allclose(h.data[0, t, 4:], state, atol=1e-12)
        np.testing.assert_allclose(hb.data[0], state, atol=1e-12)

    def test_empty_error(self):
        p = make_gru(np.random.default_rng(0), 3, 4)
        with pytest.raises(ValueError):
            bigru_encode([], p, p)


def make_attn(rng, dec_h, enc_2h, align):
    return AttentionParams(
        w_s=Parameter(rng.normal(0, 0.4, (dec_h, align)), "w_s"),
        w_h=Parameter(rng.normal(0, 0.4, (enc_2h, align)), "w_h"),
        v=Parameter(rng.normal(0, 0.4, (align,)), "v"),
    )


class TestAttention:
    def test_singleton_softmax(self):
        rng = np.random.default_rng(6)
        p = make_attn(rng, 3, 4, 5)
        h = rng.normal(0, 1, (1, 1, 4))
        alpha, c = attention(
            ad.Tensor(rng.normal(0, 1, (1, 3))), ad.Tensor(h), np.array([[True]]), p
        )
        np.testing.assert_allclose(alpha.data, [[1.0]], atol=1e-12)
        np.testing.assert_allclose(c.data[0], h[0, 0], atol=1e-12)

    def test_uniform_when_energies_equal(self):
        rng = np.random.default_rng(7)
        p = make_attn(rng, 3, 4, 5)
        row = rng.normal(0, 1, 4)
        h = np.stack([row, row, row])[None, :, :]
        alpha, _ = attention(
            ad.Tensor(np.zeros((1, 3))), ad.Tensor(h), np.ones((1, 3), bool), p
        )
        np.testing.assert_allclose(alpha.data, np.full((1, 3), 1 / 3), atol=1e-12)

    def test_matches_high_precision_oracle(self):
        rng = np.random.default_rng(8)
        p = make_attn(rng, 3, 4, 5)
        s = rng.normal(0, 1, 3)
        h = rng.normal(0, 1, (3, 4))
        mask = np.array([True, True, True])
        alpha, c = attention(
            ad.Tensor(s[None, :]), ad.Tensor(h[None, :, :]), mask[None, :], p
        )
        e = np.array(
            [p.v.data @ np.tanh(s @ p.w_s.data + h[j] @ p.w_h.data) for j in range(3)]
        )
        expected_alpha = np.exp(e - e.max())
        expected_alpha /= expected_alpha.sum()
        np.testing.assert_allclose(alpha.data[0], expected_alpha, atol=1e-12)
        np.testing.assert_allclose(c.data[0], expected_alpha @ h, atol=1e-12)

    def test_masked_positions_exact_zero(self):
        rng = np.random.default_rng(9)
        p = make_attn(rng, 3, 4, 5)
        h = rng.normal(0, 1, (1, 4, 4))
        mask = np.array([[True, True, False, False]])
        alpha, _ = attention(ad.Tensor(rng.normal(0, 1, (1, 3))), ad.Tensor(h), mask, p)
        assert alpha.data[0, 2] == 0.0 and alpha.data[0, 3] == 0.0
        assert alpha.data.sum() == pytest.approx(1.0, abs=1e-6)

    def test_all_masked_error(self):
        rng = np.random.default_rng(10)
        p = make_attn(rng, 3, 4, 5)
        with pytest.raises(ValueError):
            attention(
                ad.Tensor(np.zeros((1, 3))),
                ad.Tensor(np.zeros((1, 2, 4))),
                np.zeros((1, 2), bool),
                p,
            )


class TestDecoderStep:
    def test_zero_params_halve_state(self):
        p = make_gru(np.random.default_rng(0), 7, 4, zero=True)
        s_prev = np.random.default_rng(1).normal(0, 0.5, (1, 4))
        out = decoder_step(
            ad.Tensor(np.zeros((1, 3))), ad.Tensor(s_prev), ad.Tensor(np.zeros((1, 4))), p
        )
        np.testing.assert_allclose(out.data, 0.5 * s_prev, atol=1e-12)

    def test_equals_gru_on_concat(self):
        rng = np.random.default_rng(11)
        p = make_gru(rng, 7, 4)
        y = rng.normal(0, 1, (1, 3))
        c = rng.normal(0, 1, (1, 4))
        s_prev = rng.normal(0, 0.5, (1, 4))
        out = decoder_step(ad.Tensor(y), ad.Tensor(s_prev), ad.Tensor(c), p)
        expected = gru_oracle(np.concatenate([y[0], c[0]]), s_prev[0], p)
        np.testing.assert_allclose(out.data[0], expected, atol=1e-12)


class TestOutputDistribution:
    def test_zero_weights_uniform(self):
        w = Parameter(np.zeros((4, 7)), "w")
        b = Parameter(np.zeros(7), "b")
        probs = output_distribution(ad.Tensor(np.ones((1, 4))), w, b)
        np.testing.assert_allclose(probs.data, np.full((1, 7), 1 / 7), atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(12)
        w = Parameter(rng.normal(0, 1, (4, 7)), "w")
        s = rng.normal(0, 1, (1, 4))
        p1 = output_distribution(ad.Tensor(s), w, Parameter(np.zeros(7), "b"))
        p2 = output_distribution(ad.Tensor(s), w, Parameter(np.full(7, 100.0), "b"))
        np.testing.assert_allclose(p1.data, p2.data, atol=1e-9)

    def test_matches_64bit_oracle(self):
        rng = np.random.default_rng(13)
        w = Parameter(rng.normal(0, 2, (4, 7)), "w")
        b = Parameter(rng.normal(0, 1, 7), "b")
        s = rng.normal(0, 1, (1, 4))
        probs = output_distribution(ad.Tensor(s), w, b)
        logits = s[0] @ w.data + b.data
        expected = np.exp(logits - logits.max())
        expected /= expected.sum()
        np.testing.assert_allclose(probs.data[0], expected, atol=1e-12)
        assert probs.data.sum() == pytest.approx(1.0, abs=1e-6)
        assert (probs.data > 0).all()


class TestMaskedCrossEntropy:
    def test_uniform_probs(self):
        probs = ad.Tensor(np.full((3, 10), 0.1))
        loss = masked_cross_entropy(probs, np.array([1, 2, 3]), pad_id=0)
        assert float(loss.data) == pytest.approx(math.log(10), abs=1e-9)

    def test_perfect_probs_zero_loss(self):
        probs = np.full((2, 4), 1e-12)
        probs[0, 1] = 1.0
        probs[1, 2] = 1.0
        loss = masked_cross_entropy(ad.Tensor(probs), np.array([1, 2]), pad_id=0)
        assert float(loss.data) == pytest.approx(0.0, abs=1e-9)

    def test_pad_excluded(self):
        probs = np.array([[0.5, 0.25, 0.25], [0.2, 0.4, 0.4], [0.9, 0.05, 0.05]])
        targets = np.array([1, 0, 2])  # middle is PAD
        loss = masked_cross_entropy(ad.Tensor(probs), targets, pad_id=0)
        expected = -(math.log(0.25) + math.log(0.05)) / 2
        assert float(loss.data) == pytest.approx(expected, abs=1e-12)

    def test_all_pad_error(self):
        with pytest.raises(ValueError):
            masked_cross_entropy(ad.Tensor(np.full((2, 3), 1 / 3)), np.array([0, 0]), 0)


class TestDropout:
    def test_rate_zero_identity(self):
        x = ad.Tensor(np.ones((4, 4)))
        out = dropout_apply(x, 0.0, True, np.random.default_rng(0))
        assert out is x

    def test_inference_identity(self):
        x = ad.Tensor(np.ones((4, 4)))
        out = dropout_apply(x, 0.9, False, np.random.default_rng(0))
        assert out is x

    def test_rate_one_error(self):
        with pytest.raises(ValueError):
            dropout_apply(ad.Tensor(np.ones(3)), 1.0, True, np.random.default_rng(0))

    def test_survivor_statistics(self):
        rng = np.random.default_rng(42)
        n = 100_000
        x = ad.Tensor(np.ones(n))
        out = dropout_apply(x, 0.5, True, rng)
        survivors = (out.data != 0).mean()
        sigma = math.sqrt(0.25 / n)
        assert abs(survivors - 0.5) < 3 * sigma
        assert abs(out.data.mean() - 1.0) < 0.05


class TestBackward:
    def test_linear_grad(self):
        # loss = sum(W @ x) has gradient outer(ones, x)
        rng = np.random.default_rng(14)
        w = Parameter(rng.normal(0, 1, (3, 4)), "w")
        x = rng.normal(0, 1, 4)
        wx = ad.matmul(w, ad.Tensor(x))
        loss = ad.matmul(ad.reshape(wx, (1, 3)), ad.Tensor(np.ones(3)))
        ad.backward(loss, [w])
        np.testing.assert_allclose(w.grad, np.outer(np.ones(3), x), atol=1e-12)

    def test_unused_param_zero_grad(self):
        rng = np.random.default_rng(15)
        used = Parameter(rng.normal(0, 1, (2, 2)), "used")
        unused = Parameter(rng.normal(0, 1, (2, 2)), "unused")
        loss = ad.mul(ad.reshape(used, (1, 4)) @ ad.Tensor(np.ones(4)), 1.0)
        ad.backward(loss, [used, unused])
        np.testing.assert_array_equal(unused.grad, np.zeros((2, 2)))
        assert np.abs(used.grad).sum() > 0

    def test_nonfinite_loss_rejected(self):
        with pytest.raises(NumericError):
            ad.backward(ad.Tensor(np.array(np.inf)), [])


class TestAdam:
    def test_first_step_is_signed_lr(self):
        p = Parameter(np.array([1.0]), "p")
        p.grad = np.array([0.5])
        adam_step([p], t=1, lr=0.001)
        assert p.data[0] == pytest.approx(1.0 - 0.001, abs=1e-6)

    def test_zero_grad_no_change(self):
        p = Parameter(np.array([1.0, -2.0]), "p")
        p.grad = np.zeros(2)
        adam_step([p], t=1, lr=0.1)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_three_step_trajectory_oracle(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        p = Parameter(np.array([0.3]), "p")
        theta, m, v = 0.3, 0.0, 0.0
        grads = [0.4, -0.2, 0.1]
        for t, g in enumerate(grads, start=1):
            p.grad = np.array([g])
            adam_step([p], t=t, lr=lr)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
            assert p.data[0] == pytest.approx(theta, abs=1e-12)

    def test_step_index_validated(self):
        with pytest.raises(ValueError):
            adam_step([], t=0, lr=0.1)


class TestRmsprop:
    def test_single_step(self):
        lr, decay, eps = 0.01, 0.9, 1e-8
        p = Parameter(np.array([1.0]), "p")
        p.grad = np.array([0.5])
        rmsprop_step([p], lr=lr)
        v = (1 - decay) * 0.25
        expected = 1.0 - lr * 0.5 / (math.sqrt(v) + eps)
        assert p.data[0] == pytest.approx(expected, abs=1e-12)
