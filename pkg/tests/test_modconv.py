import math

import numpy as np
import pytest

from mobilestyle.modconv import (DEMOD_EPS, DenseModConvParams, DsModConvParams, compose_dense,
                                 compute_demod, compute_demod_trainable, ds_modconv_forward,
                                 modconv_dense_forward, modulate)
from mobilestyle.reference import conv2d_naive, demod_naive
from mobilestyle.tensor import conv2d_dense, conv2d_depthwise, conv2d_pointwise
from mobilestyle.verify import demod_output_stds


def ds_params(rng, cin, cout, style_dim=5, **kw):
    defaults = dict(
        w_dw=rng.standard_normal((cin, 1, 3, 3)),
        w_pw=rng.standard_normal((cout, cin, 1, 1)),
        bias=np.zeros(cout),
        affine_w=rng.standard_normal((cin, style_dim)) * 0.3,
        affine_b=np.ones(cin),
        demod_mode="style",
        activate=False,
    )
    defaults.update(kw)
    return DsModConvParams(**defaults)


class TestModulate:
    def test_unit_scale(self, rng):
        x = rng.standard_normal((2, 3, 4, 4))
        np.testing.assert_array_equal(modulate(x, np.ones((2, 3))), x)

    def test_scalar_two(self, rng):
        x = rng.standard_normal((2, 3, 4, 4))
        np.testing.assert_array_equal(modulate(x, np.full((2, 3), 2.0)), 2 * x)

    def test_elementwise_loop(self, rng):
        x, s = rng.standard_normal((2, 3, 2, 2)), rng.standard_normal((2, 3))
        out = modulate(x, s)
        for n, i, h, w in np.ndindex(*x.shape):
            assert out[n, i, h, w] == s[n, i] * x[n, i, h, w]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            modulate(np.ones((1, 3, 2, 2)), np.ones((1, 4)))


class TestCompose:
    def test_scalar_case(self, rng):
        k = rng.standard_normal((1, 1, 3, 3))
        np.testing.assert_array_equal(compose_dense(k, np.full((1, 1, 1, 1), 2.5)), 2.5 * k)

    def test_identity_pointwise_is_block_diagonal(self, rng):
        w_dw = rng.standard_normal((3, 1, 3, 3))
        dense = compose_dense(w_dw, np.eye(3)[:, :, None, None])
        for i in range(3):
            for j in range(3):
                np.testing.assert_array_equal(dense[j, i], w_dw[i, 0] if i == j else np.zeros((3, 3)))

    def test_sequential_equals_dense(self, rng):
        x = rng.standard_normal((2, 3, 6, 6))
        w_dw, w_pw = rng.standard_normal((3, 1, 3, 3)), rng.standard_normal((2, 3, 1, 1))
        seq = conv2d_pointwise(conv2d_depthwise(x, w_dw), w_pw)
        dense = conv2d_dense(x, compose_dense(w_dw, w_pw), pad=1)
        assert np.max(np.abs(seq - dense)) <= 1e-10 * np.max(np.abs(dense))


class TestDemod:
    def test_hand_value(self):
        w_dw = np.zeros((1, 1, 3, 3))
        w_pw = np.ones((1, 1, 1, 1))
        w_dw[0, 0, 1, 1] = 3.0
        d = compute_demod(w_dw, w_pw, np.array([[2.0]]))
        # (2*3)^2 = 36
        assert d[0, 0] == pytest.approx(1 / math.sqrt(36 + 1e-8), rel=1e-15)
        assert d[0, 0] == pytest.approx(0.1666667, abs=1e-7)

    def test_zero_style(self, rng):
        d = compute_demod(rng.standard_normal((4, 1, 3, 3)), rng.standard_normal((3, 4, 1, 1)), np.zeros((2, 4)))
        np.testing.assert_allclose(d, 1 / math.sqrt(DEMOD_EPS), rtol=1e-15)

    def test_matches_naive(self, rng):
        w_dw, w_pw, s = rng.standard_normal((5, 1, 3, 3)), rng.standard_normal((4, 5, 1, 1)), rng.standard_normal((3, 5))
        np.testing.assert_allclose(compute_demod(w_dw, w_pw, s), demod_naive(w_dw, w_pw, s), rtol=1e-12)

    def test_trainable_substitution(self, rng):
        w_dw, w_pw = rng.standard_normal((5, 1, 3, 3)), rng.standard_normal((4, 5, 1, 1))
        p = rng.uniform(0.5, 2.0, 5)
        np.testing.assert_array_equal(compute_demod_trainable(w_dw, w_pw, p), compute_demod(w_dw, w_pw, p[None])[0])

    def test_trainable_ones_is_weight_norm(self, rng):
        w_dw, w_pw = rng.standard_normal((3, 1, 3, 3)), rng.standard_normal((2, 3, 1, 1))
        expected = [1 / math.sqrt(sum((w_pw[j, i, 0, 0] * w_dw[i, 0, a, b]) ** 2
                                      for i in range(3) for a in range(3) for b in range(3)) + 1e-8)
                    for j in range(2)]
        np.testing.assert_allclose(compute_demod_trainable(w_dw, w_pw, np.ones(3)), expected, rtol=1e-13)

    def test_trainable_ignores_style(self, rng):
        params = ds_params(rng, 4, 3, demod_mode="trainable", p_demod=np.ones(4))
        x = rng.standard_normal((1, 4, 5, 5))
        # with modulation undone (s scaled by a constant factor), output scales linearly
        out1 = ds_modconv_forward(x, rng.standard_normal((1, 5)), params)
        out2 = ds_modconv_forward(x, rng.standard_normal((1, 5)), params)
        assert not np.allclose(out1, out2)   # modulation still uses the style
        d = compute_demod_trainable(params.w_dw, params.w_pw, params.p_demod)
        assert d.shape == (3,)


class TestDsForward:
    def test_identity_chain(self, rng):
        c = 3
        w_dw = np.zeros((c, 1, 3, 3))
        w_dw[:, 0, 1, 1] = 1.0
        params = DsModConvParams(w_dw=w_dw, w_pw=np.eye(c)[:, :, None, None], bias=np.zeros(c),
                                 affine_w=np.zeros((c, 4)), affine_b=np.ones(c), demod_mode="none",
                                 noise_strength=0.0, activate=False)
        x = rng.standard_normal((2, c, 5, 5))
        out = ds_modconv_forward(x, rng.standard_normal((2, 4)), params, noise=np.zeros((2, 1, 5, 5)))
        np.testing.assert_array_equal(out, x)

    def test_identity_chain_with_activation_on_positive_input(self, rng):
        c = 2
        w_dw = np.zeros((c, 1, 3, 3))
        w_dw[:, 0, 1, 1] = 1.0
        params = DsModConvParams(w_dw=w_dw, w_pw=np.eye(c)[:, :, None, None], bias=np.zeros(c),
                                 affine_w=np.zeros((c, 4)), affine_b=np.ones(c), demod_mode="none")
        x = rng.uniform(0.1, 1, (1, c, 4, 4))
        np.testing.assert_array_equal(ds_modconv_forward(x, np.zeros((1, 4)), params), x)

    def test_demod_statistics(self):
        stds = demod_output_stds(10_000, seed=7)
        assert np.all(np.abs(stds - 1) <= 0.1), stds

    def test_trainable_matches_offline_fold(self, rng):
        params = ds_params(rng, 4, 6, demod_mode="trainable", p_demod=rng.uniform(0.5, 1.5, 4),
                           bias=rng.standard_normal(6), activate=True, noise_strength=0.3)
        d = compute_demod_trainable(params.w_dw, params.w_pw, params.p_demod)
        folded = params.with_(w_pw=params.w_pw * d[:, None, None, None], demod_mode="fused", p_demod=None)
        x, style, noise = rng.standard_normal((2, 4, 6, 6)), rng.standard_normal((2, 5)), rng.standard_normal((2, 1, 6, 6))
        a = ds_modconv_forward(x, style, params, noise)
        b = ds_modconv_forward(x, style, folded, noise)
        assert np.max(np.abs(a - b)) <= 1e-10

    def test_style_equivariance(self, rng):
        params = ds_params(rng, 4, 3)
        x, style = rng.standard_normal((2, 4, 5, 5)), rng.standard_normal((2, 5))
        base = ds_modconv_forward(x, style, params)
        for lam in (0.5, 3.0, 10.0):
            scaled = params.with_(affine_w=params.affine_w * lam, affine_b=params.affine_b * lam)
            assert np.max(np.abs(ds_modconv_forward(x, style, scaled) - base)) <= 1e-9

    def test_trainable_is_linear_in_input(self, rng):
        params = ds_params(rng, 4, 3, demod_mode="trainable", p_demod=np.ones(4))
        x, y, style = rng.standard_normal((1, 4, 5, 5)), rng.standard_normal((1, 4, 5, 5)), rng.standard_normal((1, 5))
        lhs = ds_modconv_forward(2 * x - 0.5 * y, style, params)
        rhs = 2 * ds_modconv_forward(x, style, params) - 0.5 * ds_modconv_forward(y, style, params)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10

    def test_fused_with_runtime_demod_rejected(self, rng):
        with pytest.raises(ValueError, match="fused"):
            ds_params(rng, 3, 2, demod_mode="fused", p_demod=np.ones(3))

    def test_trainable_needs_positive_p(self, rng):
        with pytest.raises(ValueError, match="positive"):
            ds_params(rng, 3, 2, demod_mode="trainable", p_demod=np.array([1.0, 0.0, 1.0]))

    def test_channel_mismatch(self, rng):
        with pytest.raises(ValueError):
            ds_modconv_forward(np.ones((1, 5, 4, 4)), np.ones((1, 5)), ds_params(rng, 3, 2))


class TestDenseForward:
    def test_identity(self, rng):
        c = 3
        w = np.zeros((c, c, 3, 3))
        for i in range(c):
            w[i, i, 1, 1] = 1.0
        params = DenseModConvParams(weight=w, bias=np.zeros(c), affine_w=np.zeros((c, 4)),
                                    affine_b=np.ones(c), demodulate=False, activate=False)
        x = rng.standard_normal((1, c, 4, 4))
        np.testing.assert_array_equal(modconv_dense_forward(x, np.zeros((1, 4)), params), x)

    def test_equals_separable_with_composed_kernel(self, rng):
        ds = ds_params(rng, 4, 5)
        dense = DenseModConvParams(weight=compose_dense(ds.w_dw, ds.w_pw), bias=ds.bias,
                                   affine_w=ds.affine_w, affine_b=ds.affine_b, activate=False)
        x, style = rng.standard_normal((2, 4, 6, 6)), rng.standard_normal((2, 5))
        a = ds_modconv_forward(x, style, ds)
        b = modconv_dense_forward(x, style, dense)
        assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))

    def test_matches_loop_oracle(self, rng):
        cin, cout = 3, 2
        w = rng.standard_normal((cout, cin, 3, 3))
        aw, ab = rng.standard_normal((cin, 4)), rng.standard_normal(cin)
        params = DenseModConvParams(weight=w, bias=np.zeros(cout), affine_w=aw, affine_b=ab, activate=False)
        x, style = rng.standard_normal((1, cin, 4, 4)), rng.standard_normal((1, 4))
        s = np.array([sum(style[0, k] * aw[i, k] for k in range(4)) + ab[i] for i in range(cin)])
        y = conv2d_naive(x * s[None, :, None, None], w, pad=1)
        for j in range(cout):
            norm = math.sqrt(sum((s[i] * w[j, i, a, b]) ** 2 for i in range(cin) for a in range(3) for b in range(3)) + 1e-8)
            y[:, j] /= norm
        np.testing.assert_allclose(modconv_dense_forward(x, style, params), y, rtol=1e-12, atol=1e-12)
