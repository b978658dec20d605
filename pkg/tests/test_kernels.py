"""Kernel-level tests: trivial identities, brute-force oracles, and
finite-difference gradient checks for every layer primitive."""

import numpy as np
import pytest

from rhythmnet import kernels
from rhythmnet.errors import ContractViolationError, InvalidInputError
from rhythmnet.gradcheck import grad_check
from rhythmnet.rng import derive


def loop_conv1d(x, w, b, stride):
    """Reference convolution: triple-nested loops in float64."""
    batch, in_ch, time = x.shape
    out_ch, _, filter_len = w.shape
    left, _, out_time = kernels.same_pad_amounts(time, filter_len, stride)
    x64, w64 = x.astype(np.float64), w.astype(np.float64)
    out = np.zeros((batch, out_ch, out_time))
    for bi in range(batch):
        for oc in range(out_ch):
            for t in range(out_time):
                acc = float(b[oc])
                for ic in range(in_ch):
                    for k in range(filter_len):
                        src = t * stride - left + k
                        if 0 <= src < time:
                            acc += w64[oc, ic, k] * x64[bi, ic, src]
                out[bi, oc, t] = acc
    return out


def loop_maxpool(x, pool, stride):
    """Reference windowed max with first-index tie break."""
    batch, channels, time = x.shape
    out_time = -(-time // stride)
    y = np.empty((batch, channels, out_time), dtype=x.dtype)
    idx = np.empty((batch, channels, out_time), dtype=np.int64)
    for bi in range(batch):
        for c in range(channels):
            for t in range(out_time):
                window = x[bi, c, t * stride:min(t * stride + pool, time)]
                j = int(np.argmax(window))
                y[bi, c, t] = window[j]
                idx[bi, c, t] = t * stride + j
    return y, idx


class TestConv1d:
    def test_identity_kernel(self):
        x = np.array([[[1.0, 2.0, 3.0, 4.0]]], dtype=np.float32)
        w = np.ones((1, 1, 1), dtype=np.float32)
        b = np.zeros(1, dtype=np.float32)
        y = kernels.conv1d(x, w, b, stride=1)
        np.testing.assert_array_equal(y, x)

    def test_stride2_halves_time(self):
        x = np.zeros((1, 1, 8), dtype=np.float32)
        w = derive(1, "w").standard_normal((3, 1, 16)).astype(np.float32)
        b = np.zeros(3, dtype=np.float32)
        assert kernels.conv1d(x, w, b, stride=2).shape == (1, 3, 4)

    def test_matches_loop_oracle(self):
        rng = derive(7, "conv-oracle")
        x = rng.standard_normal((2, 3, 16)).astype(np.float32)
        w = rng.standard_normal((4, 3, 5)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        got = kernels.conv1d(x, w, b, stride=2)
        want = loop_conv1d(x, w, b, stride=2)
        assert np.abs(got - want).max() < 1e-5

    @pytest.mark.parametrize("stride,filter_len", [(1, 5), (2, 5), (2, 16), (1, 1), (2, 1), (2, 2)])
    def test_loop_oracle_configs(self, stride, filter_len):
        rng = derive(11, "conv-oracle", stride, filter_len)
        x = rng.standard_normal((2, 2, 13)).astype(np.float32)
        w = rng.standard_normal((3, 2, filter_len)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        got = kernels.conv1d(x, w, b, stride=stride)
        want = loop_conv1d(x, w, b, stride=stride)
        assert got.shape == want.shape
        assert np.abs(got - want).max() < 1e-5

    def test_gradients_match_finite_differences(self):
        rng = derive(3, "conv-grad")
        x = rng.standard_normal((2, 3, 16))
        params = {
            "weights": rng.standard_normal((4, 3, 5)),
            "bias": rng.standard_normal(4),
        }

        def fn(p, xv):
            y = kernels.conv1d(xv, p["weights"], p["bias"], stride=2)
            return y, lambda gy: kernels.conv1d_backward(xv, p["weights"], 2, gy)

        report = grad_check(fn, params, x)
        assert report.max_rel_err < 1e-3, str(report)

    def test_output_time_is_ceil_for_all_lengths(self):
        w = np.ones((1, 1, 16), dtype=np.float32)
        b = np.zeros(1, dtype=np.float32)
        for stride in (1, 2):
            for time in range(1, 513):
                x = np.zeros((1, 1, time), dtype=np.float32)
                out = kernels.conv1d(x, w, b, stride=stride)
                assert out.shape[2] == -(-time // stride), (stride, time)

    def test_channel_mismatch_rejected(self):
        x = np.zeros((1, 2, 8), dtype=np.float32)
        w = np.zeros((1, 3, 4), dtype=np.float32)
        with pytest.raises(ContractViolationError):
            kernels.conv1d(x, w, np.zeros(1, dtype=np.float32), stride=1)

    def test_empty_time_rejected(self):
        x = np.zeros((1, 1, 0), dtype=np.float32)
        w = np.zeros((1, 1, 4), dtype=np.float32)
        with pytest.raises(InvalidInputError):
            kernels.conv1d(x, w, np.zeros(1, dtype=np.float32), stride=1)

    def test_deterministic(self):
        rng = derive(9, "conv-det")
        x = rng.standard_normal((2, 3, 32)).astype(np.float32)
        w = rng.standard_normal((4, 3, 16)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        a = kernels.conv1d(x, w, b, stride=2)
        c = kernels.conv1d(x, w, b, stride=2)
        np.testing.assert_array_equal(a, c)


class TestBatchNorm:
    def test_train_normalizes_per_channel(self):
        rng = derive(5, "bn")
        x = (rng.standard_normal((4, 3, 8)) * 3 + 2).astype(np.float32)
        gamma = np.ones(3, dtype=np.float32)
        beta = np.zeros(3, dtype=np.float32)
        y, ctx, _, _ = kernels.batchnorm(x, gamma, beta, np.zeros(3, np.float32),
                                         np.ones(3, np.float32), "train")
        assert np.abs(y.mean(axis=(0, 2))).max() < 1e-5
        assert np.abs(y.var(axis=(0, 2)) - 1).max() < 1e-3

    def test_eval_identity_stats(self):
        rng = derive(6, "bn-eval")
        x = rng.standard_normal((2, 3, 8)).astype(np.float32)
        y, ctx, _, _ = kernels.batchnorm(
            x, np.ones(3, np.float32), np.zeros(3, np.float32),
            np.zeros(3, np.float32), np.ones(3, np.float32), "eval")
        assert ctx is None
        # identity up to the epsilon in 1/sqrt(var + eps)
        assert np.abs(y - x).max() < 5e-5

    def test_running_stats_ema(self):
        rng = derive(8, "bn-ema")
        x = (rng.standard_normal((4, 2, 16)) * 2 + 5).astype(np.float32)
        rm = np.zeros(2, np.float32)
        rv = np.ones(2, np.float32)
        _, _, new_rm, new_rv = kernels.batchnorm(
            x, np.ones(2, np.float32), np.zeros(2, np.float32), rm, rv,
            "train", momentum=0.9)
        mean = x.mean(axis=(0, 2), dtype=np.float64)
        var = x.astype(np.float64).var(axis=(0, 2))
        np.testing.assert_allclose(new_rm, 0.1 * mean, rtol=1e-5)
        np.testing.assert_allclose(new_rv, 0.9 * 1.0 + 0.1 * var, rtol=1e-5)

    def test_gradients_match_finite_differences(self):
        rng = derive(10, "bn-grad")
        x = rng.standard_normal((4, 2, 8))
        params = {"gamma": 1 + 0.1 * rng.standard_normal(2),
                  "beta": 0.1 * rng.standard_normal(2)}

        def fn(p, xv):
            y, ctx, _, _ = kernels.batchnorm(
                xv, p["gamma"], p["beta"], np.zeros(2), np.ones(2), "train")
            return y, lambda gy: kernels.batchnorm_backward(ctx, gy)

        report = grad_check(fn, params, x)
        assert report.max_rel_err < 1e-3, str(report)

    def test_degenerate_batch_rejected(self):
        x = np.zeros((1, 2, 1), dtype=np.float32)
        with pytest.raises(InvalidInputError):
            kernels.batchnorm(x, np.ones(2, np.float32), np.zeros(2, np.float32),
                              np.zeros(2, np.float32), np.ones(2, np.float32), "train")


class TestRelu:
    def test_definition(self):
        x = np.array([-1.0, 0.0, 2.0], dtype=np.float32)
        np.testing.assert_array_equal(kernels.relu(x), [0.0, 0.0, 2.0])

    def test_all_positive_identity(self):
        x = np.abs(derive(2, "relu").standard_normal(10)).astype(np.float32) + 0.1
        np.testing.assert_array_equal(kernels.relu(x), x)

    def test_gradient_zero_at_zero(self):
        x = np.array([0.0, -1.0, 1.0], dtype=np.float32)
        g = kernels.relu_backward(x, np.ones(3, dtype=np.float32))
        np.testing.assert_array_equal(g, [0.0, 0.0, 1.0])

    def test_gradient_matches_finite_differences_away_from_zero(self):
        rng = derive(4, "relu-grad")
        x = rng.standard_normal((3, 2, 7))
        x = np.where(np.abs(x) < 1e-2, 0.5, x)  # keep clear of the kink

        def fn(p, xv):
            return kernels.relu(xv), lambda gy: kernels.LayerGrads(
                kernels.relu_backward(xv, gy))

        report = grad_check(fn, {}, x)
        assert report.max_rel_err < 1e-3, str(report)


class TestDropout:
    def test_rate_zero_identity(self):
        x = derive(1, "drop0").standard_normal((2, 3, 4)).astype(np.float32)
        y, mask = kernels.dropout(x, 0.0, derive(1, "g"), "train")
        np.testing.assert_array_equal(y, x)
        assert mask.all()

    def test_eval_identity_any_rate(self):
        x = derive(2, "drop-eval").standard_normal((2, 3, 4)).astype(np.float32)
        y, mask = kernels.dropout(x, 0.7, None, "eval")
        assert y is x
        assert mask.all()

    def test_survival_fraction_and_expectation(self):
        x = np.ones(10 ** 6, dtype=np.float32)
        y, mask = kernels.dropout(x, 0.5, derive(42, "drop-mc"), "train")
        frac = mask.mean()
        assert abs(frac - 0.5) < 0.01
        assert abs(y.mean() - 1.0) < 0.01  # inverted scaling keeps E[y] = x

    def test_backward_applies_mask_and_scale(self):
        x = derive(3, "drop-bwd").standard_normal((4, 4)).astype(np.float32)
        y, mask = kernels.dropout(x, 0.25, derive(5, "m"), "train")
        gy = np.ones_like(x)
        gx = kernels.dropout_backward(mask, 0.25, gy)
        np.testing.assert_allclose(gx, mask / 0.75, rtol=1e-6)

    def test_rate_one_rejected(self):
        with pytest.raises(ContractViolationError):
            kernels.dropout(np.ones(3, dtype=np.float32), 1.0, derive(0, "x"), "train")

    def test_same_seed_bit_identical(self):
        x = derive(6, "drop-det").standard_normal((3, 5)).astype(np.float32)
        y1, m1 = kernels.dropout(x, 0.4, derive(8, "stream"), "train")
        y2, m2 = kernels.dropout(x, 0.4, derive(8, "stream"), "train")
        np.testing.assert_array_equal(y1, y2)
        np.testing.assert_array_equal(m1, m2)


class TestMaxPool:
    def test_definition(self):
        x = np.array([[[1.0, 3.0, 2.0, 5.0]]], dtype=np.float32)
        y, idx = kernels.maxpool1d(x, 2, 2)
        np.testing.assert_array_equal(y[0, 0], [3.0, 5.0])
        np.testing.assert_array_equal(idx[0, 0], [1, 3])

    def test_constant_ties_to_first_index(self):
        x = np.ones((1, 1, 6), dtype=np.float32)
        y, idx = kernels.maxpool1d(x, 2, 2)
        np.testing.assert_array_equal(y[0, 0], [1.0, 1.0, 1.0])
        np.testing.assert_array_equal(idx[0, 0], [0, 2, 4])
        gx = kernels.maxpool1d_backward(idx, 6, np.ones_like(y))
        np.testing.assert_array_equal(gx[0, 0], [1.0, 0.0, 1.0, 0.0, 1.0, 0.0])

    def test_matches_loop_oracle_odd_length(self):
        rng = derive(12, "pool-oracle")
        x = rng.standard_normal((2, 4, 17)).astype(np.float32)
        y, idx = kernels.maxpool1d(x, 2, 2)
        want_y, want_idx = loop_maxpool(x, 2, 2)
        assert y.shape == (2, 4, 9)
        np.testing.assert_array_equal(y, want_y)
        np.testing.assert_array_equal(idx, want_idx)

    @pytest.mark.parametrize("pool,stride,time", [(2, 2, 16), (3, 2, 11), (2, 1, 9), (4, 4, 10)])
    def test_loop_oracle_general(self, pool, stride, time):
        rng = derive(13, "pool", pool, stride, time)
        x = rng.standard_normal((2, 3, time)).astype(np.float32)
        y, idx = kernels.maxpool1d(x, pool, stride)
        want_y, want_idx = loop_maxpool(x, pool, stride)
        np.testing.assert_array_equal(y, want_y)
        np.testing.assert_array_equal(idx, want_idx)

    def test_backward_conserves_gradient_mass_per_window(self):
        rng = derive(14, "pool-mass")
        x = rng.standard_normal((2, 3, 16)).astype(np.float32)
        y, idx = kernels.maxpool1d(x, 2, 2)
        gy = rng.standard_normal(y.shape).astype(np.float32)
        gx = kernels.maxpool1d_backward(idx, 16, gy)
        # windows are disjoint for pool == stride == 2: the routed mass in
        # each window equals that window's incoming gradient exactly
        np.testing.assert_array_equal(gx.reshape(2, 3, 8, 2).sum(axis=3), gy)

    def test_pool_below_one_rejected(self):
        with pytest.raises(ContractViolationError):
            kernels.maxpool1d(np.ones((1, 1, 4), dtype=np.float32), 0, 2)


class TestDense:
    def test_identity_weights(self):
        x = derive(1, "dense-id").standard_normal((3, 4)).astype(np.float32)
        y = kernels.dense(x, np.eye(4, dtype=np.float32), np.zeros(4, np.float32))
        np.testing.assert_allclose(y, x, rtol=1e-6)

    def test_zero_weights_constant_bias(self):
        x = derive(2, "dense-zero").standard_normal((3, 4)).astype(np.float32)
        y = kernels.dense(x, np.zeros((2, 4), np.float32),
                          np.full(2, 7.0, np.float32))
        np.testing.assert_array_equal(y, np.full((3, 2), 7.0, np.float32))

    def test_gradients_match_finite_differences(self):
        rng = derive(15, "dense-grad")
        x = rng.standard_normal((8, 14))
        params = {"weights": rng.standard_normal((6, 14)),
                  "bias": rng.standard_normal(6)}

        def fn(p, xv):
            y = kernels.dense(xv, p["weights"], p["bias"])
            return y, lambda gy: kernels.dense_backward(xv, p["weights"], gy)

        report = grad_check(fn, params, x)
        assert report.max_rel_err < 1e-3, str(report)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ContractViolationError):
            kernels.dense(np.zeros((2, 3), np.float32),
                          np.zeros((4, 5), np.float32), np.zeros(4, np.float32))


def naive_softmax_xent(logits, targets):
    """Naive exp/normalize reference in float64."""
    z = logits.astype(np.float64)
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    n = z.shape[0]
    loss = -np.log(p[np.arange(n), targets]).mean()
    grad = p.copy()
    grad[np.arange(n), targets] -= 1
    return loss, grad / n


class TestSoftmaxXent:
    def test_uniform_logits_loss_is_ln_classes(self):
        logits = np.zeros((5, 14), dtype=np.float32)
        targets = np.arange(5) % 14
        loss, grad = kernels.softmax_xent(logits, targets, 14)
        assert abs(loss - np.log(14)) < 1e-6

    def test_saturated_logits_loss_near_zero(self):
        logits = np.zeros((4, 14), dtype=np.float32)
        targets = np.array([0, 3, 7, 13])
        logits[np.arange(4), targets] = 1000.0
        loss, _ = kernels.softmax_xent(logits, targets, 14)
        assert loss < 1e-6

    def test_matches_naive_oracle(self):
        rng = derive(16, "xent")
        logits = rng.standard_normal((24, 14)).astype(np.float32) * 3
        targets = rng.integers(0, 14, size=24)
        loss, grad = kernels.softmax_xent(logits, targets, 14)
        want_loss, want_grad = naive_softmax_xent(logits, targets)
        assert abs(loss - want_loss) < 1e-5
        assert np.abs(grad - want_grad).max() < 1e-5

    def test_probabilities_sum_to_one(self):
        rng = derive(17, "xent-p")
        logits = rng.standard_normal((50, 14)).astype(np.float32) * 10
        targets = rng.integers(0, 14, size=50)
        _, grad = kernels.softmax_xent(logits, targets, 14)
        # grad * n + one_hot recovers the probabilities
        p = grad * 50
        p[np.arange(50), targets] += 1
        assert np.abs(p.sum(axis=1) - 1).max() < 1e-6

    def test_permutation_equivariant(self):
        rng = derive(18, "xent-perm")
        logits = rng.standard_normal((30, 14)).astype(np.float32)
        targets = rng.integers(0, 14, size=30)
        loss_a, _ = kernels.softmax_xent(logits, targets, 14)
        perm = rng.permutation(30)
        loss_b, _ = kernels.softmax_xent(logits[perm], targets[perm], 14)
        assert loss_a == loss_b

    def test_gradient_matches_finite_differences(self):
        rng = derive(19, "xent-grad")
        logits = rng.standard_normal((6, 14))
        targets = rng.integers(0, 14, size=6)

        def fn(p, xv):
            loss, grad = kernels.softmax_xent(xv, targets, 14)
            return np.array([loss]), lambda gy: kernels.LayerGrads(gy[0] * grad)

        report = grad_check(fn, {}, logits)
        assert report.max_rel_err < 1e-3, str(report)

    def test_target_out_of_range_rejected(self):
        with pytest.raises(ContractViolationError):
            kernels.softmax_xent(np.zeros((2, 14), np.float32),
                                 np.array([0, 14]), 14)


class TestDebugFiniteChecks:
    def test_nan_input_trips_debug_assert(self):
        x = np.full((1, 1, 8), np.nan, dtype=np.float32)
        w = np.ones((1, 1, 3), dtype=np.float32)
        with pytest.raises(AssertionError):
            kernels.conv1d(x, w, np.zeros(1, dtype=np.float32), stride=1)


class TestLinearGradCheckPrecision:
    def test_linear_layer_below_1e6(self):
        rng = derive(20, "linear-precision")
        x = rng.standard_normal((4, 5))
        params = {"weights": rng.standard_normal((3, 5)),
                  "bias": rng.standard_normal(3)}

        def fn(p, xv):
            y = kernels.dense(xv, p["weights"], p["bias"])
            return y, lambda gy: kernels.dense_backward(xv, p["weights"], gy)

        report = grad_check(fn, params, x)
        assert report.max_rel_err < 1e-6, str(report)
