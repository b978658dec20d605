"""Forward and backward kernels for every layer primitive.

All array arguments are dense numpy arrays shaped (batch, channels, time)
unless noted. Kernels compute in the dtype of their input: float32 in the
training hot path, float64 when a test wants tight numeric comparisons.
Batch-norm statistics and the softmax/cross-entropy head always reduce in
float64 regardless of input dtype.

Every kernel is a pure function of its arguments (plus an explicit seeded
generator for dropout) and is bit-deterministic for fixed inputs. Under
``__debug__`` each kernel asserts its output is finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, InvalidInputError


@dataclass
class LayerGrads:
    """Gradient of one layer: w.r.t. its input plus each named parameter."""

    input_grad: np.ndarray
    param_grads: dict[str, np.ndarray] = field(default_factory=dict)


def _check_finite(name, a):
    # a single float64 reduction: any NaN/Inf propagates into the sum
    assert np.isfinite(np.sum(a, dtype=np.float64)), \
        f"{name} produced non-finite values"


# ---------------------------------------------------------------------------
# 1D convolution, "same" zero padding, output time = ceil(time / stride)
# ---------------------------------------------------------------------------

def same_pad_amounts(time: int, filter_len: int, stride: int) -> tuple[int, int, int]:
    """Return (left_pad, right_pad, out_time) for same-style padding."""
    out_time = -(-time // stride)
    total = max(0, (out_time - 1) * stride + filter_len - time)
    left = min(max(0, (filter_len - stride) // 2), total)
    return left, total - left, out_time


def conv1d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, stride: int = 1) -> np.ndarray:
    """Cross-correlate x (B, C_in, T) with weights (C_out, C_in, K).

    Output shape is (B, C_out, ceil(T / stride)).
    """
    if x.ndim != 3 or weights.ndim != 3:
        raise ContractViolationError("conv1d expects 3-d input and weights")
    batch, in_ch, time = x.shape
    out_ch, w_in_ch, filter_len = weights.shape
    if filter_len < 1:
        raise ContractViolationError("filter_len must be >= 1")
    if stride not in (1, 2):
        raise ContractViolationError(f"stride must be 1 or 2, got {stride}")
    if w_in_ch != in_ch:
        raise ContractViolationError(
            f"weights expect {w_in_ch} input channels, input has {in_ch}")
    if time < 1:
        raise InvalidInputError("zero-length time axis")

    left, right, out_time = same_pad_amounts(time, filter_len, stride)
    xp = np.zeros((batch, in_ch, time + left + right), dtype=x.dtype)
    xp[:, :, left:left + time] = x

    # polyphase layout: tap k reads phase k % stride at offset k // stride,
    # so every GEMM operand is unit-stride and BLAS-friendly
    phases = [xp] if stride == 1 else \
        [np.ascontiguousarray(xp[:, :, p::stride]) for p in range(stride)]
    taps = np.ascontiguousarray(weights.transpose(2, 0, 1))  # (K, C_out, C_in)
    out = np.zeros((batch, out_ch, out_time), dtype=x.dtype)
    for k in range(filter_len):
        src = phases[k % stride]
        off = k // stride
        out += np.matmul(taps[k], src[:, :, off:off + out_time])
    out += bias.astype(x.dtype)[None, :, None]
    if __debug__:
        _check_finite("conv1d", out)
    return out


def conv1d_backward(x: np.ndarray, weights: np.ndarray, stride: int,
                    output_grad: np.ndarray) -> LayerGrads:
    """Gradients of conv1d w.r.t. input, weights, and bias."""
    batch, in_ch, time = x.shape
    out_ch, _, filter_len = weights.shape
    left, right, out_time = same_pad_amounts(time, filter_len, stride)
    if output_grad.shape != (batch, out_ch, out_time):
        raise ContractViolationError(
            f"output_grad shape {output_grad.shape}, expected {(batch, out_ch, out_time)}")

    padded = time + left + right
    xp = np.zeros((batch, in_ch, padded), dtype=x.dtype)
    xp[:, :, left:left + time] = x

    phases = [xp] if stride == 1 else \
        [np.ascontiguousarray(xp[:, :, p::stride]) for p in range(stride)]
    grad_phases = [np.zeros_like(p) for p in phases]
    taps_t = np.ascontiguousarray(weights.transpose(2, 1, 0))  # (K, C_in, C_out)
    gw = np.empty_like(weights)
    for k in range(filter_len):
        ph = k % stride
        off = k // stride
        grad_phases[ph][:, :, off:off + out_time] += np.matmul(taps_t[k], output_grad)
        gw[:, :, k] = np.matmul(
            output_grad,
            phases[ph][:, :, off:off + out_time].transpose(0, 2, 1)).sum(axis=0)
    gb = output_grad.sum(axis=(0, 2))
    if stride == 1:
        gxp = grad_phases[0]
    else:
        gxp = np.empty_like(xp)
        for p in range(stride):
            gxp[:, :, p::stride] = grad_phases[p]
    gx = np.ascontiguousarray(gxp[:, :, left:left + time])
    if __debug__:
        _check_finite("conv1d_backward", gx)
    return LayerGrads(gx, {"weights": gw, "bias": gb})


# ---------------------------------------------------------------------------
# Batch normalization over (batch, time) per channel
# ---------------------------------------------------------------------------

@dataclass
class BatchNormCtx:
    """Saved forward state needed by batchnorm_backward."""

    x_hat: np.ndarray
    inv_std: np.ndarray  # float64, per channel
    gamma: np.ndarray


def batchnorm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
              running_mean: np.ndarray, running_var: np.ndarray, mode: str,
              momentum: float = 0.99, epsilon: float = 1e-5):
    """Normalize per channel. Returns (y, ctx, new_running_mean, new_running_var).

    In train mode, statistics are the current batch's (reduced over batch and
    time in float64) and the running stats are advanced by exponential moving
    average; ctx carries what the backward pass needs. In eval mode the
    running stats are used unchanged and ctx is None.
    """
    if epsilon <= 0:
        raise ContractViolationError("epsilon must be > 0")
    batch, channels, time = x.shape
    if mode == "train":
        if batch * time < 2:
            raise InvalidInputError("batch norm needs batch*time >= 2 per channel")
        mean = x.mean(axis=(0, 2), dtype=np.float64)
        var = np.square(x, dtype=np.float64).mean(axis=(0, 2)) - mean ** 2
        var = np.maximum(var, 0.0)
        inv_std = 1.0 / np.sqrt(var + epsilon)
        x_hat = (x - mean.astype(x.dtype)[None, :, None]) \
            * inv_std.astype(x.dtype)[None, :, None]
        y = gamma[None, :, None] * x_hat + beta[None, :, None]
        new_mean = (momentum * running_mean.astype(np.float64)
                    + (1.0 - momentum) * mean).astype(running_mean.dtype)
        new_var = (momentum * running_var.astype(np.float64)
                   + (1.0 - momentum) * var).astype(running_var.dtype)
        ctx = BatchNormCtx(x_hat, inv_std, gamma)
        out = (y, ctx, new_mean, new_var)
    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(running_var.astype(np.float64) + epsilon)
        scale = (gamma * inv_std.astype(x.dtype))
        shift = beta - scale * running_mean
        y = scale[None, :, None] * x + shift[None, :, None]
        out = (y, None, running_mean, running_var)
    else:
        raise ContractViolationError(f"unknown mode {mode!r}")
    if __debug__:
        _check_finite("batchnorm", out[0])
    return out


def batchnorm_backward(ctx: BatchNormCtx, output_grad: np.ndarray) -> LayerGrads:
    """Standard train-mode batch-norm gradient; reductions in float64."""
    n = output_grad.shape[0] * output_grad.shape[2]
    g_sum = output_grad.sum(axis=(0, 2), dtype=np.float64)
    gx_sum = (output_grad * ctx.x_hat).sum(axis=(0, 2), dtype=np.float64)
    dgamma = gx_sum.astype(ctx.gamma.dtype)
    dbeta = g_sum.astype(ctx.gamma.dtype)
    scale = (ctx.gamma.astype(np.float64) * ctx.inv_std).astype(output_grad.dtype)
    gx = scale[None, :, None] * (
        output_grad
        - (g_sum / n).astype(output_grad.dtype)[None, :, None]
        - ctx.x_hat * (gx_sum / n).astype(output_grad.dtype)[None, :, None]
    )
    if __debug__:
        _check_finite("batchnorm_backward", gx)
    return LayerGrads(gx, {"gamma": dgamma, "beta": dbeta})


# ---------------------------------------------------------------------------
# ReLU
# ---------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, output_grad: np.ndarray) -> np.ndarray:
    """Pass gradient where x > 0; the gradient at exactly 0 is 0."""
    return np.where(x > 0, output_grad, output_grad.dtype.type(0))


# ---------------------------------------------------------------------------
# Inverted dropout
# ---------------------------------------------------------------------------

def dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None,
            mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Zero entries with probability `rate`, scaling survivors by 1/(1-rate).

    Eval mode is the identity. Returns (output, keep mask).
    """
    if not 0.0 <= rate < 1.0:
        raise ContractViolationError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x, np.ones(x.shape, dtype=bool)
    if mode != "train":
        raise ContractViolationError(f"unknown mode {mode!r}")
    if rng is None:
        raise ContractViolationError("train-mode dropout needs a generator")
    mask = rng.random(x.shape) >= rate
    scale = x.dtype.type(1.0 / (1.0 - rate))
    return x * mask * scale, mask


def dropout_backward(mask: np.ndarray, rate: float,
                     output_grad: np.ndarray) -> np.ndarray:
    scale = output_grad.dtype.type(1.0 / (1.0 - rate))
    return output_grad * mask * scale


# ---------------------------------------------------------------------------
# 1D max pooling, same-style edges (last window may be short)
# ---------------------------------------------------------------------------

def maxpool1d(x: np.ndarray, pool: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Windowed max with argmax indices; ties go to the lowest index.

    Output time is ceil(T / stride); the edge window takes the max of the
    samples that exist. Returns (output, absolute argmax indices).
    """
    if pool < 1:
        raise ContractViolationError("pool must be >= 1")
    if stride < 1:
        raise ContractViolationError("stride must be >= 1")
    batch, channels, time = x.shape
    if time < 1:
        raise InvalidInputError("zero-length time axis")
    out_time = -(-time // stride)
    starts = np.arange(out_time) * stride
    y = x[:, :, starts].copy()
    idx = np.broadcast_to(starts, y.shape).copy()
    for j in range(1, pool):
        pos = starts + j
        valid = pos < time
        if not valid.any():
            break
        cand = x[:, :, np.minimum(pos, time - 1)]
        better = valid[None, None, :] & (cand > y)
        y[better] = cand[better]
        idx = np.where(better, pos[None, None, :], idx)
    return y, idx


def maxpool1d_backward(indices: np.ndarray, in_time: int,
                       output_grad: np.ndarray) -> np.ndarray:
    """Route each output gradient to its argmax position."""
    batch, channels, out_time = output_grad.shape
    gx = np.zeros((batch * channels, in_time), dtype=output_grad.dtype)
    rows = np.repeat(np.arange(batch * channels), out_time)
    np.add.at(gx, (rows, indices.reshape(-1)), output_grad.reshape(-1))
    return gx.reshape(batch, channels, in_time)


# ---------------------------------------------------------------------------
# Dense (affine) layer on flattened positions
# ---------------------------------------------------------------------------

def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map y = x W^T + b for x (N, features), weights (out, features)."""
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[1]:
        raise ContractViolationError(
            f"dense shapes disagree: x {x.shape}, weights {weights.shape}")
    out = x @ weights.T + bias.astype(x.dtype)
    if __debug__:
        _check_finite("dense", out)
    return out


def dense_backward(x: np.ndarray, weights: np.ndarray,
                   output_grad: np.ndarray) -> LayerGrads:
    gx = output_grad @ weights
    gw = output_grad.T @ x
    gb = output_grad.sum(axis=0)
    return LayerGrads(gx, {"weights": gw, "bias": gb})


# ---------------------------------------------------------------------------
# Fused softmax + cross-entropy over (positions, classes)
# ---------------------------------------------------------------------------

def softmax_xent(logits: np.ndarray, targets: np.ndarray,
                 class_count: int) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    Uses the max-shift log-sum-exp trick in float64; the returned gradient is
    (softmax - one_hot) / n_positions in the logits' dtype.
    """
    if logits.ndim != 2 or logits.shape[1] != class_count:
        raise ContractViolationError(
            f"logits must be (positions, {class_count}), got {logits.shape}")
    n = logits.shape[0]
    if n < 1:
        raise InvalidInputError("need at least one position")
    targets = np.asarray(targets)
    if targets.shape != (n,):
        raise ContractViolationError("targets shape must match logit positions")
    if targets.min() < 0 or targets.max() >= class_count:
        raise ContractViolationError("target class out of range")

    z = logits.astype(np.float64)
    z_max = z.max(axis=1, keepdims=True)
    exp = np.exp(z - z_max)
    denom = exp.sum(axis=1, keepdims=True)
    log_p = (z - z_max) - np.log(denom)
    rows = np.arange(n)
    # fsum is correctly rounded, so the mean is exactly invariant to
    # shuffling the (position, target) pairs
    loss = -math.fsum(log_p[rows, targets]) / n
    grad = exp / denom
    grad[rows, targets] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype)
