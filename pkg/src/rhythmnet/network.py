"""The residual 1D convolutional network for rhythm sequence labeling.

Layout: a stem convolution with its own batch-norm/ReLU, a stack of
pre-activation residual blocks (the first block skips its first
pre-activation so the stem is not normalized twice), and a tail of
batch-norm, ReLU, and a time-distributed dense head producing one class
distribution per output position. Alternate blocks subsample time by 2 with
a max-pooled shortcut; channel growth on the shortcut is handled by
zero-padding new channels.

`forward` in train mode records a tape of saved activations; `backward`
consumes it and returns gradients for every trainable parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import pad_to_stride, robust_normalize
from .errors import ConfigError, ContractViolationError, InvalidInputError, StateError

DTYPE = np.float32


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture ledger; every shape in the network derives from this."""

    residual_blocks: int = 16
    convs_per_block: int = 2
    filter_len: int = 16
    base_filters: int = 64
    widen_every: int = 4
    subsample_every: int = 2
    dropout_rate: float = 0.2
    class_count: int = 14
    input_hz: int = 200

    def __post_init__(self):
        if self.residual_blocks < 0 or self.convs_per_block < 1:
            raise ConfigError("residual_blocks must be >= 0, convs_per_block >= 1")
        if self.filter_len < 1 or self.base_filters < 1 or self.class_count < 2:
            raise ConfigError("filter_len, base_filters, class_count out of range")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.residual_blocks:
            if self.residual_blocks % self.widen_every:
                raise ConfigError(
                    f"residual_blocks {self.residual_blocks} not divisible by "
                    f"widen_every {self.widen_every}")
            if self.residual_blocks % self.subsample_every:
                raise ConfigError(
                    f"residual_blocks {self.residual_blocks} not divisible by "
                    f"subsample_every {self.subsample_every}")

    @property
    def subsample_stages(self) -> int:
        return self.residual_blocks // self.subsample_every if self.residual_blocks else 0

    @property
    def output_stride(self) -> int:
        return 2 ** self.subsample_stages

    def block_channels(self, index: int) -> int:
        return self.base_filters * (1 + index // self.widen_every)

    @property
    def channel_schedule(self) -> list[int]:
        return [self.block_channels(i) for i in range(self.residual_blocks)]

    def to_dict(self) -> dict:
        return {
            "residual_blocks": self.residual_blocks,
            "convs_per_block": self.convs_per_block,
            "filter_len": self.filter_len,
            "base_filters": self.base_filters,
            "widen_every": self.widen_every,
            "subsample_every": self.subsample_every,
            "dropout_rate": self.dropout_rate,
            "class_count": self.class_count,
            "input_hz": self.input_hz,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


@dataclass(frozen=True)
class BlockPlan:
    index: int
    in_channels: int
    out_channels: int
    stride: int
    preact_first: bool  # False only for block 0, which follows the stem


@dataclass(frozen=True)
class NetworkPlan:
    stem_channels: int
    blocks: tuple[BlockPlan, ...]
    tail_channels: int
    output_stride: int


def make_plan(config: NetworkConfig) -> NetworkPlan:
    """Expand the configuration into explicit per-block shapes."""
    blocks = []
    in_ch = config.base_filters
    for i in range(config.residual_blocks):
        out_ch = config.block_channels(i)
        stride = 2 if i % config.subsample_every == 0 else 1
        blocks.append(BlockPlan(i, in_ch, out_ch, stride, preact_first=i > 0))
        in_ch = out_ch
    return NetworkPlan(
        stem_channels=config.base_filters,
        blocks=tuple(blocks),
        tail_channels=in_ch,
        output_stride=config.output_stride,
    )


def conv_layer_count(config: NetworkConfig) -> int:
    return config.residual_blocks * config.convs_per_block + 1


def trainable_names(params: dict[str, np.ndarray]) -> list[str]:
    """Parameter names excluding batch-norm running statistics."""
    return [n for n in params if not n.endswith((".rmean", ".rvar"))]


def parameter_count(params: dict[str, np.ndarray]) -> int:
    return sum(params[n].size for n in trainable_names(params))


def _he_conv(rng: np.random.Generator, out_ch: int, in_ch: int, k: int) -> np.ndarray:
    std = np.sqrt(2.0 / (in_ch * k))
    return (rng.standard_normal((out_ch, in_ch, k)) * std).astype(DTYPE)


def _add_bn(params: dict, prefix: str, channels: int) -> None:
    params[f"{prefix}.gamma"] = np.ones(channels, dtype=DTYPE)
    params[f"{prefix}.beta"] = np.zeros(channels, dtype=DTYPE)
    params[f"{prefix}.rmean"] = np.zeros(channels, dtype=DTYPE)
    params[f"{prefix}.rvar"] = np.ones(channels, dtype=DTYPE)


def build(config: NetworkConfig,
          rng: np.random.Generator) -> tuple[dict[str, np.ndarray], NetworkPlan]:
    """Initialize all parameters and return them with the layer plan.

    Convolutions draw from a zero-mean Gaussian with std sqrt(2 / fan_in);
    the dense head starts at zero so a fresh network scores every class
    uniformly. Batch-norm starts as the identity with unit running variance.
    """
    plan = make_plan(config)
    params: dict[str, np.ndarray] = {}

    params["stem.conv.w"] = _he_conv(rng, config.base_filters, 1, config.filter_len)
    params["stem.conv.b"] = np.zeros(config.base_filters, dtype=DTYPE)
    _add_bn(params, "stem.bn", config.base_filters)

    for bp in plan.blocks:
        prefix = f"block{bp.index:02d}"
        for j in range(config.convs_per_block):
            conv_in = bp.in_channels if j == 0 else bp.out_channels
            if j > 0 or bp.preact_first:
                _add_bn(params, f"{prefix}.bn{j}", conv_in)
            params[f"{prefix}.conv{j}.w"] = _he_conv(
                rng, bp.out_channels, conv_in, config.filter_len)
            params[f"{prefix}.conv{j}.b"] = np.zeros(bp.out_channels, dtype=DTYPE)

    _add_bn(params, "tail.bn", plan.tail_channels)
    params["tail.dense.w"] = np.zeros((config.class_count, plan.tail_channels),
                                      dtype=DTYPE)
    params["tail.dense.b"] = np.zeros(config.class_count, dtype=DTYPE)

    _check_structure(config, plan, params)
    return params, plan


def _check_structure(config: NetworkConfig, plan: NetworkPlan,
                     params: dict[str, np.ndarray]) -> None:
    """Structural depth-ledger assertions, run at build time."""
    convs = sum(1 for n in params if ".conv" in n and n.endswith(".w"))
    if convs != conv_layer_count(config):
        raise ConfigError(
            f"built {convs} conv layers, ledger says {conv_layer_count(config)}")
    subsampled = sum(1 for bp in plan.blocks if bp.stride == 2)
    if 2 ** subsampled != config.output_stride:
        raise ConfigError("subsampling stages disagree with output stride")
    for bp in plan.blocks:
        if bp.out_channels < bp.in_channels:
            raise ConfigError("channel schedule must be non-decreasing")


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

@dataclass
class _BnReluTape:
    bn_ctx: kernels.BatchNormCtx
    relu_in: np.ndarray


@dataclass
class _BlockTape:
    preact: _BnReluTape | None
    conv_in: list[np.ndarray]
    inner: list[_BnReluTape]        # pre-activation before conv j >= 1
    drop_mask: list[np.ndarray]
    pool_idx: np.ndarray | None
    pool_in_time: int


@dataclass
class _Tape:
    x: np.ndarray
    stem: _BnReluTape
    blocks: list[_BlockTape] = field(default_factory=list)
    tail: _BnReluTape | None = None
    dense_in: np.ndarray | None = None
    out_shape: tuple[int, int, int] = (0, 0, 0)


def _bn_forward(params, name, x, mode, update):
    y, ctx, rm, rv = kernels.batchnorm(
        x, params[f"{name}.gamma"], params[f"{name}.beta"],
        params[f"{name}.rmean"], params[f"{name}.rvar"], mode)
    if update:
        params[f"{name}.rmean"] = rm
        params[f"{name}.rvar"] = rv
    return y, ctx


def forward(params: dict[str, np.ndarray], config: NetworkConfig, x: np.ndarray,
            mode: str = "train", rng: np.random.Generator | None = None):
    """Run the network on a batch (B, 1, T); T must be divisible by the
    output stride (padding is the data layer's job).

    Returns (logits, tape): logits are (B, T / output_stride, class_count);
    tape is None in eval mode. Train mode advances the batch-norm running
    statistics stored in `params` and needs `rng` when dropout is active.
    """
    if x.ndim != 3:
        raise ContractViolationError(f"expected (batch, 1, time), got {x.shape}")
    if x.shape[2] % config.output_stride:
        raise ContractViolationError(
            f"time {x.shape[2]} not divisible by output stride "
            f"{config.output_stride}")
    if mode not in ("train", "eval"):
        raise ContractViolationError(f"unknown mode {mode!r}")
    train = mode == "train"
    if train and config.dropout_rate > 0.0 and rng is None:
        raise StateError("train-mode forward needs an rng for dropout")
    plan = make_plan(config)

    y = kernels.conv1d(x, params["stem.conv.w"], params["stem.conv.b"], stride=1)
    y, bn_ctx = _bn_forward(params, "stem.bn", y, mode, train)
    tape = _Tape(x=x, stem=_BnReluTape(bn_ctx, y)) if train else None
    y = kernels.relu(y)

    for bp in plan.blocks:
        block_in = y
        bt = _BlockTape(None, [], [], [], None, block_in.shape[2]) if train else None
        prefix = f"block{bp.index:02d}"

        h = y
        if bp.preact_first:
            h, ctx = _bn_forward(params, f"{prefix}.bn0", h, mode, train)
            if train:
                bt.preact = _BnReluTape(ctx, h)
            h = kernels.relu(h)
        if train:
            bt.conv_in.append(h)
        h = kernels.conv1d(h, params[f"{prefix}.conv0.w"],
                           params[f"{prefix}.conv0.b"], stride=bp.stride)

        for j in range(1, config.convs_per_block):
            h, ctx = _bn_forward(params, f"{prefix}.bn{j}", h, mode, train)
            if train:
                bt.inner.append(_BnReluTape(ctx, h))
            h = kernels.relu(h)
            h, mask = kernels.dropout(h, config.dropout_rate, rng, mode)
            if train:
                bt.drop_mask.append(mask)
                bt.conv_in.append(h)
            h = kernels.conv1d(h, params[f"{prefix}.conv{j}.w"],
                               params[f"{prefix}.conv{j}.b"], stride=1)

        shortcut = block_in
        if bp.stride == 2:
            shortcut, idx = kernels.maxpool1d(shortcut, 2, 2)
            if train:
                bt.pool_idx = idx
        if bp.out_channels > bp.in_channels:
            grown = np.zeros((shortcut.shape[0], bp.out_channels, shortcut.shape[2]),
                             dtype=shortcut.dtype)
            grown[:, :bp.in_channels, :] = shortcut
            shortcut = grown
        if h.shape != shortcut.shape:
            raise StateError(
                f"block {bp.index}: main path {h.shape} vs shortcut {shortcut.shape}")
        y = h + shortcut
        if train:
            tape.blocks.append(bt)

    y, bn_ctx = _bn_forward(params, "tail.bn", y, mode, train)
    if train:
        tape.tail = _BnReluTape(bn_ctx, y)
    y = kernels.relu(y)

    batch, channels, out_time = y.shape
    flat = np.ascontiguousarray(y.transpose(0, 2, 1)).reshape(-1, channels)
    logits = kernels.dense(flat, params["tail.dense.w"], params["tail.dense.b"])
    if train:
        tape.dense_in = flat
        tape.out_shape = (batch, out_time, config.class_count)
    return logits.reshape(batch, out_time, config.class_count), tape


def backward(params: dict[str, np.ndarray], config: NetworkConfig, tape: _Tape,
             logit_grad: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the mean loss w.r.t. every trainable parameter.

    Requires the tape from a train-mode forward on the same batch. Residual
    additions sum gradients from both paths; zero-padded shortcut channels
    contribute nothing.
    """
    if tape is None or tape.tail is None or tape.dense_in is None:
        raise StateError("backward needs the tape from a train-mode forward")
    if logit_grad.shape != tape.out_shape:
        raise ContractViolationError(
            f"logit_grad shape {logit_grad.shape}, expected {tape.out_shape}")
    plan = make_plan(config)
    grads: dict[str, np.ndarray] = {}

    batch, out_time, classes = tape.out_shape
    g2d = np.ascontiguousarray(logit_grad.reshape(batch * out_time, classes))
    lg = kernels.dense_backward(tape.dense_in, params["tail.dense.w"], g2d)
    grads["tail.dense.w"] = lg.param_grads["weights"]
    grads["tail.dense.b"] = lg.param_grads["bias"]
    channels = tape.dense_in.shape[1]
    g = np.ascontiguousarray(
        lg.input_grad.reshape(batch, out_time, channels).transpose(0, 2, 1))

    g = kernels.relu_backward(tape.tail.relu_in, g)
    lg = kernels.batchnorm_backward(tape.tail.bn_ctx, g)
    grads["tail.bn.gamma"] = lg.param_grads["gamma"]
    grads["tail.bn.beta"] = lg.param_grads["beta"]
    g = lg.input_grad

    for bp, bt in zip(reversed(plan.blocks), reversed(tape.blocks)):
        prefix = f"block{bp.index:02d}"
        g_out = g

        gm = g_out
        for j in reversed(range(1, config.convs_per_block)):
            lg = kernels.conv1d_backward(
                bt.conv_in[j], params[f"{prefix}.conv{j}.w"], 1, gm)
            grads[f"{prefix}.conv{j}.w"] = lg.param_grads["weights"]
            grads[f"{prefix}.conv{j}.b"] = lg.param_grads["bias"]
            gm = lg.input_grad
            gm = kernels.dropout_backward(bt.drop_mask[j - 1], config.dropout_rate, gm)
            gm = kernels.relu_backward(bt.inner[j - 1].relu_in, gm)
            lg = kernels.batchnorm_backward(bt.inner[j - 1].bn_ctx, gm)
            grads[f"{prefix}.bn{j}.gamma"] = lg.param_grads["gamma"]
            grads[f"{prefix}.bn{j}.beta"] = lg.param_grads["beta"]
            gm = lg.input_grad

        lg = kernels.conv1d_backward(
            bt.conv_in[0], params[f"{prefix}.conv0.w"], bp.stride, gm)
        grads[f"{prefix}.conv0.w"] = lg.param_grads["weights"]
        grads[f"{prefix}.conv0.b"] = lg.param_grads["bias"]
        gm = lg.input_grad
        if bp.preact_first:
            gm = kernels.relu_backward(bt.preact.relu_in, gm)
            lg = kernels.batchnorm_backward(bt.preact.bn_ctx, gm)
            grads[f"{prefix}.bn0.gamma"] = lg.param_grads["gamma"]
            grads[f"{prefix}.bn0.beta"] = lg.param_grads["beta"]
            gm = lg.input_grad

        gs = g_out[:, :bp.in_channels, :]  # padded channels get no gradient
        if bp.stride == 2:
            gs = kernels.maxpool1d_backward(bt.pool_idx, bt.pool_in_time, gs)
        g = gm + gs

    g = kernels.relu_backward(tape.stem.relu_in, g)
    lg = kernels.batchnorm_backward(tape.stem.bn_ctx, g)
    grads["stem.bn.gamma"] = lg.param_grads["gamma"]
    grads["stem.bn.beta"] = lg.param_grads["beta"]
    g = lg.input_grad
    lg = kernels.conv1d_backward(tape.x, params["stem.conv.w"], 1, g)
    grads["stem.conv.w"] = lg.param_grads["weights"]
    grads["stem.conv.b"] = lg.param_grads["bias"]
    return grads


def predict_record(params: dict[str, np.ndarray], config: NetworkConfig,
                   samples: np.ndarray) -> np.ndarray:
    """Label every output position of one record (argmax over classes).

    Normalizes and pads internally; ties break to the lowest class index.
    """
    if len(samples) == 0:
        raise InvalidInputError("cannot predict on an empty signal")
    x = pad_to_stride(robust_normalize(samples), config.output_stride)
    logits, _ = forward(params, config, x[None, None, :], mode="eval")
    return np.argmax(logits[0], axis=1).astype(np.int64)


def predict_proba_record(params: dict[str, np.ndarray], config: NetworkConfig,
                         samples: np.ndarray) -> np.ndarray:
    """Per-position class probabilities for one record."""
    if len(samples) == 0:
        raise InvalidInputError("cannot predict on an empty signal")
    x = pad_to_stride(robust_normalize(samples), config.output_stride)
    logits, _ = forward(params, config, x[None, None, :], mode="eval")
    z = logits[0].astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)
