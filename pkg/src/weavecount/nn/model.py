"""U-Net style crossing-point segmenters.

Four variants share one skeleton: an encoder whose layers pool everywhere
except the deepest level, a decoder that doubles the spatial size back up
(with a zero-pad row/column where the halving was odd, e.g. 25 -> 12 -> 25),
skip concatenations wherever an encoder output of the same size exists,
and a 1x1 convolution + sigmoid head.

- "inc-dice":      multi-scale inception modules (3/5/7 kernels), Dice loss.
- "unet-th":       double conv blocks, BCE loss, Otsu threshold at analysis.
- "unet-dice":     double conv blocks, Dice loss, fixed 0.5 threshold.
- "orig-inc-dice": four-branch inception (1x1 / 3x3 / double 3x3 / pooled).

The last decoder layer has no skip partner: no encoder tensor exists at
full resolution because the first encoder layer already pools.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from ..imgproc import GrayImage
from .ops import (
    BNState,
    batchnorm,
    concat,
    conv2d_same,
    conv_transpose2,
    dropout,
    maxpool2,
    maxpool3s1,
    relu,
    sigmoid,
    upsample2,
)
from .tensor import Tensor

VARIANTS = ("inc-dice", "unet-th", "unet-dice", "orig-inc-dice")


@dataclass(frozen=True)
class NetConfig:
    variant: str = "inc-dice"
    depth: int = 5
    filters: tuple[int, ...] = (16, 32, 64, 64, 128)
    kernel_sizes: tuple[int, ...] = (3, 5, 7)
    dropout_p: float = 0.1
    loss: str = "dice"
    threshold_rule: str = "fixed-0.5"
    learning_rate: float = 1e-3
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant '{self.variant}' (expected one of {VARIANTS})")
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")
        if len(self.filters) != self.depth:
            raise ValueError(f"need {self.depth} filter counts, got {len(self.filters)}")
        if any(f < 1 for f in self.filters):
            raise ValueError("filter counts must be strictly positive")
        if not 0 <= self.dropout_p < 1:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.loss not in ("dice", "bce"):
            raise ValueError(f"loss must be 'dice' or 'bce', got '{self.loss}'")
        if self.threshold_rule not in ("fixed-0.5", "otsu"):
            raise ValueError(f"unknown threshold rule '{self.threshold_rule}'")

    def decoder_filters(self) -> tuple[int, ...]:
        """Mirror of the encoder counts; the extra full-resolution layer
        continues the halving (e.g. encoder 16/32/64/64/128 -> 64/32/16/8)."""
        mirrored = [self.filters[self.depth - 3 - i] for i in range(self.depth - 2)]
        mirrored.append(max(1, self.filters[0] // 2))
        return tuple(mirrored)

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def default_config(variant: str) -> NetConfig:
    if variant == "inc-dice":
        return NetConfig()
    if variant == "orig-inc-dice":
        return NetConfig(variant=variant, loss="dice")
    if variant == "unet-th":
        return NetConfig(
            variant=variant,
            filters=(14, 28, 56, 112, 224),
            kernel_sizes=(3,),
            dropout_p=0.25,
            loss="bce",
            threshold_rule="otsu",
            learning_rate=1e-4,
        )
    if variant == "unet-dice":
        return NetConfig(
            variant=variant,
            filters=(14, 28, 56, 112, 224),
            kernel_sizes=(3,),
            dropout_p=0.25,
            loss="dice",
            threshold_rule="fixed-0.5",
            learning_rate=1e-3,
        )
    raise ValueError(f"unknown variant '{variant}'")


def toy_config(variant: str = "inc-dice", depth: int = 3, n0: int = 2) -> NetConfig:
    """Small doubling-filter config for desk-scale experiments and tests."""
    base = default_config(variant)
    filters = tuple(n0 * 2**i for i in range(depth))
    return NetConfig(
        variant=base.variant,
        depth=depth,
        filters=filters,
        kernel_sizes=base.kernel_sizes,
        dropout_p=base.dropout_p,
        loss=base.loss,
        threshold_rule=base.threshold_rule,
        learning_rate=base.learning_rate,
    )


# ---------------------------------------------------------------------------
# Parameter containers


class _Registry:
    """Ordered parameter/buffer registry; declaration order defines the
    serialization layout."""

    def __init__(self) -> None:
        self.params: list[tuple[str, Tensor]] = []
        self.states: list[tuple[str, BNState]] = []

    def param(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, requires_grad=True)
        self.params.append((name, t))
        return t

    def bn(self, name: str, channels: int, momentum: float, eps: float) -> tuple[Tensor, Tensor, BNState]:
        gamma = self.param(f"{name}.gamma", np.ones(channels))
        beta = self.param(f"{name}.beta", np.zeros(channels))
        state = BNState(np.zeros(channels), np.ones(channels), momentum, eps)
        self.states.append((name, state))
        return gamma, beta, state


def _he_kernel(rng: np.random.Generator, k: int, cin: int, cout: int) -> np.ndarray:
    std = np.sqrt(2.0 / (k * k * cin))
    return rng.normal(0.0, std, size=(k, k, cin, cout))


class _Conv:
    def __init__(self, reg: _Registry, name: str, rng: np.random.Generator, k: int, cin: int, cout: int):
        self.kernels = reg.param(f"{name}.kernels", _he_kernel(rng, k, cin, cout))
        self.bias = reg.param(f"{name}.bias", np.zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d_same(x, self.kernels, self.bias)


class _TransposeConv:
    def __init__(self, reg: _Registry, name: str, rng: np.random.Generator, cin: int, cout: int):
        std = np.sqrt(2.0 / cin)
        self.kernels = reg.param(f"{name}.kernels", rng.normal(0.0, std, size=(2, 2, cin, cout)))
        self.bias = reg.param(f"{name}.bias", np.zeros(cout))

    def __call__(self, x: Tensor, target_hw: tuple[int, int]) -> Tensor:
        return conv_transpose2(x, self.kernels, self.bias, target_hw=target_hw)


class _BN:
    def __init__(self, reg: _Registry, name: str, channels: int, momentum: float, eps: float):
        self.gamma, self.beta, self.state = reg.bn(name, channels, momentum, eps)

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        return batchnorm(x, self.gamma, self.beta, self.state, mode)


class _Inception:
    """Parallel same convolutions at several kernel sizes, concatenated.

    Output channels = len(kernel_sizes) * n.
    """

    def __init__(self, reg, name, rng, cin: int, n: int, kernel_sizes: tuple[int, ...]):
        self.convs = [_Conv(reg, f"{name}.conv{k}", rng, k, cin, n) for k in kernel_sizes]
        self.out_channels = len(kernel_sizes) * n

    def __call__(self, x: Tensor) -> Tensor:
        return concat([conv(x) for conv in self.convs])


class _OrigInception:
    """Four-branch module: 1x1; 1x1 -> 3x3; 1x1 -> 3x3 -> 3x3; pooled 1x1.

    Each branch normalizes and rectifies its own output, so layers built
    from this module skip the outer BN/ReLU pair.
    """

    def __init__(self, reg, name, rng, cin: int, n: int, momentum: float, eps: float):
        def conv_bn(tag: str, k: int, c_in: int) -> tuple[_Conv, _BN]:
            return (
                _Conv(reg, f"{name}.{tag}", rng, k, c_in, n),
                _BN(reg, f"{name}.{tag}.bn", n, momentum, eps),
            )

        self.b1_conv, self.b1_bn = conv_bn("b1.conv1", 1, cin)
        self.b2_reduce, self.b2_reduce_bn = conv_bn("b2.reduce", 1, cin)
        self.b2_conv, self.b2_bn = conv_bn("b2.conv3", 3, n)
        self.b3_reduce, self.b3_reduce_bn = conv_bn("b3.reduce", 1, cin)
        self.b3_conv_a = _Conv(reg, f"{name}.b3.conv3a", rng, 3, n, n)
        self.b3_conv_b, self.b3_bn = conv_bn("b3.conv3b", 3, n)
        self.b4_conv, self.b4_bn = conv_bn("b4.conv1", 1, cin)
        self.out_channels = 4 * n

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        b1 = relu(self.b1_bn(self.b1_conv(x), mode))
        b2 = relu(self.b2_reduce_bn(self.b2_reduce(x), mode))
        b2 = relu(self.b2_bn(self.b2_conv(b2), mode))
        b3 = relu(self.b3_reduce_bn(self.b3_reduce(x), mode))
        b3 = relu(self.b3_bn(self.b3_conv_b(self.b3_conv_a(b3)), mode))
        b4 = relu(self.b4_bn(self.b4_conv(maxpool3s1(x)), mode))
        return concat([b1, b2, b3, b4])


class _DoubleConv:
    """conv-BN-ReLU twice, the plain U-Net layer unit."""

    def __init__(self, reg, name, rng, cin: int, cout: int, k: int, momentum: float, eps: float):
        self.conv_a = _Conv(reg, f"{name}.conv_a", rng, k, cin, cout)
        self.bn_a = _BN(reg, f"{name}.bn_a", cout, momentum, eps)
        self.conv_b = _Conv(reg, f"{name}.conv_b", rng, k, cout, cout)
        self.bn_b = _BN(reg, f"{name}.bn_b", cout, momentum, eps)
        self.out_channels = cout

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        x = relu(self.bn_a(self.conv_a(x), mode))
        return relu(self.bn_b(self.conv_b(x), mode))


# ---------------------------------------------------------------------------


def inception_forward(x: Tensor | np.ndarray, weights: list[tuple[Tensor, Tensor]]) -> Tensor:
    """Functional inception block: weights is [(kernels, bias), ...], one
    pair per kernel size; outputs are concatenated channel-wise."""
    return concat([conv2d_same(x, k, b) for k, b in weights])


def orig_inception_forward(x: Tensor | np.ndarray, module: _OrigInception, mode: str = "eval") -> Tensor:
    """Functional four-branch inception on an existing module's weights."""
    return module(x, mode)


class Network:
    """A built variant: configuration, layers, and parameter registry."""

    def __init__(self, config: NetConfig, seed: int = 0):
        self.config = config
        self.registry = _Registry()
        self.rng = np.random.default_rng(seed ^ 0x5EED)
        rng = np.random.default_rng(seed)
        reg = self.registry
        depth = config.depth
        momentum, eps = config.bn_momentum, config.bn_eps
        inception_like = config.variant in ("inc-dice", "orig-inc-dice")

        self.encoder: list = []
        channels = 1
        for i in range(depth):
            name = f"enc{i}"
            n = config.filters[i]
            if config.variant == "inc-dice":
                module = _Inception(reg, name, rng, channels, n, config.kernel_sizes)
                bn = _BN(reg, f"{name}.bn", module.out_channels, momentum, eps)
                self.encoder.append(("inception", module, bn))
            elif config.variant == "orig-inc-dice":
                module = _OrigInception(reg, name, rng, channels, n, momentum, eps)
                self.encoder.append(("orig", module, None))
            else:
                k = 7 if i == 0 else 3
                module = _DoubleConv(reg, name, rng, channels, n, k, momentum, eps)
                self.encoder.append(("double", module, None))
            channels = module.out_channels

        self.decoder: list = []
        dec_filters = config.decoder_filters()
        for j in range(depth - 1):
            name = f"dec{j}"
            n = dec_filters[j]
            skip_index = depth - 3 - j  # encoder output concatenated after this layer
            upconv = None
            if not inception_like:
                upconv = _TransposeConv(reg, f"{name}.up", rng, channels, channels)
            if config.variant == "inc-dice":
                module = _Inception(reg, name, rng, channels, n, config.kernel_sizes)
                bn = _BN(reg, f"{name}.bn", module.out_channels, momentum, eps)
                self.decoder.append(("inception", module, bn, upconv, skip_index))
            elif config.variant == "orig-inc-dice":
                module = _OrigInception(reg, name, rng, channels, n, momentum, eps)
                self.decoder.append(("orig", module, None, upconv, skip_index))
            else:
                module = _DoubleConv(reg, name, rng, channels, n, 3, momentum, eps)
                self.decoder.append(("double", module, None, upconv, skip_index))
            channels = module.out_channels
            if skip_index >= 0:
                channels += self.encoder_out_channels(skip_index)

        self.head = _Conv(reg, "head", rng, 1, channels, 1)
        # Crossing pixels are a small fraction of the map; starting the
        # head at a low-foreground prior keeps early Dice gradients on the
        # true-positive overlap instead of washing them out.
        self.head.bias.data[:] = -3.0

    def encoder_out_channels(self, i: int) -> int:
        return self.encoder[i][1].out_channels

    # -- forward -----------------------------------------------------------

    def _run_module(self, entry, x: Tensor, mode: str) -> Tensor:
        kind, module, bn = entry[0], entry[1], entry[2]
        if kind == "inception":
            return relu(bn(module(x), mode))
        return module(x, mode)

    def forward(self, x: np.ndarray | Tensor, mode: str = "eval", return_encoder: bool = False):
        """Probability map for a batch (N, H, W, 1); accepts a bare (H, W)
        array for single images."""
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got '{mode}'")
        if not isinstance(x, Tensor):
            arr = np.asarray(x, dtype=np.float64)
            if arr.ndim == 2:
                arr = arr[None, :, :, None]
            x = Tensor(arr)
        if x.ndim != 4 or x.shape[3] != 1:
            raise ValueError(f"expected (N, H, W, 1) input, got {x.shape}")
        depth = self.config.depth
        p = self.config.dropout_p
        rng = self.rng if mode == "train" else None

        sizes: list[tuple[int, int]] = []
        skips: list[Tensor] = []
        h = x
        for i, entry in enumerate(self.encoder):
            sizes.append((h.shape[1], h.shape[2]))
            h = self._run_module(entry, h, mode)
            if i < depth - 1:
                h = maxpool2(h)
            h = dropout(h, p, rng, mode)
            skips.append(h)

        for j, entry in enumerate(self.decoder):
            target = sizes[depth - 2 - j]
            upconv, skip_index = entry[3], entry[4]
            if upconv is not None:
                h = upconv(h, target)
            else:
                h = upsample2(h, target)
            h = self._run_module(entry, h, mode)
            if skip_index >= 0:
                h = concat([h, skips[skip_index]])
            h = dropout(h, p, rng, mode)

        out = sigmoid(self.head(h))
        if return_encoder:
            return out, skips
        return out

    def predict(self, img: GrayImage | np.ndarray) -> np.ndarray:
        """Eval-mode probability map as a plain (H, W) array."""
        arr = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
        return self.forward(arr, mode="eval").data[0, :, :, 0]

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.registry.params)

    def bn_states(self) -> list[tuple[str, BNState]]:
        return list(self.registry.states)

    def param_count(self) -> int:
        return int(sum(t.data.size for _, t in self.registry.params))

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Named views of every trainable array and BN buffer, in order."""
        out = [(name, t.data) for name, t in self.registry.params]
        for name, s in self.registry.states:
            out.append((f"{name}.running_mean", s.running_mean))
            out.append((f"{name}.running_var", s.running_var))
        return out

    def export_state(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.state_arrays()}

    def import_state(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.registry.params:
            t.data = np.array(state[name], dtype=np.float64)
        for name, s in self.registry.states:
            s.running_mean = np.array(state[f"{name}.running_mean"], dtype=np.float64)
            s.running_var = np.array(state[f"{name}.running_var"], dtype=np.float64)


def build_model(config: NetConfig, seed: int = 0) -> Network:
    """Construct a variant with He-initialized weights."""
    return Network(config, seed=seed)
