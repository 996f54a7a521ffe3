"""Differentiable primitives on (N, H, W, C) tensors.

Convolutions are decomposed per kernel offset into (N*H*W, Cin) x
(Cin, Cout) matrix products, which keeps peak memory at one padded copy of
the input while still running on BLAS.  Each op wires an explicit backward
closure; see tensor.Tensor.backward for the traversal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, make_result

PRIMITIVE_KINDS = (
    "batchnorm",
    "relu",
    "maxpool2",
    "maxpool3s1",
    "upsample2",
    "sigmoid",
    "dropout",
    "conv_transpose2",
    "concat",
)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Convolutions


def conv2d_same(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """'same' 2D convolution: k x k kernels, stride 1, zero padding k//2.

    kernels has shape (k, k, Cin, Cout); bias (Cout,).  Output spatial size
    equals the input spatial size.
    """
    x, kernels, bias = _as_tensor(x), _as_tensor(kernels), _as_tensor(bias)
    kh, kw, cin, cout = kernels.shape
    if kh != kw or kh % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got {kh}x{kw}")
    n, h, w, xc = x.shape
    if xc != cin:
        raise ValueError(f"input has {xc} channels, kernels expect {cin}")
    pad = kh // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    kd = kernels.data
    out_flat = np.empty((n * h * w, cout))
    out_flat[:] = bias.data
    for dy in range(kh):
        for dx in range(kw):
            seg = xp[:, dy : dy + h, dx : dx + w, :].reshape(-1, cin)
            out_flat += seg @ kd[dy, dx]
    out = make_result(out_flat.reshape(n, h, w, cout), (x, kernels, bias))
    if out.requires_grad:

        def _backward(grad: np.ndarray) -> None:
            go = grad.reshape(-1, cout)
            if bias.requires_grad:
                bias.accumulate_grad(go.sum(axis=0))
            need_x = x.requires_grad
            need_k = kernels.requires_grad
            gxp = np.zeros_like(xp) if need_x else None
            gk = np.empty_like(kd) if need_k else None
            for dy in range(kh):
                for dx in range(kw):
                    seg = xp[:, dy : dy + h, dx : dx + w, :].reshape(-1, cin)
                    if need_k:
                        gk[dy, dx] = seg.T @ go
                    if need_x:
                        gxp[:, dy : dy + h, dx : dx + w, :] += (go @ kd[dy, dx].T).reshape(n, h, w, cin)
            if need_k:
                kernels.accumulate_grad(gk)
            if need_x:
                x.accumulate_grad(gxp[:, pad : pad + h, pad : pad + w, :])

        out._backward = _backward
    return out


def conv_transpose2(
    x: Tensor, kernels: Tensor, bias: Tensor, target_hw: tuple[int, int] | None = None
) -> Tensor:
    """Learned x2 upsampling: 2x2 transposed convolution with stride 2.

    kernels has shape (2, 2, Cin, Cout).  When target_hw asks for one more
    row/column than 2H x 2W, the output is zero-padded at the bottom/right.
    """
    x, kernels, bias = _as_tensor(x), _as_tensor(kernels), _as_tensor(bias)
    if kernels.shape[:2] != (2, 2):
        raise ValueError(f"transposed kernel must be 2x2, got {kernels.shape[:2]}")
    n, h, w, cin = x.shape
    if cin != kernels.shape[2]:
        raise ValueError(f"input has {cin} channels, kernels expect {kernels.shape[2]}")
    cout = kernels.shape[3]
    kd = kernels.data
    xflat = x.data.reshape(-1, cin)
    raw = np.empty((n, 2 * h, 2 * w, cout))
    for dy in (0, 1):
        for dx in (0, 1):
            raw[:, dy::2, dx::2, :] = (xflat @ kd[dy, dx]).reshape(n, h, w, cout)
    raw += bias.data
    data, pad_h, pad_w = _pad_to_target(raw, target_hw)
    out = make_result(data, (x, kernels, bias))
    if out.requires_grad:

        def _backward(grad: np.ndarray) -> None:
            g = grad[:, : 2 * h, : 2 * w, :]
            if bias.requires_grad:
                bias.accumulate_grad(g.sum(axis=(0, 1, 2)))
            gx = np.zeros((n * h * w, cin)) if x.requires_grad else None
            gk = np.empty_like(kd) if kernels.requires_grad else None
            for dy in (0, 1):
                for dx in (0, 1):
                    gs = g[:, dy::2, dx::2, :].reshape(-1, cout)
                    if gk is not None:
                        gk[dy, dx] = xflat.T @ gs
                    if gx is not None:
                        gx += gs @ kd[dy, dx].T
            if gk is not None:
                kernels.accumulate_grad(gk)
            if gx is not None:
                x.accumulate_grad(gx.reshape(n, h, w, cin))

        out._backward = _backward
    return out


def _pad_to_target(raw: np.ndarray, target_hw: tuple[int, int] | None) -> tuple[np.ndarray, int, int]:
    if target_hw is None:
        return raw, 0, 0
    th, tw = target_hw
    h2, w2 = raw.shape[1], raw.shape[2]
    pad_h, pad_w = th - h2, tw - w2
    if pad_h not in (0, 1) or pad_w not in (0, 1):
        raise ValueError(f"target {target_hw} not reachable from doubled size ({h2}, {w2})")
    if pad_h or pad_w:
        raw = np.pad(raw, ((0, 0), (0, pad_h), (0, pad_w), (0, 0)))
    return raw, pad_h, pad_w


# ---------------------------------------------------------------------------
# Pointwise


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = make_result(np.maximum(x.data, 0.0), (x,))
    if out.requires_grad:
        mask = x.data > 0

        def _backward(grad: np.ndarray) -> None:
            x.accumulate_grad(grad * mask)

        out._backward = _backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = make_result(s, (x,))
    if out.requires_grad:

        def _backward(grad: np.ndarray) -> None:
            x.accumulate_grad(grad * s * (1.0 - s))

        out._backward = _backward
    return out


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, mode: str) -> Tensor:
    """Inverted dropout: train mode keeps with prob 1-p and rescales."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode != "train" or p == 0.0:
        return _as_tensor(x)
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    x = _as_tensor(x)
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    out = make_result(x.data * mask, (x,))
    if out.requires_grad:

        def _backward(grad: np.ndarray) -> None:
            x.accumulate_grad(grad * mask)

        out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# Pooling and upsampling


def maxpool2(x: Tensor, ceil_mode: bool = False) -> Tensor:
    """2x2 stride-2 max pooling.

    Default floor semantics drop a trailing odd row/column (25 -> 12);
    ceil_mode instead edge-pads so every input pixel is covered (25 -> 13).
    """
    x = _as_tensor(x)
    n, h, w, c = x.shape
    if ceil_mode:
        ph, pw = h % 2, w % 2
        data = np.pad(x.data, ((0, 0), (0, ph), (0, pw), (0, 0)), mode="edge") if (ph or pw) else x.data
    else:
        ph = pw = 0
        data = x.data[:, : h - h % 2, : w - w % 2, :]
    hp, wp = data.shape[1], data.shape[2]
    ho, wo = hp // 2, wp // 2
    blocks = data.reshape(n, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, 4)
    idx = blocks.argmax(axis=-1)
    out_data = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    out = make_result(out_data, (x,))
    if out.requires_grad:

        def _backward(grad: np.ndarray) -> None:
            gb = np.zeros((n, ho, wo, c, 4))
            np.put_along_axis(gb, idx[..., None], grad[..., None], axis=-1)
            gp = gb.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, hp, wp, c)
            if ceil_mode:
                if ph:
                    gp[:, h - 1, :, :] += gp[:, h, :, :]
                if pw:
                    gp[:, :, w - 1, :] += gp[:, :, w, :]
                gx = gp[:, :h, :w, :]
            else:
                gx = np.zeros((n, h, w, c))
                gx[:, :hp, :wp, :] = gp
            x.accumulate_grad(gx)

        out._backward = _backward
    return out


def maxpool3s1(x: Tensor) -> Tensor:
    """3x3 max pooling with stride 1 and same padding (-inf outside)."""
    x = _as_tensor(x)
    n, h, w, c = x.shape
    xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1), (0, 0)), constant_values=-np.inf)
    windows = sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(n, h, w, c, 9)
    idx = windows.argmax(axis=-1)
    out_data = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    out = make_result(out_data, (x,))
    if out.requires_grad:

        def _backward(grad: np.ndarray) -> None:
            dy = idx // 3
            dx = idx % 3
            nn, yy, xx, cc = np.indices((n, h, w, c), sparse=True)
            gxp = np.zeros((n, h + 2, w + 2, c))
            np.add.at(gxp, (nn, yy + dy, xx + dx, cc), grad)
            x.accumulate_grad(gxp[:, 1 : 1 + h, 1 : 1 + w, :])

        out._backward = _backward
    return out


def upsample2(x: Tensor, target_hw: tuple[int, int] | None = None) -> Tensor:
    """Nearest-neighbor x2 upsampling, zero-padded by one row/column when
    the target size is odd (e.g. 12 -> 25)."""
    x = _as_tensor(x)
    n, h, w, c = x.shape
    up = x.data.repeat(2, axis=1).repeat(2, axis=2)
    data, _, _ = _pad_to_target(up, target_hw)
    out = make_result(data, (x,))
    if out.requires_grad:

        def _backward(grad: np.ndarray) -> None:
            g = grad[:, : 2 * h, : 2 * w, :]
            x.accumulate_grad(g.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4)))

        out._backward = _backward
    return out


def concat(tensors: list[Tensor]) -> Tensor:
    """Channel-wise concatenation."""
    tensors = [_as_tensor(t) for t in tensors]
    base = tensors[0].shape[:3]
    for t in tensors[1:]:
        if t.shape[:3] != base:
            raise ValueError(f"concat shape mismatch: {t.shape[:3]} vs {base}")
    out = make_result(np.concatenate([t.data for t in tensors], axis=-1), tuple(tensors))
    if out.requires_grad:
        sizes = [t.shape[-1] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def _backward(grad: np.ndarray) -> None:
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    t.accumulate_grad(grad[..., lo:hi])

        out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# Batch normalization


@dataclass
class BNState:
    """Running statistics (updated in train mode, used in eval mode)."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BNState, mode: str) -> Tensor:
    """Per-channel normalization over (N, H, W) with learned scale/shift."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got '{mode}'")
    axes = (0, 1, 2)
    if mode == "train":
        m = x.data.shape[0] * x.data.shape[1] * x.data.shape[2]
        mu = x.data.mean(axis=axes)
        xc = x.data - mu
        var = np.mean(xc * xc, axis=axes)
        ivstd = 1.0 / np.sqrt(var + state.eps)
        xhat = xc * ivstd
        mom = state.momentum
        state.running_mean = mom * state.running_mean + (1.0 - mom) * mu
        state.running_var = mom * state.running_var + (1.0 - mom) * var
    else:
        ivstd = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x.data - state.running_mean) * ivstd
    out = make_result(gamma.data * xhat + beta.data, (x, gamma, beta))
    if out.requires_grad:

        def _backward(grad: np.ndarray) -> None:
            if beta.requires_grad:
                beta.accumulate_grad(grad.sum(axis=axes))
            if gamma.requires_grad:
                gamma.accumulate_grad((grad * xhat).sum(axis=axes))
            if x.requires_grad:
                dxhat = grad * gamma.data
                if mode == "train":
                    # Full train-mode gradient through the batch statistics.
                    term = m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
                    x.accumulate_grad(ivstd / m * term)
                else:
                    x.accumulate_grad(dxhat * ivstd)

        out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# Losses and metrics


def dice_loss(pred: Tensor, target: np.ndarray, smooth: float = 1e-7) -> Tensor:
    """1 - 2 sum(t p) / (sum t + sum p), averaged over the batch.

    The smooth term only guards the empty/empty case; target must be
    binary.
    """
    pred = _as_tensor(pred)
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ValueError(f"target shape {t.shape} != prediction shape {pred.shape}")
    axes = tuple(range(1, pred.ndim))
    inter = (pred.data * t).sum(axis=axes)
    denom = pred.data.sum(axis=axes) + t.sum(axis=axes)
    per_example = 1.0 - (2.0 * inter + smooth) / (denom + smooth)
    out = make_result(np.asarray(per_example.mean()), (pred,))
    if out.requires_grad:
        batch = pred.shape[0]

        def _backward(grad: np.ndarray) -> None:
            scale = float(grad) / batch
            d = denom + smooth
            shape = (-1,) + (1,) * (pred.ndim - 1)
            gp = -2.0 * t / d.reshape(shape) + ((2.0 * inter + smooth) / (d * d)).reshape(shape)
            pred.accumulate_grad(scale * gp)

        out._backward = _backward
    return out


def bce_loss(pred: Tensor, target: np.ndarray, clamp: float = 1e-7) -> Tensor:
    """Mean binary cross-entropy with predictions clamped away from {0, 1}."""
    pred = _as_tensor(pred)
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ValueError(f"target shape {t.shape} != prediction shape {pred.shape}")
    pc = np.clip(pred.data, clamp, 1.0 - clamp)
    values = -(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc))
    out = make_result(np.asarray(values.mean()), (pred,))
    if out.requires_grad:
        active = (pred.data > clamp) & (pred.data < 1.0 - clamp)

        def _backward(grad: np.ndarray) -> None:
            gp = np.where(active, (-t / pc + (1.0 - t) / (1.0 - pc)) / t.size, 0.0)
            pred.accumulate_grad(float(grad) * gp)

        out._backward = _backward
    return out


def loss(kind: str, pred: Tensor, target: np.ndarray) -> Tensor:
    if kind == "dice":
        return dice_loss(pred, target)
    if kind == "bce":
        return bce_loss(pred, target)
    raise ValueError(f"unknown loss '{kind}' (expected 'dice' or 'bce')")


def pixel_accuracy(prob: np.ndarray, target: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of pixels whose thresholded prediction matches the target."""
    prob = np.asarray(prob, dtype=np.float64)
    target = np.asarray(target)
    return float(((prob >= threshold) == (target >= 0.5)).mean())


# ---------------------------------------------------------------------------
# Name-based dispatch, for callers that treat the primitive set as data.


def apply_primitive(kind: str, x, **params) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "maxpool2":
        return maxpool2(x, ceil_mode=params.get("ceil_mode", False))
    if kind == "maxpool3s1":
        return maxpool3s1(x)
    if kind == "upsample2":
        return upsample2(x, target_hw=params.get("target_hw"))
    if kind == "dropout":
        return dropout(x, params["p"], params.get("rng"), params.get("mode", "eval"))
    if kind == "batchnorm":
        return batchnorm(x, params["gamma"], params["beta"], params["state"], params.get("mode", "eval"))
    if kind == "conv_transpose2":
        return conv_transpose2(x, params["kernels"], params["bias"], target_hw=params.get("target_hw"))
    if kind == "concat":
        return concat(list(x))
    raise ValueError(f"unknown primitive '{kind}' (expected one of {PRIMITIVE_KINDS})")
