"""3D convolution primitives with exact reverse-mode gradients.

All ops take float64 tensors shaped (N, C, X, Y, Z). Every layer uses kernel
3, stride 2, padding 1. Convolutions are cross-correlations (no kernel flip).
Shape laws:

    conv:       out = floor((in - 1) / 2) + 1
    transpose:  out = 2*in - 1 + output_padding   (output_padding in {0,1})

The transpose is implemented as scatter-add into a zero-padded buffer, which
makes it the exact adjoint of the conv for matching shapes; output_padding
extends the far edge with the ordinary transposed-conv sums (needed to mirror
an even-sized encoder level).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import ShapeError

KERNEL = 3
STRIDE = 2
PADDING = 1


def conv_out_dim(d: int) -> int:
    out = (d - 1) // 2 + 1
    if out < 1:
        raise ShapeError(f"axis size {d} collapses under stride-2 conv")
    return out


def transpose_out_dim(d: int, output_padding: int = 0) -> int:
    return 2 * d - 1 + output_padding


def _offsets():
    for kx in range(KERNEL):
        for ky in range(KERNEL):
            for kz in range(KERNEL):
                yield kx, ky, kz


def _pad_input(x: np.ndarray) -> np.ndarray:
    n, c, dx, dy, dz = x.shape
    xp = np.zeros((n, c, dx + 2, dy + 2, dz + 2), dtype=x.dtype)
    xp[:, :, 1 : dx + 1, 1 : dy + 1, 1 : dz + 1] = x
    return xp


def _strided_slice(a: np.ndarray, kx: int, ky: int, kz: int, ox: int, oy: int, oz: int):
    return a[
        :,
        :,
        kx : kx + 2 * ox - 1 : 2,
        ky : ky + 2 * oy - 1 : 2,
        kz : kz + 2 * oz - 1 : 2,
    ]


def conv3d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x (N,Ci,X,Y,Z), w (Co,Ci,3,3,3), b (Co,) -> (N,Co,ox,oy,oz)."""
    n, ci, dx, dy, dz = x.shape
    if w.shape[1] != ci:
        raise ShapeError(f"input channels {ci} != weight in_channels {w.shape[1]}")
    co = w.shape[0]
    ox, oy, oz = conv_out_dim(dx), conv_out_dim(dy), conv_out_dim(dz)
    xp = _pad_input(x)
    acc = np.zeros((co, n, ox, oy, oz), dtype=x.dtype)
    for kx, ky, kz in _offsets():
        xs = _strided_slice(xp, kx, ky, kz, ox, oy, oz)
        acc += np.tensordot(w[:, :, kx, ky, kz], xs, axes=([1], [1]))
    out = acc.transpose(1, 0, 2, 3, 4).copy()
    out += b[None, :, None, None, None]
    return out


def conv3d_backward(g: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Gradients of sum(g * conv3d_forward(x, w, b)) -> (dx, dw, db)."""
    n, ci, dx_, dy_, dz_ = x.shape
    co = w.shape[0]
    _, _, ox, oy, oz = g.shape
    xp = _pad_input(x)
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for kx, ky, kz in _offsets():
        xs = _strided_slice(xp, kx, ky, kz, ox, oy, oz)
        dw[:, :, kx, ky, kz] = np.tensordot(g, xs, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
        contrib = np.tensordot(g, w[:, :, kx, ky, kz], axes=([1], [0]))
        _strided_slice(dxp, kx, ky, kz, ox, oy, oz)[...] += np.moveaxis(
            contrib, -1, 1
        )
    db = g.sum(axis=(0, 2, 3, 4))
    dx = dxp[:, :, 1 : dx_ + 1, 1 : dy_ + 1, 1 : dz_ + 1]
    return dx, dw, db


def conv_transpose3d_forward(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    output_padding: tuple[int, int, int] = (0, 0, 0),
) -> np.ndarray:
    """x (N,Ci,X,Y,Z), w (Ci,Co,3,3,3), b (Co,) -> (N,Co,2X-1+opx,...)."""
    n, ci, dx, dy, dz = x.shape
    if w.shape[0] != ci:
        raise ShapeError(f"input channels {ci} != weight in_channels {w.shape[0]}")
    co = w.shape[1]
    if any(op not in (0, 1) for op in output_padding):
        raise ShapeError(f"output_padding must be 0 or 1 per axis, got {output_padding}")
    odx = transpose_out_dim(dx, output_padding[0])
    ody = transpose_out_dim(dy, output_padding[1])
    odz = transpose_out_dim(dz, output_padding[2])
    opad = np.zeros((n, co, 2 * dx + 1, 2 * dy + 1, 2 * dz + 1), dtype=x.dtype)
    for kx, ky, kz in _offsets():
        contrib = np.tensordot(x, w[:, :, kx, ky, kz], axes=([1], [0]))
        opad[
            :,
            :,
            kx : kx + 2 * dx - 1 : 2,
            ky : ky + 2 * dy - 1 : 2,
            kz : kz + 2 * dz - 1 : 2,
        ] += np.moveaxis(contrib, -1, 1)
    out = opad[:, :, 1 : 1 + odx, 1 : 1 + ody, 1 : 1 + odz].copy()
    out += b[None, :, None, None, None]
    return out


def conv_transpose3d_backward(
    g: np.ndarray,
    x: np.ndarray,
    w: np.ndarray,
    output_padding: tuple[int, int, int] = (0, 0, 0),
):
    n, ci, dx_, dy_, dz_ = x.shape
    co = w.shape[1]
    gpad = np.zeros((n, co, 2 * dx_ + 1, 2 * dy_ + 1, 2 * dz_ + 1), dtype=g.dtype)
    gpad[:, :, 1 : 1 + g.shape[2], 1 : 1 + g.shape[3], 1 : 1 + g.shape[4]] = g
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for kx, ky, kz in _offsets():
        gs = gpad[
            :,
            :,
            kx : kx + 2 * dx_ - 1 : 2,
            ky : ky + 2 * dy_ - 1 : 2,
            kz : kz + 2 * dz_ - 1 : 2,
        ]
        dw[:, :, kx, ky, kz] = np.tensordot(x, gs, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
        contrib = np.tensordot(gs, w[:, :, kx, ky, kz], axes=([1], [1]))
        dx += np.moveaxis(contrib, -1, 1)
    db = g.sum(axis=(0, 2, 3, 4))
    return dx, dw, db


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    return g * (x > 0.0)


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    return expit(x)


def sigmoid_backward(g: np.ndarray, out: np.ndarray) -> np.ndarray:
    return g * out * (1.0 - out)


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str,
    momentum: float = 0.1,
    eps: float = 1e-5,
):
    """Per-channel batch norm over (batch, spatial) axes.

    Returns (out, cache, new_running_mean, new_running_var). Running stats are
    never mutated in place; train mode returns the updated copies (with the
    unbiased variance, torch-style), eval mode returns the inputs unchanged.
    """
    axes = (0, 2, 3, 4)
    shape = (1, -1, 1, 1, 1)
    if mode == "train":
        count = x.shape[0] * x.shape[2] * x.shape[3] * x.shape[4]
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu.reshape(shape)) * inv_std.reshape(shape)
        unbiased = var * count / (count - 1) if count > 1 else var
        new_rm = (1.0 - momentum) * running_mean + momentum * mu
        new_rv = (1.0 - momentum) * running_var + momentum * unbiased
        cache = (xhat, inv_std, gamma)
    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(running_var + eps)
        xhat = (x - running_mean.reshape(shape)) * inv_std.reshape(shape)
        new_rm, new_rv = running_mean, running_var
        cache = (xhat, inv_std, gamma)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    out = gamma.reshape(shape) * xhat + beta.reshape(shape)
    return out, cache, new_rm, new_rv


def batchnorm_backward(g: np.ndarray, cache, mode: str):
    """Gradients through batchnorm_forward -> (dx, dgamma, dbeta).

    Train mode differentiates through the batch statistics; eval mode treats
    the running statistics as constants.
    """
    xhat, inv_std, gamma = cache
    axes = (0, 2, 3, 4)
    shape = (1, -1, 1, 1, 1)
    dgamma = (g * xhat).sum(axis=axes)
    dbeta = g.sum(axis=axes)
    if mode == "eval":
        dx = g * (gamma * inv_std).reshape(shape)
        return dx, dgamma, dbeta
    gs = gamma.reshape(shape) * g
    dx = inv_std.reshape(shape) * (
        gs
        - gs.mean(axis=axes).reshape(shape)
        - xhat * (gs * xhat).mean(axis=axes).reshape(shape)
    )
    return dx, dgamma, dbeta


def init_conv_params(rng, in_channels: int, out_channels: int, transpose: bool):
    """Seeded uniform +-1/sqrt(fan_in) with fan_in = in_channels * 27."""
    bound = 1.0 / np.sqrt(in_channels * KERNEL**3)
    if transpose:
        shape = (in_channels, out_channels, KERNEL, KERNEL, KERNEL)
    else:
        shape = (out_channels, in_channels, KERNEL, KERNEL, KERNEL)
    w = rng.uniform(-bound, bound, size=shape)
    b = rng.uniform(-bound, bound, size=out_channels)
    return w, b
