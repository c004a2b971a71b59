"""
Primitive operations: forward rules and vector-Jacobian products

Every tensor is a float64 numpy array. A primitive's forward takes the parent
values plus the node attributes; its vjp takes the output adjoint, the output
value and the parent values and returns one adjoint per parent, each shaped
like that parent.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, log_expit, softmax

from src.utils.errors import NumericalError, ShapeError

# log() clamps its argument here; clamping by more than LOG_CLAMP_RTOL is an error
LOG_FLOOR = 1e-300
LOG_CLAMP_RTOL = 1e-12

_LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class Primitive:
    """Forward rule and adjoint rule of one operation"""

    name: str
    forward: Callable[..., np.ndarray]
    vjp: Callable[..., tuple[np.ndarray, ...]]
    arity: Optional[int]


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum an adjoint over the axes numpy broadcasting added or stretched"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Overflow-free logistic sigmoid"""
    return np.asarray(expit(np.asarray(x, dtype=np.float64)))


def conv_padding(k: int) -> tuple[int, int]:
    """Zero padding (front, back) that keeps the sequence length for kernel size k"""
    return k // 2, (k - 1) // 2


# add / mul


def _add(a, b):
    _broadcast_check("add", a, b)
    return a + b


def _add_vjp(g, out, a, b):
    return unbroadcast(g, a.shape), unbroadcast(g, b.shape)


def _mul(a, b):
    _broadcast_check("mul", a, b)
    return a * b


def _mul_vjp(g, out, a, b):
    return unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)


# matmul


def _matmul(a, b):
    if a.ndim < 1 or b.ndim not in (1, 2):
        raise ShapeError(f"matmul: unsupported ranks {a.ndim} and {b.ndim}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(
            f"matmul: contraction axis has {a.shape[-1]} on the left, {b.shape[0]} on the right"
        )
    return a @ b


def _matmul_vjp(g, out, a, b):
    if b.ndim == 1:
        ga = np.multiply.outer(g, b)
        gb = np.tensordot(g, a, axes=g.ndim)
    else:
        ga = g @ b.T
        lead = list(range(a.ndim - 1))
        gb = np.tensordot(a, g, axes=(lead, lead))
    return ga, gb


# conv1d


def conv1d_forward(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """
    Length-preserving 1-d convolution along the second-to-last axis

    Args:
        x: (..., M, d_in) sequence of feature rows
        w: (k, d_in, r) filters

    Returns:
        (..., M, r) feature map, zero padded ceil((k-1)/2) in front and
        floor((k-1)/2) behind
    """
    if x.ndim < 2 or w.ndim != 3:
        raise ShapeError(f"conv1d: expected x rank >= 2 and w rank 3, got {x.ndim} and {w.ndim}")
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(
            f"conv1d: feature axis of the input has {x.shape[-1]} channels, "
            f"filter d_in axis expects {w.shape[1]}"
        )
    k, m = w.shape[0], x.shape[-2]
    front, back = conv_padding(k)
    xp = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(front, back), (0, 0)])
    out = xp[..., 0:m, :] @ w[0]
    for s in range(1, k):
        out = out + xp[..., s : s + m, :] @ w[s]
    return out


def _conv1d_vjp(g, out, x, w):
    k, m = w.shape[0], x.shape[-2]
    front, back = conv_padding(k)
    xp = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(front, back), (0, 0)])
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    lead = list(range(x.ndim - 1))
    for s in range(k):
        gxp[..., s : s + m, :] += g @ w[s].T
        gw[s] = np.tensordot(xp[..., s : s + m, :], g, axes=(lead, lead))
    return gxp[..., front : front + m, :], gw


# elementwise nonlinearities


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_vjp(g, out, x):
    # subgradient 0 at exactly 0
    return (g * (x > 0),)


def _sigmoid_vjp(g, out, x):
    return (g * out * (1.0 - out),)


def _log_sigmoid(x):
    return np.asarray(log_expit(x))


def _log_sigmoid_vjp(g, out, x):
    return (g * stable_sigmoid(-x),)


def _log(x):
    if np.isnan(x).any():
        raise NumericalError("log: NaN argument")
    short = (LOG_FLOOR - x) / LOG_FLOOR
    if (short > LOG_CLAMP_RTOL).any():
        raise NumericalError(f"log: argument {x.min():.3e} below the clamp floor {LOG_FLOOR:.0e}")
    return np.log(np.maximum(x, LOG_FLOOR))


def _log_vjp(g, out, x):
    return (g / np.maximum(x, LOG_FLOOR),)


def _log1mexp(x):
    if not (x < 0).all():
        raise NumericalError(f"log1mexp: argument must be negative, got max {x.max():.3e}")
    out = np.empty_like(x)
    near = x > -_LN2
    out[near] = np.log(-np.expm1(x[near]))
    out[~near] = np.log1p(-np.exp(x[~near]))
    return out


def _log1mexp_vjp(g, out, x):
    return (-g / np.expm1(-x),)


def _exp_vjp(g, out, x):
    return (g * out,)


def _softmax(x):
    if x.ndim < 1:
        raise ShapeError("softmax: needs at least one axis")
    return softmax(x, axis=-1)


def _softmax_vjp(g, out, x):
    return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)


# reductions


def _check_axis(op, x, axis):
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"{op}: axis {axis} out of range for shape {x.shape}")


def _sum(x, axis=None):
    _check_axis("sum", x, axis)
    return np.asarray(x.sum(axis=axis))


def _sum_vjp(g, out, x, axis=None):
    if axis is not None:
        g = np.expand_dims(g, axis)
    return (np.array(np.broadcast_to(g, x.shape)),)


def _max(x, axis=None):
    _check_axis("max", x, axis)
    if x.size == 0:
        raise ShapeError("max: empty tensor")
    return np.asarray(x.max(axis=axis))


def _max_vjp(g, out, x, axis=None):
    grad = np.zeros_like(x)
    if axis is None:
        grad.flat[int(np.argmax(x))] = g
    else:
        idx = np.argmax(x, axis=axis)
        np.put_along_axis(grad, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
    return (grad,)


# constant-parameter maps


def _scale(x, factor):
    return x * factor


def _scale_vjp(g, out, x, factor):
    return (g * factor,)


def _power(x, exponent):
    if exponent != round(exponent) and (x < 0).any():
        raise NumericalError(f"power: negative base with fractional exponent {exponent}")
    return np.power(x, exponent)


def _power_vjp(g, out, x, exponent):
    return (g * exponent * np.power(x, exponent - 1.0),)


def _stack(*xs):
    first = xs[0].shape
    for x in xs[1:]:
        if x.shape != first:
            raise ShapeError(f"stack: shape {x.shape} differs from {first}")
    return np.stack(xs, axis=-1)


def _stack_vjp(g, out, *xs):
    return tuple(np.array(g[..., i]) for i in range(len(xs)))


PRIMITIVES: dict[str, Primitive] = {
    p.name: p
    for p in (
        Primitive("add", _add, _add_vjp, 2),
        Primitive("mul", _mul, _mul_vjp, 2),
        Primitive("matmul", _matmul, _matmul_vjp, 2),
        Primitive("conv1d", conv1d_forward, _conv1d_vjp, 2),
        Primitive("relu", _relu, _relu_vjp, 1),
        Primitive("sigmoid", stable_sigmoid, _sigmoid_vjp, 1),
        Primitive("log_sigmoid", _log_sigmoid, _log_sigmoid_vjp, 1),
        Primitive("log", _log, _log_vjp, 1),
        Primitive("log1mexp", _log1mexp, _log1mexp_vjp, 1),
        Primitive("exp", np.exp, _exp_vjp, 1),
        Primitive("softmax", _softmax, _softmax_vjp, 1),
        Primitive("sum", _sum, _sum_vjp, 1),
        Primitive("max", _max, _max_vjp, 1),
        Primitive("scale", _scale, _scale_vjp, 1),
        Primitive("power", _power, _power_vjp, 1),
        Primitive("stack", _stack, _stack_vjp, None),
    )
}
