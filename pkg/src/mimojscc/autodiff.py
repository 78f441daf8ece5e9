"""Minimal reverse-mode automatic differentiation over numpy arrays.

Define-by-run: each operation returns a new :class:`Tensor` holding its value,
its parents, and a closure that pushes the output cotangent back to them. The
graph lives only until ``backward`` runs on a scalar loss and is rebuilt from
scratch every step — the models here are tiny, so simplicity wins over reuse.

The op set is exactly what the transformer codec needs, including a pair of
bridging ops (:func:`complex_left_multiply`, :func:`gather_flat`) that carry
gradients through the fixed channel matrices while the packed representation
stays real end to end.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "constant",
    "add",
    "sub",
    "neg",
    "mul",
    "mul_scalar",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "narrow",
    "pad_rows",
    "gather_flat",
    "sum_all",
    "powc",
    "dense",
    "layer_norm",
    "gelu",
    "prelu",
    "softmax_rows",
    "complex_left_multiply",
    "mse_against",
    "gradient_check",
]

_node_counter = itertools.count()


class Tensor:
    """A node in the computation graph wrapping a float numpy array."""

    __slots__ = ("values", "grad", "requires_grad", "node_id", "name", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(values)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.values = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.node_id = next(_node_counter)
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.values.shape

    def backward(self):
        """Reverse sweep from a scalar output, accumulating ``grad`` on leaves."""
        if self.values.size != 1:
            raise ValueError("backward requires a scalar output")
        order = _topo_order(self)
        self.grad = np.ones_like(self.values)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover
        tag = f" '{self.name}'" if self.name else ""
        return f"Tensor{tag}(shape={self.values.shape}, grad={self.requires_grad})"


def _topo_order(root: Tensor):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.node_id in seen:
            continue
        seen.add(node.node_id)
        stack.append((node, True))
        for p in node._parents:
            if p.node_id not in seen:
                stack.append((p, False))
    return order


def constant(values, name: str = "") -> Tensor:
    return Tensor(np.asarray(values), requires_grad=False, name=name)


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad and t._backward is None:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.values.dtype)
    else:
        t.grad = t.grad + g


def _make(values, parents, backward) -> Tensor:
    out = Tensor(values)
    if any(p.requires_grad or p._backward is not None for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accum(a, _unbroadcast(g, a.values.shape))
        _accum(b, _unbroadcast(g, b.values.shape))

    return _make(a.values + b.values, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, -g)

    return _make(-a.values, (a,), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accum(a, _unbroadcast(g * b.values, a.values.shape))
        _accum(b, _unbroadcast(g * a.values, b.values.shape))

    return _make(a.values * b.values, (a, b), backward)


def mul_scalar(a: Tensor, c: float) -> Tensor:
    def backward(g):
        _accum(a, g * c)

    return _make(a.values * c, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        _accum(a, g @ b.values.T)
        _accum(b, a.values.T @ g)

    return _make(a.values @ b.values, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, g.T)

    return _make(a.values.T, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.values.shape

    def backward(g):
        _accum(a, g.reshape(old))

    return _make(a.values.reshape(shape), (a,), backward)


def concat(parts, axis: int = 1) -> Tensor:
    parts = list(parts)
    sizes = [p.values.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            _accum(p, piece)

    return _make(np.concatenate([p.values for p in parts], axis=axis), tuple(parts), backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * a.values.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def backward(g):
        buf = np.zeros_like(a.values)
        buf[idx] = g
        _accum(a, buf)

    return _make(a.values[idx].copy(), (a,), backward)


def pad_rows(a: Tensor, total_rows: int) -> Tensor:
    rows = a.values.shape[0]
    if total_rows < rows:
        raise ValueError("cannot pad to fewer rows")
    padded = np.zeros((total_rows,) + a.values.shape[1:], dtype=a.values.dtype)
    padded[:rows] = a.values

    def backward(g):
        _accum(a, g[:rows])

    return _make(padded, (a,), backward)


def gather_flat(a: Tensor, flat_index: np.ndarray, out_shape) -> Tensor:
    """Reindex the flattened input; backward scatter-adds through the map."""
    flat_index = np.asarray(flat_index, dtype=np.int64)

    def backward(g):
        buf = np.zeros(a.values.size, dtype=a.values.dtype)
        np.add.at(buf, flat_index, g.reshape(-1))
        _accum(a, buf.reshape(a.values.shape))

    return _make(a.values.reshape(-1)[flat_index].reshape(out_shape), (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, np.full_like(a.values, float(g)))

    return _make(np.asarray(a.values.sum(), dtype=a.values.dtype), (a,), backward)


def powc(a: Tensor, exponent: float) -> Tensor:
    """Elementwise power with constant exponent; defined for positive inputs."""
    val = a.values**exponent

    def backward(g):
        _accum(a, g * exponent * a.values ** (exponent - 1.0))

    return _make(val, (a,), backward)


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w (+ b)`` with exact gradients for all three inputs."""
    if x.values.shape[-1] != w.values.shape[0]:
        raise ValueError(f"inner dimensions disagree: {x.values.shape} @ {w.values.shape}")
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise (last axis) normalization followed by affine scale and shift."""
    mu = x.values.mean(axis=-1, keepdims=True)
    xc = x.values - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_vals = xhat * gamma.values + beta.values

    def backward(g):
        _accum(beta, _unbroadcast(g, beta.values.shape))
        _accum(gamma, _unbroadcast(g * xhat, gamma.values.shape))
        gg = g * gamma.values
        gx = inv * (gg - gg.mean(axis=-1, keepdims=True) - xhat * (gg * xhat).mean(axis=-1, keepdims=True))
        _accum(x, gx)

    return _make(out_vals, (x, gamma, beta), backward)


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GeLU, ``x * Phi(x)`` (erf form, not the tanh fit)."""
    phi_cdf = 0.5 * (1.0 + erf(x.values / _SQRT2))
    out_vals = x.values * phi_cdf

    def backward(g):
        pdf = np.exp(-0.5 * x.values**2) * _INV_SQRT_2PI
        _accum(x, g * (phi_cdf + x.values * pdf))

    return _make(out_vals, (x,), backward)


def prelu(x: Tensor, alpha: Tensor) -> Tensor:
    """Parametric ReLU with a single learnable negative-side slope."""
    pos = x.values > 0
    out_vals = np.where(pos, x.values, alpha.values * x.values)

    def backward(g):
        _accum(x, g * np.where(pos, 1.0, alpha.values))
        _accum(alpha, _unbroadcast(g * np.where(pos, 0.0, x.values), alpha.values.shape))

    return _make(out_vals, (x, alpha), backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax along the last axis, shifted for numerical stability."""
    shifted = x.values - x.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        _accum(x, s * (g - (g * s).sum(axis=-1, keepdims=True)))

    return _make(s, (x,), backward)


def complex_left_multiply(a_const: np.ndarray, x_packed: Tensor, k: int) -> Tensor:
    """Multiply a packed real block by a fixed complex matrix on the left.

    ``x_packed`` has shape (M, 2k): columns [0, k) are real parts and
    [k, 2k) imaginary parts of an M x k complex block. The backward pass is
    multiplication by the conjugate transpose, the adjoint of the realified
    linear map.
    """
    a_const = np.asarray(a_const, dtype=np.complex128)
    xc = x_packed.values[:, :k] + 1j * x_packed.values[:, k:]
    yc = a_const @ xc
    out_vals = np.concatenate([yc.real, yc.imag], axis=1).astype(x_packed.values.dtype)

    def backward(g):
        gc = g[:, :k] + 1j * g[:, k:]
        dc = a_const.conj().T @ gc
        _accum(x_packed, np.concatenate([dc.real, dc.imag], axis=1).astype(x_packed.values.dtype))

    return _make(out_vals, (x_packed,), backward)


def mse_against(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error of a tensor against a fixed target array."""
    diff = sub(pred, constant(np.asarray(target, dtype=pred.values.dtype)))
    return mul_scalar(sum_all(mul(diff, diff)), 1.0 / pred.values.size)


def gradient_check(f, params, h: float = 1e-6, samples_per_param: int = 3, seed: int = 0) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``f`` rebuilds the scalar loss graph from the current parameter values;
    ``params`` is an iterable of (name, Tensor) pairs or a mapping. A handful
    of coordinates per parameter is probed (deterministically seeded), which
    is enough to flag any mis-scaled backward rule. Run in 64-bit mode.

    Coordinates carrying gradients many orders below the dominant one are
    compared against the overall gradient scale: central differences bottom
    out at the function's evaluation noise, so a purely per-coordinate ratio
    would report that noise instead of the backward's accuracy.
    """
    if hasattr(params, "items"):
        params = list(params.items())
    else:
        params = list(params)

    for _, p in params:
        p.zero_grad()
    loss = f()
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.values)) for name, p in params}
    gmax = max((float(np.max(np.abs(g))) for g in analytic.values()), default=0.0)
    floor = max(1e-6, 1e-3 * gmax)

    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0x67AD], dtype=np.uint64)))
    worst = 0.0
    for name, p in params:
        flat = p.values.reshape(-1)
        n = flat.size
        count = min(samples_per_param, n)
        coords = rng.permutation(n)[:count]
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = float(f().values)
            flat[c] = orig - h
            down = float(f().values)
            flat[c] = orig
            numeric = (up - down) / (2.0 * h)
            ana = float(analytic[name].reshape(-1)[c])
            err = abs(numeric - ana) / max(abs(numeric), abs(ana), floor)
            worst = max(worst, err)
    for _, p in params:
        p.zero_grad()
    return worst
