"""Dense float64 tensors with tape-based reverse-mode differentiation.

The engine is define-by-run: while a GradientTape is active, every op that
touches a tracked tensor appends a node (inputs + a vector-Jacobian closure)
to the tape, and ``backward`` replays the nodes in reverse recording order.
Each node is visited exactly once, reductions run in fixed row-major order,
and everything is float64, so repeated runs on one build are bit-identical.

Threading contract: at most one tape is active in the whole process, and a
training step owns it from a single thread.  Inference with no active tape
records nothing and is safe to run from many threads at once.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    NumericError,
    TapeError,
)

Array = np.ndarray


class Tensor:
    """A dense float64 array, optionally attached to the gradient tape.

    ``data`` is treated as immutable once the tensor is built; writing into
    it after recording would silently corrupt the tape's saved activations.
    ``grad`` is populated by ``backward`` for watched leaves.
    """

    __slots__ = ("data", "node", "grad")

    def __init__(self, data, node: Optional["_Node"] = None):
        self.data: Array = np.asarray(data, dtype=np.float64)
        self.node = node
        self.grad: Optional[Array] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tracked = "tracked" if self.node is not None else "leaf"
        return f"Tensor(shape={self.shape}, {tracked})"


def constant(data) -> Tensor:
    """Wrap data in a leaf tensor that never receives gradients."""
    return Tensor(data)


class _Node:
    """One recorded op: where its output came from and how to push grads back."""

    __slots__ = ("tape", "inputs", "vjp")

    def __init__(self, tape: "GradientTape", inputs: tuple[Tensor, ...],
                 vjp: Callable[[Array], tuple[Optional[Array], ...]]):
        self.tape = tape
        self.inputs = inputs
        self.vjp = vjp


_active_tape: Optional["GradientTape"] = None


class GradientTape:
    """Records ops between __enter__ and __exit__; replays them in backward.

    One tape per optimizer step.  Tensors recorded under an older tape are
    stale and are rejected if they show up as op inputs later, which catches
    accidental reuse of activations across steps.
    """

    _epoch_source = 0

    def __init__(self):
        GradientTape._epoch_source += 1
        self.epoch = GradientTape._epoch_source
        self._records: list[tuple[Tensor, _Node]] = []
        self._watched: dict[int, Tensor] = {}
        self._entered = False
        self._closed = False

    def __enter__(self) -> "GradientTape":
        global _active_tape
        if _active_tape is not None:
            raise TapeError("a gradient tape is already active; nesting is not supported")
        if self._closed:
            raise TapeError("this tape was already used; build a fresh one per step")
        self._entered = True
        _active_tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _active_tape
        _active_tape = None
        self._closed = True

    def watch(self, *tensors: Tensor) -> None:
        """Mark leaf tensors (parameters) whose gradients should be kept."""
        for t in tensors:
            self._watched[id(t)] = t

    # -- recording ---------------------------------------------------------

    def _tracked(self, t: Tensor) -> bool:
        if id(t) in self._watched:
            return True
        node = t.node
        if node is None:
            return False
        if node.tape is not self:
            raise TapeError("stale tensor from a previous tape used as an op input")
        return True

    def _record(self, out_data: Array, inputs: tuple[Tensor, ...],
                vjp: Callable[[Array], tuple[Optional[Array], ...]]) -> Tensor:
        if not any(self._tracked(t) for t in inputs):
            return Tensor(out_data)
        node = _Node(self, inputs, vjp)
        out = Tensor(out_data, node)
        self._records.append((out, node))
        return out

    # -- replay ------------------------------------------------------------

    def gradients(self, loss: Tensor, params: Sequence[Tensor]) -> list[Array]:
        """Reverse-replay from a scalar loss; returns grads aligned with params.

        Parameters that do not influence the loss get zero gradients of the
        matching shape.  Also stores each gradient on ``p.grad``.
        """
        if loss.data.ndim != 0:
            raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
        if loss.node is None and id(loss) not in self._watched:
            raise TapeError("loss is not attached to this tape (was it computed while recording?)")
        if loss.node is not None and loss.node.tape is not self:
            raise TapeError("loss belongs to a different tape")

        grads: dict[int, Array] = {id(loss): np.ones((), dtype=np.float64)}
        for out, node in reversed(self._records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            in_grads = node.vjp(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None:
                    continue
                if id(t) not in self._watched and (t.node is None or t.node.tape is not self):
                    continue
                acc = grads.get(id(t))
                grads[id(t)] = gi if acc is None else acc + gi

        out_list: list[Array] = []
        for p in params:
            g = grads.get(id(p))
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.data.shape:
                g = np.asarray(g, dtype=np.float64).reshape(p.data.shape)
            p.grad = g
            out_list.append(g)
        return out_list


def backward(loss: Tensor, params: Sequence[Tensor]) -> list[Array]:
    """Convenience wrapper: find the loss tensor's tape and replay it."""
    if loss.node is None:
        raise TapeError("loss is detached: no tape recorded its computation")
    return loss.node.tape.gradients(loss, params)


def _emit(out_data: Array, inputs: tuple[Tensor, ...],
          vjp: Callable[[Array], tuple[Optional[Array], ...]]) -> Tensor:
    tape = _active_tape
    if tape is None:
        return Tensor(out_data)
    return tape._record(out_data, inputs, vjp)


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    A, B = a.data, b.data
    if A.ndim != 2 or B.ndim != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {A.shape} and {B.shape}")
    if A.shape[1] != B.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {A.shape} vs {B.shape}")
    out = A @ B

    def vjp(g: Array):
        return (g @ B.T, A.T @ g)

    return _emit(out, (a, b), vjp)


def transpose(x: Tensor) -> Tensor:
    X = x.data
    if X.ndim != 2:
        raise DimensionError(f"transpose needs a rank-2 tensor, got {X.shape}")
    out = np.ascontiguousarray(X.T)

    def vjp(g: Array):
        return (np.ascontiguousarray(g.T),)

    return _emit(out, (x,), vjp)


def relu(x: Tensor) -> Tensor:
    X = x.data
    out = np.maximum(X, 0.0)

    def vjp(g: Array):
        return (g * (X > 0.0),)

    return _emit(out, (x,), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    A, B = a.data, b.data
    if A.shape != B.shape:
        raise DimensionError(f"add needs equal shapes, got {A.shape} and {B.shape}")
    out = A + B

    def vjp(g: Array):
        return (g, g)

    return _emit(out, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    A, B = a.data, b.data
    if A.shape != B.shape:
        raise DimensionError(f"sub needs equal shapes, got {A.shape} and {B.shape}")
    out = A - B

    def vjp(g: Array):
        return (g, -g)

    return _emit(out, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product, equal shapes."""
    A, B = a.data, b.data
    if A.shape != B.shape:
        raise DimensionError(f"mul needs equal shapes, got {A.shape} and {B.shape}")
    out = A * B

    def vjp(g: Array):
        return (g * B, g * A)

    return _emit(out, (a, b), vjp)


def affine_scalar(x: Tensor, mul_by: float, add_to: float = 0.0) -> Tensor:
    """mul_by * x + add_to with python-float coefficients."""
    mul_by = float(mul_by)
    add_to = float(add_to)
    out = x.data * mul_by + add_to

    def vjp(g: Array):
        return (g * mul_by,)

    return _emit(out, (x,), vjp)


def scale(x: Tensor, factor: float) -> Tensor:
    return affine_scalar(x, factor, 0.0)


def sum_all(x: Tensor) -> Tensor:
    X = x.data
    out = np.asarray(X.sum(), dtype=np.float64)

    def vjp(g: Array):
        return (np.full(X.shape, float(g)),)

    return _emit(out, (x,), vjp)


def mean_all(x: Tensor) -> Tensor:
    X = x.data
    if X.size == 0:
        raise DimensionError("mean_all of an empty tensor")
    n = X.size
    out = np.asarray(X.sum() / n, dtype=np.float64)

    def vjp(g: Array):
        return (np.full(X.shape, float(g) / n),)

    return _emit(out, (x,), vjp)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    X = x.data
    try:
        out = X.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {X.shape} to {shape}") from exc

    def vjp(g: Array):
        return (np.asarray(g).reshape(X.shape),)

    return _emit(out, (x,), vjp)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    X = x.data
    if X.ndim != 2:
        raise DimensionError(f"slice_rows needs a rank-2 tensor, got {X.shape}")
    if not (0 <= start <= stop <= X.shape[0]):
        raise DimensionError(f"row slice [{start}:{stop}] outside 0..{X.shape[0]}")
    out = X[start:stop].copy()

    def vjp(g: Array):
        d = np.zeros_like(X)
        d[start:stop] = g
        return (d,)

    return _emit(out, (x,), vjp)


def concat_last_axis(*parts: Tensor) -> Tensor:
    """Concatenate rank-1 or rank-2 tensors along their last axis."""
    if not parts:
        raise DimensionError("concat_last_axis needs at least one input")
    arrays = [p.data for p in parts]
    ndim = arrays[0].ndim
    if ndim not in (1, 2):
        raise DimensionError(f"concat_last_axis supports rank 1 or 2, got rank {ndim}")
    for arr in arrays[1:]:
        if arr.ndim != ndim or (ndim == 2 and arr.shape[0] != arrays[0].shape[0]):
            raise DimensionError(
                f"concat_last_axis shape mismatch: {[a.shape for a in arrays]}")
    widths = [arr.shape[-1] for arr in arrays]
    out = np.concatenate(arrays, axis=-1)

    def vjp(g: Array):
        pieces = []
        at = 0
        for w in widths:
            pieces.append(g[..., at:at + w])
            at += w
        return tuple(pieces)

    return _emit(out, tuple(parts), vjp)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a rank-2 tensor, stabilized by the row max."""
    X = x.data
    if X.ndim != 2:
        raise DimensionError(f"softmax_rows needs a rank-2 tensor, got {X.shape}")
    if X.shape[1] == 0:
        raise DimensionError("softmax_rows over zero columns")
    if not np.isfinite(X).all():
        raise NumericError("softmax_rows input contains non-finite values")
    shifted = X - X.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g: Array):
        dot = (g * out).sum(axis=1, keepdims=True)
        return ((g - dot) * out,)

    return _emit(out, (x,), vjp)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean / unit variance, then scale and shift.

    Variance is the population variance over the last axis.  Accepts rank-1
    (treated as one row) or rank-2 input; output keeps the input shape.
    """
    X = x.data
    squeeze = X.ndim == 1
    X2 = X[None, :] if squeeze else X
    if X2.ndim != 2:
        raise DimensionError(f"layer_norm needs rank 1 or 2, got {X.shape}")
    d = X2.shape[1]
    if d == 0:
        raise DimensionError("layer_norm over zero features")
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise DimensionError(
            f"layer_norm gain/bias must be ({d},), got {gain.data.shape} and {bias.data.shape}")
    mu = X2.mean(axis=1, keepdims=True)
    centered = X2 - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    normed = centered * inv
    out2 = normed * gain.data + bias.data
    out = out2[0] if squeeze else out2

    def vjp(g: Array):
        G = g[None, :] if squeeze else g
        d_normed = G * gain.data
        mean_dn = d_normed.mean(axis=1, keepdims=True)
        mean_dn_norm = (d_normed * normed).mean(axis=1, keepdims=True)
        dX2 = inv * (d_normed - mean_dn - normed * mean_dn_norm)
        d_gain = (G * normed).sum(axis=0)
        d_bias = G.sum(axis=0)
        dX = dX2[0] if squeeze else dX2
        return (dX, d_gain, d_bias)

    return _emit(out, (x, gain, bias), vjp)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias for rank-2 x (rows are samples)."""
    X, W, B = x.data, weight.data, bias.data
    if X.ndim != 2 or W.ndim != 2:
        raise DimensionError(f"linear needs rank-2 x and weight, got {X.shape} and {W.shape}")
    if X.shape[1] != W.shape[0]:
        raise DimensionError(f"linear inner dims differ: {X.shape} vs {W.shape}")
    if B.shape != (W.shape[1],):
        raise DimensionError(f"linear bias must be ({W.shape[1]},), got {B.shape}")
    out = X @ W + B

    def vjp(g: Array):
        return (g @ W.T, X.T @ g, g.sum(axis=0))

    return _emit(out, (x, weight, bias), vjp)


_PATCH_IDX: dict[tuple[int, int, int, int], Array] = {}


def _patch_indices(h: int, w: int, k: int, pad: int) -> Array:
    """Flat gather indices mapping a padded (h+2p, w+2p) image to (k*k, h*w)."""
    key = (h, w, k, pad)
    idx = _PATCH_IDX.get(key)
    if idx is None:
        wp = w + 2 * pad
        base = np.arange(k)[:, None] * wp + np.arange(k)[None, :]
        starts = np.arange(h)[:, None] * wp + np.arange(w)[None, :]
        idx = base.reshape(-1, 1) + starts.reshape(1, -1)
        _PATCH_IDX[key] = idx
    return idx


def _im2col(img: Array, k: int, pad: int) -> Array:
    """(c, h, w) -> (c*k*k, h*w) patch matrix with zero padding."""
    c, h, w = img.shape
    padded = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=img.dtype)
    padded[:, pad:pad + h, pad:pad + w] = img
    idx = _patch_indices(h, w, k, pad)
    flat = padded.reshape(c, -1)
    return flat[:, idx].reshape(c * k * k, h * w)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """2-D cross-correlation, stride 1, zero-padded to keep spatial dims.

    x is (c_in, h, w); kernel is (c_out, c_in, k, k) with odd square k;
    bias is (c_out,).  Output is (c_out, h, w).
    """
    X, K, B = x.data, kernel.data, bias.data
    if X.ndim != 3 or K.ndim != 4:
        raise DimensionError(f"conv2d needs rank-3 x and rank-4 kernel, got {X.shape} and {K.shape}")
    c_out, c_in, kh, kw = K.shape
    if kh != kw:
        raise ConfigurationError(f"conv2d kernels must be square, got {kh}x{kw}")
    if kh % 2 == 0 or kh < 1:
        raise ConfigurationError(f"conv2d kernel size must be odd and positive, got {kh}")
    if X.shape[0] != c_in:
        raise DimensionError(f"conv2d channels differ: x has {X.shape[0]}, kernel expects {c_in}")
    if B.shape != (c_out,):
        raise DimensionError(f"conv2d bias must be ({c_out},), got {B.shape}")
    _, h, w = X.shape
    pad = (kh - 1) // 2
    cols = _im2col(X, kh, pad)
    out = (K.reshape(c_out, -1) @ cols).reshape(c_out, h, w) + B[:, None, None]

    def vjp(g: Array):
        gm = g.reshape(c_out, -1)
        d_bias = g.sum(axis=(1, 2))
        d_kernel = (gm @ cols.T).reshape(K.shape)
        # full correlation of the upstream grad with the flipped kernel,
        # channels swapped: standard stride-1 same-padding identity
        k_rot = K[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        g_cols = _im2col(g, kh, pad)
        d_x = (k_rot.reshape(c_in, -1) @ g_cols).reshape(X.shape)
        return (d_x, d_kernel, d_bias)

    return _emit(out, (x, kernel, bias), vjp)


def gather_cells(grid: Tensor, rows: Array, cols: Array) -> Tensor:
    """Pick per-cell feature columns from a (c, h, w) grid.

    rows/cols are equal-length integer arrays; output row m is
    grid[:, rows[m], cols[m]].  Backward scatter-adds, so duplicate cells
    accumulate correctly.
    """
    G = grid.data
    if G.ndim != 3:
        raise DimensionError(f"gather_cells needs a rank-3 grid, got {G.shape}")
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    if rows.shape != cols.shape or rows.ndim != 1:
        raise DimensionError("gather_cells rows/cols must be equal-length 1-D arrays")
    c, h, w = G.shape
    if rows.size and (rows.min() < 0 or rows.max() >= h or cols.min() < 0 or cols.max() >= w):
        raise DimensionError(f"gather_cells index outside {h}x{w} grid")
    flat = rows * w + cols
    out = np.ascontiguousarray(G.reshape(c, h * w)[:, flat].T)

    def vjp(g: Array):
        d_flat = np.zeros((h * w, c))
        np.add.at(d_flat, flat, g)
        return (d_flat.T.reshape(G.shape),)

    return _emit(out, (grid,), vjp)


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...],
                 fan_in: int, fan_out: int) -> Tensor:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) init used for every weight here."""
    if fan_in < 1 or fan_out < 1:
        raise ConfigurationError(f"fans must be positive, got {fan_in}, {fan_out}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape))


def zeros(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape))
