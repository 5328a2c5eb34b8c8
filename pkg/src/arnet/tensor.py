"""Dense float64 tensors with taped reverse-mode gradients.

This is the numeric core under every encoder: each layer operation computes
its forward result with numpy and records a backward closure on the result
node. :func:`backward` replays the tape in reverse topological order and
accumulates gradients into every reachable tensor that wants them.

Conventions
-----------
* all data is 64-bit float, row-major;
* sequences are laid out ``[time, channels]``;
* convolution is implemented in cross-correlation orientation (no kernel
  flip). With learned kernels the two orientations differ only by index
  reversal, so nothing downstream can tell them apart;
* a graph is single-threaded; distinct graphs may live on distinct threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GraphError, ShapeError

__all__ = [
    "Tensor",
    "GruParams",
    "backward",
    "batchnorm",
    "concat_vectors",
    "conv1d",
    "gru_forward",
    "leaky_relu",
    "linear",
    "maxpool1d",
    "reshape",
    "softmax_cross_entropy",
    "stats_pooling",
    "vector_norm",
    "zero_grads",
]

BN_EPS = 1e-5
STATS_EPS = 1e-5


class Tensor:
    """N-dimensional float64 array with an optional gradient buffer.

    ``grad`` is allocated lazily during :func:`backward`. Tensors produced
    by an op keep references to their parents plus a closure that scatters
    the incoming gradient back to them.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def sum(self) -> "Tensor":
        """Scalar sum of all elements."""
        out_data = np.asarray(self.data.sum())

        def bwd(g):
            _acc(self, np.broadcast_to(g, self.data.shape))

        return _node(out_data, (self,), bwd)

    def __add__(self, other: "Tensor") -> "Tensor":
        if not isinstance(other, Tensor):
            return NotImplemented
        if self.shape != other.shape:
            raise ShapeError(f"add: shapes {self.shape} vs {other.shape}")
        out_data = self.data + other.data

        def bwd(g):
            _acc(self, g)
            _acc(other, g)

        return _node(out_data, (self, other), bwd)

    def __mul__(self, c) -> "Tensor":
        if not isinstance(c, (int, float)):
            return NotImplemented
        c = float(c)
        out_data = self.data * c

        def bwd(g):
            _acc(self, g * c)

        return _node(out_data, (self,), bwd)

    __rmul__ = __mul__

    def __repr__(self) -> str:  # pragma: no cover
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"


def _wants_grad(t: Tensor) -> bool:
    return t.requires_grad or bool(t._parents)


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not _wants_grad(t):
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _node(data: np.ndarray, parents: tuple[Tensor, ...], bwd) -> Tensor:
    out = Tensor(data)
    if any(_wants_grad(p) for p in parents):
        out._parents = parents
        out._backward = bwd
    return out


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


def backward(loss: Tensor, params=None) -> None:
    """Accumulates d(loss)/d(tensor) into ``.grad`` of every reachable tensor.

    ``loss`` must be a scalar produced by recorded ops. When ``params`` is
    given, any listed tensor that the loss never touched ends up with an
    all-zero gradient buffer instead of ``None``. The tape is released
    afterwards, so a second backward over the same nodes is rejected.
    """
    if loss.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._backward is None:
        raise GraphError("backward before forward: the loss has no recorded computation")

    # Iterative topological sort; graphs can be a few thousand nodes deep.
    topo: list[Tensor] = []
    state: dict[int, int] = {}
    stack: list[Tensor] = [loss]
    while stack:
        node = stack[-1]
        st = state.get(id(node), 0)
        if st == 0:
            state[id(node)] = 1
            for p in node._parents:
                if state.get(id(p), 0) == 0 and p._parents:
                    stack.append(p)
        elif st == 1:
            stack.pop()
            state[id(node)] = 2
            topo.append(node)
        else:
            stack.pop()

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        node._parents = ()
        node._backward = None

    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


# ---------------------------------------------------------------------------
# layer operations
# ---------------------------------------------------------------------------


def conv1d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1,
           dilation: int = 1) -> Tensor:
    """Valid 1-D convolution (cross-correlation orientation) over time.

    ``x`` is ``[T, C_in]``, ``weight`` is ``[C_out, C_in, K]``, ``bias`` is
    ``[C_out]``. Output ``[T', C_out]`` with
    ``T' = floor((T - (K-1)*dilation - 1) / stride) + 1``; for ``dilation=1``
    that is the usual ``floor((T-K)/stride) + 1``.
    """
    if x.data.ndim != 2 or weight.data.ndim != 3 or bias.data.ndim != 1:
        raise ShapeError(
            f"conv1d expects x[T,C], weight[O,C,K], bias[O]; got "
            f"{x.shape}, {weight.shape}, {bias.shape}")
    t_in, c_in = x.shape
    c_out, c_in_w, k = weight.shape
    if c_in_w != c_in or bias.shape[0] != c_out:
        raise ShapeError(
            f"conv1d channel mismatch: input {x.shape}, weight {weight.shape}, "
            f"bias {bias.shape}")
    if stride < 1 or dilation < 1:
        raise ShapeError(f"conv1d stride/dilation must be >= 1, got {stride}/{dilation}")
    span = (k - 1) * dilation + 1
    if t_in < span:
        raise ShapeError(
            f"conv1d input too short: T={t_in} < kernel span {span} "
            f"(K={k}, dilation={dilation})")

    win = sliding_window_view(x.data, span, axis=0)[::stride, :, ::dilation]  # [T',C,K]
    out = np.einsum("tck,ock->to", win, weight.data, optimize=True) + bias.data
    t_out = out.shape[0]

    def bwd(g):
        if _wants_grad(weight):
            _acc(weight, np.einsum("to,tck->ock", g, win, optimize=True))
        if _wants_grad(bias):
            _acc(bias, g.sum(axis=0))
        if _wants_grad(x):
            contrib = np.einsum("to,ock->tck", g, weight.data, optimize=True)
            gx = np.zeros_like(x.data)
            idx = np.arange(t_out)[:, None] * stride + np.arange(k)[None, :] * dilation
            np.add.at(gx, idx.ravel(), contrib.transpose(0, 2, 1).reshape(-1, c_in))
            _acc(x, gx)

    return _node(out, (x, weight, bias), bwd)


def maxpool1d(x: Tensor, k: int, stride: int) -> Tensor:
    """Per-channel max over sliding windows; ``T' = floor((T-k)/stride)+1``.

    The backward pass routes each window's gradient to the earliest-index
    maximum of that window.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"maxpool1d expects [T,C], got {x.shape}")
    t_in, c = x.shape
    if k < 1 or stride < 1:
        raise ShapeError(f"maxpool1d k/stride must be >= 1, got {k}/{stride}")
    if t_in < k:
        raise ShapeError(f"maxpool1d input too short: T={t_in} < k={k}")

    win = sliding_window_view(x.data, k, axis=0)[::stride]  # [T',C,k]
    out = win.max(axis=-1)
    amax = win.argmax(axis=-1)  # first max wins ties
    t_out = out.shape[0]

    def bwd(g):
        if _wants_grad(x):
            gx = np.zeros_like(x.data)
            rows = np.arange(t_out)[:, None] * stride + amax
            cols = np.broadcast_to(np.arange(c), rows.shape)
            np.add.at(gx, (rows.ravel(), cols.ravel()), g.ravel())
            _acc(x, gx)

    return _node(out, (x,), bwd)


def batchnorm(x: Tensor, gain: Tensor, offset: Tensor, running_mean: np.ndarray,
              running_var: np.ndarray, training: bool,
              momentum: float = 0.1, eps: float = BN_EPS) -> Tensor:
    """Per-channel normalization of a ``[T, C]`` sequence over its time axis.

    Training mode uses the sequence's own statistics (population variance)
    and folds them into the running buffers with the given momentum; infer
    mode normalizes with the running buffers. The affine transform is
    applied last.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"batchnorm expects [T,C], got {x.shape}")
    t, c = x.shape
    for arr, label in ((gain.data, "gain"), (offset.data, "offset"),
                       (running_mean, "running_mean"), (running_var, "running_var")):
        if arr.shape != (c,):
            raise ShapeError(
                f"batchnorm {label} shape {arr.shape} does not match C={c} of input {x.shape}")
    if training and t < 2:
        raise ShapeError(f"batchnorm in train mode needs T >= 2, got T={t}")

    if training:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)  # population
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = gain.data * xhat + offset.data

    def bwd(g):
        if _wants_grad(gain):
            _acc(gain, (g * xhat).sum(axis=0))
        if _wants_grad(offset):
            _acc(offset, g.sum(axis=0))
        if _wants_grad(x):
            gxh = g * gain.data
            if training:
                gx = (inv_std / t) * (
                    t * gxh - gxh.sum(axis=0) - xhat * (gxh * xhat).sum(axis=0))
            else:
                gx = gxh * inv_std
            _acc(x, gx)

    return _node(out, (x, gain, offset), bwd)


def vector_norm(x: Tensor, gain: Tensor, offset: Tensor, eps: float = BN_EPS) -> Tensor:
    """Normalizes a single vector to zero mean / unit variance over its
    entries, then applies a per-entry affine transform.

    This is the normalization in front of the concatenate encoder's 1x1
    convolution: with one utterance-level vector per forward pass there is
    no time axis to take statistics over, so the vector itself supplies
    them. Deterministic and identical in train and infer modes.
    """
    if x.data.ndim != 1:
        raise ShapeError(f"vector_norm expects a vector, got {x.shape}")
    c = x.shape[0]
    if gain.shape != (c,) or offset.shape != (c,):
        raise ShapeError(
            f"vector_norm affine shapes {gain.shape}/{offset.shape} vs input {x.shape}")
    mu = x.data.mean()
    var = x.data.var()
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = gain.data * xhat + offset.data

    def bwd(g):
        if _wants_grad(gain):
            _acc(gain, g * xhat)
        if _wants_grad(offset):
            _acc(offset, g)
        if _wants_grad(x):
            gxh = g * gain.data
            gx = (inv_std / c) * (c * gxh - gxh.sum() - xhat * (gxh * xhat).sum())
            _acc(x, gx)

    return _node(out, (x, gain, offset), bwd)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    """Elementwise ``v if v >= 0 else slope * v``."""
    mask = x.data >= 0
    out = np.where(mask, x.data, slope * x.data)

    def bwd(g):
        if _wants_grad(x):
            _acc(x, g * np.where(mask, 1.0, slope))

    return _node(out, (x,), bwd)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map of a vector: ``weight @ x + bias``."""
    if x.data.ndim != 1 or weight.data.ndim != 2 or bias.data.ndim != 1:
        raise ShapeError(
            f"linear expects x[D], weight[O,D], bias[O]; got {x.shape}, "
            f"{weight.shape}, {bias.shape}")
    d_out, d_in = weight.shape
    if x.shape[0] != d_in or bias.shape[0] != d_out:
        raise ShapeError(
            f"linear shape mismatch: x {x.shape}, weight {weight.shape}, bias {bias.shape}")
    out = weight.data @ x.data + bias.data

    def bwd(g):
        if _wants_grad(weight):
            _acc(weight, np.outer(g, x.data))
        if _wants_grad(bias):
            _acc(bias, g)
        if _wants_grad(x):
            _acc(x, weight.data.T @ g)

    return _node(out, (x, weight, bias), bwd)


def stats_pooling(x: Tensor) -> Tensor:
    """Concatenated per-channel mean and standard deviation over time.

    ``[T, C] -> [2C]``; the deviation uses population variance with a small
    epsilon under the square root so constant channels stay differentiable.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"stats_pooling expects [T,C], got {x.shape}")
    t = x.shape[0]
    mu = x.data.mean(axis=0)
    var = x.data.var(axis=0)
    std = np.sqrt(var + STATS_EPS)
    out = np.concatenate([mu, std])

    def bwd(g):
        if _wants_grad(x):
            c = x.shape[1]
            gmu = g[:c]
            gstd = g[c:]
            gx = gmu / t + gstd * (x.data - mu) / (t * std)
            _acc(x, gx)

    return _node(out, (x,), bwd)


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Cross entropy of the softmax over two logits, max-subtracted for
    stability. The gradient w.r.t. the logits is ``softmax - one_hot``."""
    if logits.data.ndim != 1 or logits.shape[0] != 2:
        raise ShapeError(f"softmax_cross_entropy expects two logits, got {logits.shape}")
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    z = logits.data - logits.data.max()
    log_probs = z - np.log(np.exp(z).sum())
    probs = np.exp(log_probs)
    out = np.asarray(-log_probs[label])

    def bwd(g):
        if _wants_grad(logits):
            gl = probs.copy()
            gl[label] -= 1.0
            _acc(logits, float(g) * gl)

    return _node(out, (logits,), bwd)


def concat_vectors(a: Tensor, b: Tensor) -> Tensor:
    """Concatenates two vectors: ``[Da] ++ [Db] -> [Da+Db]``."""
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError(f"concat_vectors expects vectors, got {a.shape} and {b.shape}")
    out = np.concatenate([a.data, b.data])
    na = a.shape[0]

    def bwd(g):
        _acc(a, g[:na])
        _acc(b, g[na:])

    return _node(out, (a, b), bwd)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)
    if out.size != x.size:
        raise ShapeError(f"reshape {x.shape} -> {shape} changes element count")

    def bwd(g):
        _acc(x, g.reshape(x.data.shape))

    return _node(out, (x,), bwd)


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------


@dataclass
class GruParams:
    """Weights of a single-layer unidirectional GRU.

    Gate order is (update z, reset r, candidate n); the reset gate
    multiplies the hidden-to-candidate term. Input and recurrent paths each
    carry their own bias, hence 2H bias entries per gate set.
    """

    w_z: Tensor
    w_r: Tensor
    w_n: Tensor
    u_z: Tensor
    u_r: Tensor
    u_n: Tensor
    b_iz: Tensor
    b_ir: Tensor
    b_in: Tensor
    b_hz: Tensor
    b_hr: Tensor
    b_hn: Tensor

    def tensors(self) -> list[Tensor]:
        return [self.w_z, self.w_r, self.w_n, self.u_z, self.u_r, self.u_n,
                self.b_iz, self.b_ir, self.b_in, self.b_hz, self.b_hr, self.b_hn]

    def check(self, c_in: int, hidden: int) -> None:
        expect = {
            "w_z": (hidden, c_in), "w_r": (hidden, c_in), "w_n": (hidden, c_in),
            "u_z": (hidden, hidden), "u_r": (hidden, hidden), "u_n": (hidden, hidden),
            "b_iz": (hidden,), "b_ir": (hidden,), "b_in": (hidden,),
            "b_hz": (hidden,), "b_hr": (hidden,), "b_hn": (hidden,),
        }
        for field_name, want in expect.items():
            got = getattr(self, field_name).shape
            if got != want:
                raise ShapeError(
                    f"gru parameter {field_name} has shape {got}, expected {want} "
                    f"for C_in={c_in}, H={hidden}")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def gru_forward(seq: Tensor, hidden_size: int, params: GruParams) -> Tensor:
    """Runs the GRU over ``[T, C_in]`` from a zero initial state and returns
    the hidden state after the final step only.

    Implemented as one fused tape node: the input projections are batched
    over time up front and the backward pass unrolls through time with the
    cached gate activations.
    """
    if seq.data.ndim != 2:
        raise ShapeError(f"gru_forward expects [T,C], got {seq.shape}")
    t_len, c_in = seq.shape
    if t_len < 1:
        raise ShapeError("gru_forward needs at least one time step")
    params.check(c_in, hidden_size)

    x = seq.data
    xz = x @ params.w_z.data.T + params.b_iz.data
    xr = x @ params.w_r.data.T + params.b_ir.data
    xn = x @ params.w_n.data.T + params.b_in.data

    h_all = np.zeros((t_len + 1, hidden_size))
    zs = np.empty((t_len, hidden_size))
    rs = np.empty((t_len, hidden_size))
    ns = np.empty((t_len, hidden_size))
    ms = np.empty((t_len, hidden_size))
    u_z, u_r, u_n = params.u_z.data, params.u_r.data, params.u_n.data
    b_hz, b_hr, b_hn = params.b_hz.data, params.b_hr.data, params.b_hn.data

    h = h_all[0]
    for i in range(t_len):
        z = _sigmoid(xz[i] + u_z @ h + b_hz)
        r = _sigmoid(xr[i] + u_r @ h + b_hr)
        m = u_n @ h + b_hn
        n = np.tanh(xn[i] + r * m)
        h = (1.0 - z) * n + z * h
        zs[i], rs[i], ns[i], ms[i] = z, r, n, m
        h_all[i + 1] = h

    out = h_all[t_len].copy()

    def bwd(g):
        dz_all = np.empty_like(zs)
        dr_all = np.empty_like(rs)
        dan_all = np.empty_like(ns)
        dm_all = np.empty_like(ms)
        gh = g.astype(np.float64, copy=True)
        for i in range(t_len - 1, -1, -1):
            z, r, n, m = zs[i], rs[i], ns[i], ms[i]
            h_prev = h_all[i]
            dz = gh * (h_prev - n) * z * (1.0 - z)
            dn = gh * (1.0 - z)
            dan = dn * (1.0 - n * n)
            dr = dan * m * r * (1.0 - r)
            dm = dan * r
            dz_all[i], dr_all[i], dan_all[i], dm_all[i] = dz, dr, dan, dm
            gh = gh * z + u_z.T @ dz + u_r.T @ dr + u_n.T @ dm

        h_prevs = h_all[:t_len]
        if _wants_grad(params.w_z):
            _acc(params.w_z, dz_all.T @ x)
            _acc(params.w_r, dr_all.T @ x)
            _acc(params.w_n, dan_all.T @ x)
            _acc(params.u_z, dz_all.T @ h_prevs)
            _acc(params.u_r, dr_all.T @ h_prevs)
            _acc(params.u_n, dm_all.T @ h_prevs)
            _acc(params.b_iz, dz_all.sum(axis=0))
            _acc(params.b_ir, dr_all.sum(axis=0))
            _acc(params.b_in, dan_all.sum(axis=0))
            _acc(params.b_hz, dz_all.sum(axis=0))
            _acc(params.b_hr, dr_all.sum(axis=0))
            _acc(params.b_hn, dm_all.sum(axis=0))
        if _wants_grad(seq):
            gx = dz_all @ params.w_z.data + dr_all @ params.w_r.data \
                + dan_all @ params.w_n.data
            _acc(seq, gx)

    return _node(out, (seq, *params.tensors()), bwd)
