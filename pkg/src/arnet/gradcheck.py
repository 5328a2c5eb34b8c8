"""Finite-difference verification of every backward pass.

Each check builds a small random case, runs the taped backward once, then
compares against central differences (step 1e-5 in 64-bit). The reported
number per op is the worst scaled relative error
``|analytic - numeric| / max(1, |analytic|, |numeric|)`` over all elements
of all instances; anything below 1e-4 counts as a pass.

``perturb`` deliberately corrupts one op's analytic gradient before the
comparison; it exists so the failure path of the verification harness can
itself be tested.
"""
from __future__ import annotations

import zlib

import numpy as np

from . import tensor as tn
from .frontend import Waveform, extract
from .model import MODE_ARNET, fix_length, forward_logits, init_params, micro_config
from .rng import RngState
from .tensor import GruParams, Tensor

FD_STEP = 1e-5
TOLERANCE = 1e-4


def numeric_gradient(f, arr: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of scalar-valued ``f`` w.r.t. ``arr``."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = f()
        flat[i] = keep - step
        lo = f()
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def _scaled_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / denom).max())


def _check_tensors(loss_fn, tensors: list[Tensor], corrupt: bool = False) -> float:
    """Backward vs finite differences for every listed tensor."""
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    tn.backward(loss, params=tensors)
    if corrupt:
        tensors[0].grad = tensors[0].grad + 1e-2
    worst = 0.0
    for t in tensors:
        analytic = t.grad.copy()
        numeric = numeric_gradient(lambda: loss_fn().item(), t.data)
        worst = max(worst, _scaled_rel_err(analytic, numeric))
    return worst


def _rand(rng: RngState, *shape) -> np.ndarray:
    return rng.normal(0.0, 1.0, shape)


def _check_conv1d(rng: RngState, corrupt: bool = False) -> float:
    t = int(rng.integers(8, 20))
    c_in = int(rng.integers(1, 4))
    c_out = int(rng.integers(1, 4))
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 4))
    dilation = int(rng.integers(1, 3))
    t = max(t, (k - 1) * dilation + 1)
    x = Tensor(_rand(rng, t, c_in), requires_grad=True)
    w = Tensor(_rand(rng, c_out, c_in, k), requires_grad=True)
    b = Tensor(_rand(rng, c_out), requires_grad=True)
    return _check_tensors(
        lambda: tn.conv1d(x, w, b, stride=stride, dilation=dilation).sum(),
        [x, w, b], corrupt)


def _check_maxpool1d(rng: RngState, corrupt: bool = False) -> float:
    t = int(rng.integers(6, 20))
    c = int(rng.integers(1, 4))
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 4))
    x = Tensor(_rand(rng, t, c), requires_grad=True)
    return _check_tensors(lambda: tn.maxpool1d(x, k, stride).sum(), [x], corrupt)


def _check_batchnorm(rng: RngState, corrupt: bool = False) -> float:
    t = int(rng.integers(3, 12))
    c = int(rng.integers(1, 5))
    x = Tensor(_rand(rng, t, c), requires_grad=True)
    gain = Tensor(_rand(rng, c), requires_grad=True)
    offset = Tensor(_rand(rng, c), requires_grad=True)
    training = bool(rng.integers(0, 2))
    rm = _rand(rng, c) * 0.1
    rv = np.abs(_rand(rng, c)) + 0.5

    def loss_fn():
        return tn.batchnorm(x, gain, offset, rm.copy(), rv.copy(), training).sum()

    return _check_tensors(loss_fn, [x, gain, offset], corrupt)


def _check_vector_norm(rng: RngState, corrupt: bool = False) -> float:
    c = int(rng.integers(3, 10))
    x = Tensor(_rand(rng, c), requires_grad=True)
    gain = Tensor(_rand(rng, c), requires_grad=True)
    offset = Tensor(_rand(rng, c), requires_grad=True)
    return _check_tensors(lambda: tn.vector_norm(x, gain, offset).sum(),
                          [x, gain, offset], corrupt)


def _check_leaky_relu(rng: RngState, corrupt: bool = False) -> float:
    # keep samples away from the kink at 0
    vals = _rand(rng, int(rng.integers(4, 16)))
    vals = np.where(np.abs(vals) < 0.01, 0.5, vals)
    x = Tensor(vals, requires_grad=True)
    return _check_tensors(lambda: tn.leaky_relu(x, 0.01).sum(), [x], corrupt)


def _check_linear(rng: RngState, corrupt: bool = False) -> float:
    d_in = int(rng.integers(2, 8))
    d_out = int(rng.integers(1, 6))
    x = Tensor(_rand(rng, d_in), requires_grad=True)
    w = Tensor(_rand(rng, d_out, d_in), requires_grad=True)
    b = Tensor(_rand(rng, d_out), requires_grad=True)
    return _check_tensors(lambda: tn.linear(x, w, b).sum(), [x, w, b], corrupt)


def _check_stats_pooling(rng: RngState, corrupt: bool = False) -> float:
    t = int(rng.integers(2, 10))
    c = int(rng.integers(1, 5))
    x = Tensor(_rand(rng, t, c), requires_grad=True)
    return _check_tensors(lambda: tn.stats_pooling(x).sum(), [x], corrupt)


def _check_gru(rng: RngState, corrupt: bool = False) -> float:
    t = int(rng.integers(1, 6))
    c = int(rng.integers(1, 4))
    h = int(rng.integers(1, 4))
    x = Tensor(_rand(rng, t, c), requires_grad=True)
    params = GruParams(
        w_z=Tensor(_rand(rng, h, c), requires_grad=True),
        w_r=Tensor(_rand(rng, h, c), requires_grad=True),
        w_n=Tensor(_rand(rng, h, c), requires_grad=True),
        u_z=Tensor(_rand(rng, h, h), requires_grad=True),
        u_r=Tensor(_rand(rng, h, h), requires_grad=True),
        u_n=Tensor(_rand(rng, h, h), requires_grad=True),
        b_iz=Tensor(_rand(rng, h), requires_grad=True),
        b_ir=Tensor(_rand(rng, h), requires_grad=True),
        b_in=Tensor(_rand(rng, h), requires_grad=True),
        b_hz=Tensor(_rand(rng, h), requires_grad=True),
        b_hr=Tensor(_rand(rng, h), requires_grad=True),
        b_hn=Tensor(_rand(rng, h), requires_grad=True),
    )
    return _check_tensors(lambda: tn.gru_forward(x, h, params).sum(),
                          [x] + params.tensors(), corrupt)


def _check_softmax_cross_entropy(rng: RngState, corrupt: bool = False) -> float:
    logits = Tensor(_rand(rng, 2), requires_grad=True)
    label = int(rng.integers(0, 2))
    return _check_tensors(lambda: tn.softmax_cross_entropy(logits, label),
                          [logits], corrupt)


def _check_concat(rng: RngState, corrupt: bool = False) -> float:
    a = Tensor(_rand(rng, int(rng.integers(1, 5))), requires_grad=True)
    b = Tensor(_rand(rng, int(rng.integers(1, 5))), requires_grad=True)

    def loss_fn():
        v = tn.concat_vectors(a, b)
        return tn.reshape(v, (1, v.shape[0])).sum() * 1.5

    return _check_tensors(loss_fn, [a, b], corrupt)


def _check_model_end_to_end(rng: RngState, corrupt: bool = False) -> float:
    cfg = micro_config(seed=int(rng.integers(0, 2 ** 31)))
    params = init_params(cfg)
    w = fix_length(
        Waveform(np.clip(_rand(rng, cfg.input_len) * 0.2, -1.0, 1.0),
                 cfg.sample_rate, "gradcheck"),
        cfg.input_len)
    feature = extract(w, cfg.frontend)
    label = int(rng.integers(0, 2))
    tensors = list(params.tensors.values())

    def loss_fn():
        logits = forward_logits(w, params, MODE_ARNET, training=True, feature=feature)
        return tn.softmax_cross_entropy(logits, label)

    return _check_tensors(loss_fn, tensors, corrupt)


OP_CHECKS = {
    "conv1d": (_check_conv1d, 12),
    "maxpool1d": (_check_maxpool1d, 12),
    "batchnorm": (_check_batchnorm, 12),
    "vector_norm": (_check_vector_norm, 12),
    "leaky_relu": (_check_leaky_relu, 12),
    "linear": (_check_linear, 12),
    "stats_pooling": (_check_stats_pooling, 12),
    "gru": (_check_gru, 12),
    "softmax_cross_entropy": (_check_softmax_cross_entropy, 12),
    "concat": (_check_concat, 12),
    "model_end_to_end": (_check_model_end_to_end, 1),
}


def run_suite(seed: int = 7, perturb: str | None = None,
              instances: dict[str, int] | None = None) -> dict[str, float]:
    """Max scaled relative error per op over its random instances."""
    if perturb is not None and perturb not in OP_CHECKS:
        raise ValueError(f"unknown op {perturb!r}; choose from {sorted(OP_CHECKS)}")
    results: dict[str, float] = {}
    for name, (check, default_n) in OP_CHECKS.items():
        n = default_n if instances is None else instances.get(name, default_n)
        rng = RngState(seed + zlib.crc32(name.encode()) % 100000)
        worst = 0.0
        for i in range(n):
            worst = max(worst, check(rng, corrupt=(perturb == name and i == 0)))
        results[name] = worst
    return results
