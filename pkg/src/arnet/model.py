"""The dual-branch anti-spoofing model.

Three encoders feed a linear decoder:

* the auxiliary encoder reads the raw waveform through one strided
  convolution, three consecutive max-pooling stages (each followed by
  batch norm + leaky ReLU), a GRU that keeps only its final hidden state,
  and an optional linear projection down to the auxiliary embedding size;
* the main encoder reads a handcrafted feature map through five
  time-dilated 1-D convolution layers (dilations 1,2,3,1,1), statistics
  pooling, and a linear map to the main embedding size;
* the concatenate encoder normalizes ``[aux ++ main]`` and applies a 1x1
  convolution to the fused embedding.

The auxiliary embedding is contractually narrower than the main one; that
bottleneck keeps the waveform branch in a supplementary role.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as tn
from .errors import ConfigError, DataError, FormatError, ShapeError
from .frontend import (
    CQT_KIND,
    MEL_KIND,
    FeatureMap,
    FrontendConfig,
    Waveform,
    extract,
    feature_frame_count,
)
from .metrics import BONAFIDE, SPOOF, ScoreSet
from .optim import OptimizerState, adam_step
from .rng import RngState
from .tensor import GruParams, Tensor

MODEL_MAGIC = b"ARNM"
MODEL_VERSION = 1

TDNN_KERNELS = (5, 3, 3, 1, 1)
TDNN_DILATIONS = (1, 2, 3, 1, 1)

MODE_ARNET = "arnet"
MODE_MAIN_ONLY = "main_only"

LABEL_TO_CLASS = {BONAFIDE: 0, SPOOF: 1}


@dataclass
class ArNetConfig:
    """Architecture and run configuration.

    ``aux_embed_dim`` is the auxiliary bottleneck; ``None`` drops the
    projection after the GRU so the GRU state itself is the embedding
    (used by the wide accounting preset). The bottleneck invariant
    ``dim_aux < embed_dim`` is enforced unless ``enforce_bottleneck`` is
    explicitly switched off.
    """

    input_len: int = 64600
    sample_rate: int = 16000
    aux_channels: int = 128
    aux_kernel: int = 3
    aux_stride: int = 3
    pool_kernel: int = 3
    pool_stride: int = 3
    gru_hidden: int = 512
    aux_embed_dim: int | None = 64
    tdnn_channels: tuple[int, ...] = (512, 512, 512, 512, 1500)
    embed_dim: int = 192
    concat_out: int = 256
    leaky_slope: float = 0.01
    feature_norm: bool = False
    seed: int = 1234
    enforce_bottleneck: bool = True
    frontend: FrontendConfig = field(default_factory=FrontendConfig)

    def __post_init__(self):
        if isinstance(self.tdnn_channels, list):
            self.tdnn_channels = tuple(self.tdnn_channels)
        positives = {
            "input_len": self.input_len, "aux_channels": self.aux_channels,
            "aux_kernel": self.aux_kernel, "aux_stride": self.aux_stride,
            "pool_kernel": self.pool_kernel, "pool_stride": self.pool_stride,
            "gru_hidden": self.gru_hidden, "embed_dim": self.embed_dim,
            "concat_out": self.concat_out,
        }
        for name, v in positives.items():
            if v < 1:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.aux_embed_dim is not None and self.aux_embed_dim < 1:
            raise ConfigError(f"aux_embed_dim must be positive or None, got {self.aux_embed_dim}")
        if self.input_len < self.aux_kernel:
            raise ConfigError(
                f"input_len {self.input_len} shorter than the first kernel "
                f"({self.aux_kernel})")
        if len(self.tdnn_channels) != len(TDNN_KERNELS):
            raise ConfigError(
                f"tdnn_channels needs {len(TDNN_KERNELS)} entries, got "
                f"{len(self.tdnn_channels)}")
        if self.frontend.sample_rate != self.sample_rate:
            self.frontend = replace(self.frontend, sample_rate=self.sample_rate)
        if self.enforce_bottleneck and self.dim_aux >= self.embed_dim:
            raise ConfigError(
                f"auxiliary bottleneck violated: dim_aux={self.dim_aux} must be "
                f"< embed_dim={self.embed_dim}")

    @property
    def dim_aux(self) -> int:
        return self.gru_hidden if self.aux_embed_dim is None else self.aux_embed_dim

    @property
    def concat_in(self) -> int:
        return self.dim_aux + self.embed_dim


def desk_config(seed: int = 1234) -> ArNetConfig:
    """Default desk-scale configuration (mel front-end, 64/192 embeddings)."""
    return ArNetConfig(seed=seed)


def wide_aux_config(seed: int = 1234) -> ArNetConfig:
    """Accounting preset: GRU(512) used directly as the auxiliary embedding
    (no projection), against a 192-dim main embedding.

    This deliberately relaxes the bottleneck check; it exists to price the
    auxiliary + concatenate stack, not to train.
    """
    return ArNetConfig(aux_embed_dim=None, enforce_bottleneck=False, seed=seed)


def tiny_config(seed: int = 1234) -> ArNetConfig:
    """Small configuration for desk-scale training runs."""
    return ArNetConfig(
        input_len=9600,
        aux_channels=16,
        gru_hidden=64,
        aux_embed_dim=32,
        tdnn_channels=(24, 24, 24, 24, 64),
        embed_dim=64,
        concat_out=64,
        seed=seed,
        frontend=FrontendConfig(n_mels=30),
    )


def micro_config(seed: int = 1234) -> ArNetConfig:
    """Miniature configuration for finite-difference gradient checks."""
    return ArNetConfig(
        input_len=600,
        aux_channels=4,
        gru_hidden=8,
        aux_embed_dim=4,
        tdnn_channels=(6, 6, 6, 6, 12),
        embed_dim=8,
        concat_out=8,
        seed=seed,
        frontend=FrontendConfig(n_fft=64, hop=32, n_mels=6, fmin=50.0, fmax=8000.0),
    )


@dataclass(frozen=True)
class LayerSpec:
    """One entry of the architecture walk shared by the parameter builder
    and the complexity accounting."""

    name: str
    encoder: str   # aux | main | concat | decoder
    kind: str      # conv | bn | pool | act | gru | linear | stats | vecnorm
    c_in: int = 0
    c_out: int = 0
    kernel: int = 0
    stride: int = 1
    dilation: int = 1


def layer_plan(cfg: ArNetConfig) -> list[LayerSpec]:
    plan: list[LayerSpec] = []
    ch = cfg.aux_channels
    plan.append(LayerSpec("aux.conv", "aux", "conv", 1, ch, cfg.aux_kernel, cfg.aux_stride))
    plan.append(LayerSpec("aux.bn0", "aux", "bn", ch, ch))
    plan.append(LayerSpec("aux.act0", "aux", "act", ch, ch))
    for i in range(3):
        plan.append(LayerSpec(f"aux.pool{i + 1}", "aux", "pool", ch, ch,
                              cfg.pool_kernel, cfg.pool_stride))
        plan.append(LayerSpec(f"aux.bn{i + 1}", "aux", "bn", ch, ch))
        plan.append(LayerSpec(f"aux.act{i + 1}", "aux", "act", ch, ch))
    plan.append(LayerSpec("aux.gru", "aux", "gru", ch, cfg.gru_hidden))
    if cfg.aux_embed_dim is not None:
        plan.append(LayerSpec("aux.proj", "aux", "linear", cfg.gru_hidden,
                              cfg.aux_embed_dim))

    c_prev = cfg.frontend.n_bins
    for i, (c, k, d) in enumerate(zip(cfg.tdnn_channels, TDNN_KERNELS, TDNN_DILATIONS)):
        plan.append(LayerSpec(f"main.tdnn{i}", "main", "conv", c_prev, c, k, 1, d))
        plan.append(LayerSpec(f"main.bn{i}", "main", "bn", c, c))
        plan.append(LayerSpec(f"main.act{i}", "main", "act", c, c))
        c_prev = c
    plan.append(LayerSpec("main.stats", "main", "stats", c_prev, 2 * c_prev))
    plan.append(LayerSpec("main.embed", "main", "linear", 2 * c_prev, cfg.embed_dim))

    plan.append(LayerSpec("concat.norm", "concat", "vecnorm", cfg.concat_in,
                          cfg.concat_in))
    plan.append(LayerSpec("concat.conv", "concat", "conv", cfg.concat_in,
                          cfg.concat_out, 1, 1))
    plan.append(LayerSpec("dec.linear", "decoder", "linear", cfg.concat_out, 2))
    return plan


@dataclass
class Embedding:
    """Fixed-length utterance-level vector tagged with its source encoder."""

    values: Tensor
    source: str  # aux | main | concat


class ModelParams:
    """Named parameter tensors plus batch-norm running statistics.

    ``tensors`` are the trainables; ``buffers`` hold the running stats and
    the main-only flag. Both round-trip bit-exactly through the model file.
    """

    def __init__(self, cfg: ArNetConfig, tensors: dict[str, Tensor],
                 buffers: dict[str, np.ndarray]):
        self.cfg = cfg
        self.tensors = tensors
        self.buffers = buffers

    @property
    def main_only(self) -> bool:
        return bool(self.buffers["meta.main_only"][0])

    def set_main_only(self, flag: bool) -> None:
        self.buffers["meta.main_only"][0] = 1.0 if flag else 0.0

    def trainable_count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grads(self) -> None:
        tn.zero_grads(self.tensors.values())

    def gru(self, prefix: str) -> GruParams:
        t = self.tensors
        return GruParams(
            w_z=t[f"{prefix}.wz"], w_r=t[f"{prefix}.wr"], w_n=t[f"{prefix}.wn"],
            u_z=t[f"{prefix}.uz"], u_r=t[f"{prefix}.ur"], u_n=t[f"{prefix}.un"],
            b_iz=t[f"{prefix}.biz"], b_ir=t[f"{prefix}.bir"], b_in=t[f"{prefix}.bin"],
            b_hz=t[f"{prefix}.bhz"], b_hr=t[f"{prefix}.bhr"], b_hn=t[f"{prefix}.bhn"])


def _uniform_param(rng: RngState, shape: tuple[int, ...], fan_in: int,
                   name: str) -> Tensor:
    bound = (1.0 / fan_in) ** 0.5
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True, name=name)


def init_params(cfg: ArNetConfig, rng: RngState | None = None) -> ModelParams:
    """Seeded parameter init: weights and biases uniform in
    +-sqrt(1/fan_in), batch-norm gains 1 / offsets 0, running stats (0, 1).
    Draw order follows the layer plan, so a seed pins every value."""
    if rng is None:
        rng = RngState(cfg.seed)
    tensors: dict[str, Tensor] = {}
    buffers: dict[str, np.ndarray] = {}

    def add_bn(name: str, c: int) -> None:
        tensors[f"{name}.gain"] = Tensor(np.ones(c), requires_grad=True, name=f"{name}.gain")
        tensors[f"{name}.offset"] = Tensor(np.zeros(c), requires_grad=True,
                                           name=f"{name}.offset")
        buffers[f"stats.{name}.mean"] = np.zeros(c)
        buffers[f"stats.{name}.var"] = np.ones(c)

    for spec in layer_plan(cfg):
        if spec.kind == "conv":
            fan_in = spec.c_in * spec.kernel
            tensors[f"{spec.name}.w"] = _uniform_param(
                rng, (spec.c_out, spec.c_in, spec.kernel), fan_in, f"{spec.name}.w")
            tensors[f"{spec.name}.b"] = _uniform_param(
                rng, (spec.c_out,), fan_in, f"{spec.name}.b")
        elif spec.kind == "bn":
            add_bn(spec.name, spec.c_in)
        elif spec.kind == "vecnorm":
            tensors[f"{spec.name}.gain"] = Tensor(np.ones(spec.c_in), requires_grad=True,
                                                  name=f"{spec.name}.gain")
            tensors[f"{spec.name}.offset"] = Tensor(np.zeros(spec.c_in), requires_grad=True,
                                                    name=f"{spec.name}.offset")
        elif spec.kind == "gru":
            h, c = spec.c_out, spec.c_in
            for gate in ("z", "r", "n"):
                tensors[f"{spec.name}.w{gate}"] = _uniform_param(
                    rng, (h, c), c, f"{spec.name}.w{gate}")
            for gate in ("z", "r", "n"):
                tensors[f"{spec.name}.u{gate}"] = _uniform_param(
                    rng, (h, h), h, f"{spec.name}.u{gate}")
            for bias in ("biz", "bir", "bin", "bhz", "bhr", "bhn"):
                tensors[f"{spec.name}.{bias}"] = _uniform_param(
                    rng, (h,), h, f"{spec.name}.{bias}")
        elif spec.kind == "linear":
            tensors[f"{spec.name}.w"] = _uniform_param(
                rng, (spec.c_out, spec.c_in), spec.c_in, f"{spec.name}.w")
            tensors[f"{spec.name}.b"] = _uniform_param(
                rng, (spec.c_out,), spec.c_in, f"{spec.name}.b")
        # pool / act / stats carry no parameters

    buffers["meta.main_only"] = np.zeros(1)
    return ModelParams(cfg, tensors, buffers)


def fix_length(w: Waveform, n: int) -> Waveform:
    """Repeat-pads short utterances and truncates long ones to ``n`` samples."""
    if len(w) == 0:
        raise DataError(f"waveform {w.utt_id!r} is empty")
    if len(w) == n:
        return w
    reps = -(-n // len(w))
    return Waveform(np.tile(w.samples, reps)[:n], w.sample_rate, w.utt_id)


def _bn(params: ModelParams, name: str, x: Tensor, training: bool) -> Tensor:
    return tn.batchnorm(
        x, params.tensors[f"{name}.gain"], params.tensors[f"{name}.offset"],
        params.buffers[f"stats.{name}.mean"], params.buffers[f"stats.{name}.var"],
        training)


def auxiliary_encode(w: Waveform, params: ModelParams, training: bool = False) -> Embedding:
    """Raw-waveform branch; returns the narrow auxiliary embedding."""
    cfg = params.cfg
    w = fix_length(w, cfg.input_len)
    x = tn.Tensor(w.samples[:, None])
    x = tn.conv1d(x, params.tensors["aux.conv.w"], params.tensors["aux.conv.b"],
                  stride=cfg.aux_stride)
    x = tn.leaky_relu(_bn(params, "aux.bn0", x, training), cfg.leaky_slope)
    for i in range(1, 4):
        x = tn.maxpool1d(x, cfg.pool_kernel, cfg.pool_stride)
        x = tn.leaky_relu(_bn(params, f"aux.bn{i}", x, training), cfg.leaky_slope)
    h = tn.gru_forward(x, cfg.gru_hidden, params.gru("aux.gru"))
    if cfg.aux_embed_dim is not None:
        h = tn.linear(h, params.tensors["aux.proj.w"], params.tensors["aux.proj.b"])
    return Embedding(values=h, source="aux")


def main_encode(f: FeatureMap, params: ModelParams, training: bool = False) -> Embedding:
    """Handcrafted-feature branch; returns the main embedding."""
    cfg = params.cfg
    if f.kind != cfg.frontend.kind:
        raise DataError(
            f"feature map kind {f.kind!r} does not match configured "
            f"front-end {cfg.frontend.kind!r}")
    if f.n_bins != cfg.frontend.n_bins:
        raise ShapeError(
            f"feature map has {f.n_bins} bins, configured front-end expects "
            f"{cfg.frontend.n_bins}")
    values = f.values
    if cfg.feature_norm:
        mu = values.mean(axis=0)
        sd = np.sqrt(values.var(axis=0) + tn.BN_EPS)
        values = (values - mu) / sd
    x = tn.Tensor(values)
    for i, (k, d) in enumerate(zip(TDNN_KERNELS, TDNN_DILATIONS)):
        x = tn.conv1d(x, params.tensors[f"main.tdnn{i}.w"],
                      params.tensors[f"main.tdnn{i}.b"], stride=1, dilation=d)
        x = tn.leaky_relu(_bn(params, f"main.bn{i}", x, training), cfg.leaky_slope)
    pooled = tn.stats_pooling(x)
    e = tn.linear(pooled, params.tensors["main.embed.w"], params.tensors["main.embed.b"])
    return Embedding(values=e, source="main")


def concat_encode(a: Embedding, m: Embedding, params: ModelParams,
                  training: bool = False) -> Embedding:
    """Fuses the two embeddings, contractually ordered [aux ++ main]."""
    cfg = params.cfg
    if a.source != "aux" or m.source != "main":
        raise DataError(
            f"concat_encode needs (aux, main) embeddings, got "
            f"({a.source!r}, {m.source!r})")
    if a.values.shape != (cfg.dim_aux,) or m.values.shape != (cfg.embed_dim,):
        raise ShapeError(
            f"embedding dims {a.values.shape}/{m.values.shape} do not match "
            f"configured {cfg.dim_aux}/{cfg.embed_dim}")
    v = tn.concat_vectors(a.values, m.values)
    v = tn.vector_norm(v, params.tensors["concat.norm.gain"],
                       params.tensors["concat.norm.offset"])
    row = tn.reshape(v, (1, cfg.concat_in))
    out = tn.conv1d(row, params.tensors["concat.conv.w"],
                    params.tensors["concat.conv.b"], stride=1)
    return Embedding(values=tn.reshape(out, (cfg.concat_out,)), source="concat")


def decode(e: Embedding, params: ModelParams) -> Tensor:
    """Two logits ordered [bonafide, spoof]."""
    if e.source != "concat":
        raise DataError(f"decoder expects the fused embedding, got {e.source!r}")
    return tn.linear(e.values, params.tensors["dec.linear.w"],
                     params.tensors["dec.linear.b"])


def detection_score(logits: Tensor) -> float:
    """Scalar score: bona fide logit minus spoof logit (higher = more bona fide)."""
    return float(logits.data[0] - logits.data[1])


def forward_logits(w: Waveform, params: ModelParams, mode: str = MODE_ARNET,
                   training: bool = False, feature: FeatureMap | None = None) -> Tensor:
    """Full forward pass to the two logits.

    ``main_only`` mode feeds a zero auxiliary embedding, which makes the
    score independent of every waveform-branch parameter. A precomputed
    ``feature`` map (of the length-fixed waveform) may be passed to skip
    front-end extraction.
    """
    cfg = params.cfg
    if mode not in (MODE_ARNET, MODE_MAIN_ONLY):
        raise ConfigError(f"unknown mode {mode!r}")
    w = fix_length(w, cfg.input_len)
    if feature is None:
        feature = extract(w, cfg.frontend)
    m = main_encode(feature, params, training)
    if mode == MODE_MAIN_ONLY:
        a = Embedding(values=tn.Tensor(np.zeros(cfg.dim_aux)), source="aux")
    else:
        a = auxiliary_encode(w, params, training)
    c = concat_encode(a, m, params, training)
    return decode(c, params)


def forward(w: Waveform, params: ModelParams, mode: str = MODE_ARNET) -> float:
    """Inference-mode detection score for one utterance."""
    return detection_score(forward_logits(w, params, mode, training=False))


def activation_dump(w: Waveform, params: ModelParams) -> list[tuple[str, np.ndarray]]:
    """The four auxiliary-branch stages used for offline visualization:
    the strided convolution output and three successive max-poolings of it.

    Normalization and activation layers are bypassed here so every stage
    stays on the convolution output's scale; the pooled stages are then
    bounded by the conv stage's per-channel range.
    """
    cfg = params.cfg
    w = fix_length(w, cfg.input_len)
    x = tn.Tensor(w.samples[:, None])
    conv = tn.conv1d(x, params.tensors["aux.conv.w"], params.tensors["aux.conv.b"],
                     stride=cfg.aux_stride)
    stages = [("conv", conv.data.copy())]
    cur = conv
    for i in range(1, 4):
        cur = tn.maxpool1d(cur, cfg.pool_kernel, cfg.pool_stride)
        stages.append((f"pool{i}", cur.data.copy()))
    return stages


def aux_frame_counts(cfg: ArNetConfig, input_len: int | None = None) -> list[int]:
    """Frame counts after the strided conv and each pooling stage."""
    t = cfg.input_len if input_len is None else input_len
    counts = [(t - cfg.aux_kernel) // cfg.aux_stride + 1]
    for _ in range(3):
        counts.append((counts[-1] - cfg.pool_kernel) // cfg.pool_stride + 1)
    return counts


# ---------------------------------------------------------------------------
# training / scoring
# ---------------------------------------------------------------------------


def train(cfg: ArNetConfig, dataset: list[tuple[Waveform, str]], epochs: int,
          batch_size: int, lr: float, mode: str = MODE_ARNET,
          ) -> tuple[ModelParams, list[tuple[int, float]]]:
    """Mini-batch Adam on class-weighted softmax cross entropy.

    Classes are weighted by inverse frequency; shuffling and init are
    seeded, so identical inputs give an identical loss history. Returns the
    trained parameters and per-epoch (epoch, mean loss).
    """
    if mode not in (MODE_ARNET, MODE_MAIN_ONLY):
        raise ConfigError(f"unknown mode {mode!r}")
    if not dataset:
        raise DataError("training dataset is empty")
    labels = [label for _, label in dataset]
    for label in labels:
        if label not in LABEL_TO_CLASS:
            raise DataError(f"unknown label {label!r}")
    n_bona = labels.count(BONAFIDE)
    n_spoof = labels.count(SPOOF)
    if n_bona == 0 or n_spoof == 0:
        raise DataError(
            f"training needs both classes, got {n_bona} bona fide / {n_spoof} spoof")
    n = len(dataset)
    class_weight = {0: n / (2.0 * n_bona), 1: n / (2.0 * n_spoof)}

    rng = RngState(cfg.seed)
    params = init_params(cfg, rng)
    if mode == MODE_MAIN_ONLY:
        for name, t in params.tensors.items():
            if name.startswith("aux."):
                t.data[...] = 0.0
        params.set_main_only(True)

    fixed = [fix_length(w, cfg.input_len) for w, _ in dataset]
    feats = [extract(w, cfg.frontend) for w in fixed]
    classes = [LABEL_TO_CLASS[label] for label in labels]
    trainables = {name: t for name, t in params.tensors.items()
                  if not (mode == MODE_MAIN_ONLY and name.startswith("aux."))}
    opt = OptimizerState(lr=lr)

    history: list[tuple[int, float]] = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            params.zero_grads()
            for idx in batch:
                logits = forward_logits(fixed[idx], params, mode, training=True,
                                        feature=feats[idx])
                weighted = tn.softmax_cross_entropy(logits, classes[idx]) \
                    * (class_weight[classes[idx]] / len(batch))
                tn.backward(weighted)
                total += weighted.item() * len(batch)
            adam_step(trainables, opt)
        history.append((epoch, total / n))
    params.zero_grads()
    return params, history


def score_dataset(params: ModelParams,
                  dataset: list[tuple[Waveform, str]]) -> ScoreSet:
    """Inference-mode scores for every utterance, honoring the model's
    stored main-only flag."""
    mode = MODE_MAIN_ONLY if params.main_only else MODE_ARNET
    out = ScoreSet()
    for w, label in dataset:
        out.add(w.utt_id, forward(w, params, mode), label)
    return out


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_FRONTEND_KIND_CODE = {MEL_KIND: 0.0, CQT_KIND: 1.0}
_FRONTEND_KIND_NAME = {0.0: MEL_KIND, 1.0: CQT_KIND}


def _cfg_to_meta(cfg: ArNetConfig) -> list[tuple[str, np.ndarray]]:
    fe = cfg.frontend
    scalars = {
        "meta.cfg.input_len": cfg.input_len,
        "meta.cfg.sample_rate": cfg.sample_rate,
        "meta.cfg.aux_channels": cfg.aux_channels,
        "meta.cfg.aux_kernel": cfg.aux_kernel,
        "meta.cfg.aux_stride": cfg.aux_stride,
        "meta.cfg.pool_kernel": cfg.pool_kernel,
        "meta.cfg.pool_stride": cfg.pool_stride,
        "meta.cfg.gru_hidden": cfg.gru_hidden,
        "meta.cfg.aux_embed_dim": -1 if cfg.aux_embed_dim is None else cfg.aux_embed_dim,
        "meta.cfg.embed_dim": cfg.embed_dim,
        "meta.cfg.concat_out": cfg.concat_out,
        "meta.cfg.leaky_slope": cfg.leaky_slope,
        "meta.cfg.feature_norm": float(cfg.feature_norm),
        "meta.cfg.seed": cfg.seed,
        "meta.cfg.enforce_bottleneck": float(cfg.enforce_bottleneck),
        "meta.cfg.frontend_kind": _FRONTEND_KIND_CODE[fe.kind],
        "meta.cfg.n_fft": fe.n_fft,
        "meta.cfg.hop": fe.hop,
        "meta.cfg.n_mels": fe.n_mels,
        "meta.cfg.fmin": fe.fmin,
        "meta.cfg.fmax": fe.fmax,
        "meta.cfg.cqt_fmin": fe.cqt_fmin,
        "meta.cfg.cqt_bins_per_octave": fe.cqt_bins_per_octave,
        "meta.cfg.cqt_n_bins": fe.cqt_n_bins,
        "meta.cfg.cqt_hop": fe.cqt_hop,
    }
    entries = [(k, np.asarray([float(v)])) for k, v in scalars.items()]
    entries.append(("meta.cfg.tdnn_channels",
                    np.asarray(cfg.tdnn_channels, dtype=np.float64)))
    return entries


def _cfg_from_meta(meta: dict[str, np.ndarray]) -> ArNetConfig:
    def scalar(key):
        return float(meta[key][0])

    try:
        aux_embed = int(scalar("meta.cfg.aux_embed_dim"))
        fe = FrontendConfig(
            kind=_FRONTEND_KIND_NAME[scalar("meta.cfg.frontend_kind")],
            sample_rate=int(scalar("meta.cfg.sample_rate")),
            n_fft=int(scalar("meta.cfg.n_fft")),
            hop=int(scalar("meta.cfg.hop")),
            n_mels=int(scalar("meta.cfg.n_mels")),
            fmin=scalar("meta.cfg.fmin"),
            fmax=scalar("meta.cfg.fmax"),
            cqt_fmin=scalar("meta.cfg.cqt_fmin"),
            cqt_bins_per_octave=int(scalar("meta.cfg.cqt_bins_per_octave")),
            cqt_n_bins=int(scalar("meta.cfg.cqt_n_bins")),
            cqt_hop=int(scalar("meta.cfg.cqt_hop")),
        )
        return ArNetConfig(
            input_len=int(scalar("meta.cfg.input_len")),
            sample_rate=int(scalar("meta.cfg.sample_rate")),
            aux_channels=int(scalar("meta.cfg.aux_channels")),
            aux_kernel=int(scalar("meta.cfg.aux_kernel")),
            aux_stride=int(scalar("meta.cfg.aux_stride")),
            pool_kernel=int(scalar("meta.cfg.pool_kernel")),
            pool_stride=int(scalar("meta.cfg.pool_stride")),
            gru_hidden=int(scalar("meta.cfg.gru_hidden")),
            aux_embed_dim=None if aux_embed < 0 else aux_embed,
            tdnn_channels=tuple(int(v) for v in meta["meta.cfg.tdnn_channels"]),
            embed_dim=int(scalar("meta.cfg.embed_dim")),
            concat_out=int(scalar("meta.cfg.concat_out")),
            leaky_slope=scalar("meta.cfg.leaky_slope"),
            feature_norm=bool(scalar("meta.cfg.feature_norm")),
            seed=int(scalar("meta.cfg.seed")),
            enforce_bottleneck=bool(scalar("meta.cfg.enforce_bottleneck")),
            frontend=fe,
        )
    except KeyError as e:
        raise FormatError(f"model file lacks config entry {e.args[0]!r}") from None


def save_model(path, params: ModelParams) -> None:
    """Binary model file: magic, version, tensor count, then per tensor the
    name, rank, dims, and float64 little-endian payload."""
    entries: list[tuple[str, np.ndarray]] = []
    entries.extend(_cfg_to_meta(params.cfg))
    entries.append(("meta.main_only", params.buffers["meta.main_only"]))
    for name, t in params.tensors.items():
        entries.append((name, t.data))
    for name, arr in params.buffers.items():
        if name.startswith("stats."):
            entries.append((name, arr))

    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(entries)))
        for name, arr in entries:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {MODEL_MAGIC!r}")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    offset = 12
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            payload = blob[offset:offset + 8 * n]
            if len(payload) != 8 * n:
                raise struct.error("payload short")
            offset += 8 * n
            entries[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
        except struct.error:
            raise FormatError(f"{path}: truncated tensor table") from None
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")

    meta = {k: v for k, v in entries.items() if k.startswith("meta.cfg.")}
    cfg = _cfg_from_meta(meta)
    fresh = init_params(cfg, RngState(cfg.seed))
    for name, t in fresh.tensors.items():
        if name not in entries:
            raise FormatError(f"{path}: missing parameter {name!r}")
        if entries[name].shape != t.data.shape:
            raise FormatError(
                f"{path}: parameter {name!r} has shape {entries[name].shape}, "
                f"expected {t.data.shape}")
        t.data = entries[name]
    for name in list(fresh.buffers):
        if name == "meta.main_only":
            fresh.buffers[name] = entries.get(name, np.zeros(1)).copy()
        else:
            if name not in entries:
                raise FormatError(f"{path}: missing buffer {name!r}")
            fresh.buffers[name] = entries[name]
    return fresh
