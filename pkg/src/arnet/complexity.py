"""Analytic trainable-parameter and multiply-accumulate (MAC) accounting.

Counting conventions
--------------------
* one MAC = one multiply-accumulate; biases, normalization, activations and
  pooling cost 0 MACs (they are adds, comparisons, or normalizations);
* batch/vector norms contribute their affine gain and offset (2C) as
  trainable parameters; running statistics are buffers, not trainables;
* the GRU carries separate input and recurrent biases, hence
  ``3*(H*C + H*H + 2H)`` parameters and ``T*3*(H*C + H*H)`` MACs (this is
  the common two-bias formulation; a fused single-bias variant would drop
  3H parameters).

Reports are pure functions of the configuration and the stated input
length, and they walk the same layer plan used to instantiate parameters,
so the totals match the instantiated model tensor-for-tensor.
"""
from __future__ import annotations

from dataclasses import dataclass

from .frontend import feature_frame_count
from .model import ArNetConfig, LayerSpec, layer_plan

ENCODER_ORDER = ("aux", "main", "concat", "decoder")


@dataclass(frozen=True)
class LayerRow:
    name: str
    encoder: str
    params: int
    macs: int


@dataclass
class ComplexityReport:
    input_len: int
    rows: list[LayerRow]

    def encoder_totals(self) -> dict[str, tuple[int, int]]:
        totals = {enc: [0, 0] for enc in ENCODER_ORDER}
        for row in self.rows:
            totals[row.encoder][0] += row.params
            totals[row.encoder][1] += row.macs
        return {enc: (p, m) for enc, (p, m) in totals.items()}

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    def auxiliary_addition(self) -> tuple[int, int]:
        """Parameters and MACs added by the auxiliary + concatenate stack."""
        totals = self.encoder_totals()
        return (totals["aux"][0] + totals["concat"][0],
                totals["aux"][1] + totals["concat"][1])


def _layer_params(spec: LayerSpec) -> int:
    if spec.kind == "conv":
        return spec.c_out * spec.c_in * spec.kernel + spec.c_out
    if spec.kind in ("bn", "vecnorm"):
        return 2 * spec.c_in
    if spec.kind == "gru":
        h, c = spec.c_out, spec.c_in
        return 3 * (h * c + h * h + 2 * h)
    if spec.kind == "linear":
        return spec.c_out * spec.c_in + spec.c_out
    return 0


def _conv_out_len(t: int, spec: LayerSpec) -> int:
    span = (spec.kernel - 1) * spec.dilation + 1
    return (t - span) // spec.stride + 1


def build_report(cfg: ArNetConfig, input_len: int | None = None) -> ComplexityReport:
    """Per-layer parameter and MAC counts for one forward pass at
    ``input_len`` samples. Rows cover parameterized layers only."""
    t = cfg.input_len if input_len is None else int(input_len)
    if t < 1:
        raise ValueError(f"input_len must be positive, got {t}")
    time_at = {"aux": t, "main": feature_frame_count(t, cfg.frontend),
               "concat": 1, "decoder": 1}
    rows: list[LayerRow] = []
    for spec in layer_plan(cfg):
        t_here = time_at[spec.encoder]
        macs = 0
        if spec.kind == "conv":
            t_out = _conv_out_len(t_here, spec)
            macs = t_out * spec.c_out * spec.c_in * spec.kernel
            time_at[spec.encoder] = t_out
        elif spec.kind == "pool":
            time_at[spec.encoder] = (t_here - spec.kernel) // spec.stride + 1
        elif spec.kind == "gru":
            macs = t_here * 3 * (spec.c_out * spec.c_in + spec.c_out * spec.c_out)
        elif spec.kind == "linear":
            macs = spec.c_out * spec.c_in
        elif spec.kind == "stats":
            time_at[spec.encoder] = 1
        params = _layer_params(spec)
        if params or macs:
            rows.append(LayerRow(spec.name, spec.encoder, params, macs))
    return ComplexityReport(input_len=t, rows=rows)


def count_params(cfg: ArNetConfig) -> ComplexityReport:
    """Trainable-parameter report (MAC column evaluated at the config's
    own input length)."""
    return build_report(cfg, cfg.input_len)


def count_macs(cfg: ArNetConfig, input_len: int) -> ComplexityReport:
    """Multiply-accumulate report for one forward pass at ``input_len``."""
    return build_report(cfg, input_len)


def render_table(report: ComplexityReport) -> str:
    name_w = max(len("layer"), max((len(r.name) for r in report.rows), default=5),
                 len("total.decoder"))
    lines = [f"{'layer':<{name_w}} {'params':>12} {'macs':>16}"]
    for r in report.rows:
        lines.append(f"{r.name:<{name_w}} {r.params:>12} {r.macs:>16}")
    lines.append("-" * (name_w + 30))
    for enc, (p, m) in report.encoder_totals().items():
        lines.append(f"{'total.' + enc:<{name_w}} {p:>12} {m:>16}")
    lines.append(f"{'total':<{name_w}} {report.total_params:>12} {report.total_macs:>16}")
    return "\n".join(lines)


def render_csv(report: ComplexityReport) -> str:
    lines = [f"{r.name},{r.params},{r.macs}" for r in report.rows]
    for enc, (p, m) in report.encoder_totals().items():
        lines.append(f"total.{enc},{p},{m}")
    lines.append(f"total,{report.total_params},{report.total_macs}")
    return "\n".join(lines)
