"""Flat ``key = value`` run configuration.

The format is a UTF-8 text file, one assignment per line; ``#`` starts a
comment and blank lines are ignored. Every key may appear at most once,
unknown keys are rejected, and missing keys fall back to the defaults of
the base model configuration (or the documented constants below).
"""
from __future__ import annotations

from dataclasses import dataclass

from .data import ARTIFACTS, SynthSpec
from .errors import ConfigError
from .frontend import FrontendConfig
from .metrics import AsvOperatingPoint
from .model import ArNetConfig


def _to_int(s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"expected an integer, got {s!r}") from None


def _to_float(s: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"expected a number, got {s!r}") from None


def _to_bool(s: str) -> bool:
    low = s.lower()
    if low not in ("true", "false"):
        raise ConfigError(f"expected true/false, got {s!r}")
    return low == "true"


def _to_opt_int(s: str):
    return None if s.lower() == "none" else _to_int(s)


def _to_ints(s: str) -> tuple[int, ...]:
    return tuple(_to_int(part.strip()) for part in s.split(","))


def _to_str(s: str) -> str:
    return s


_SCHEMA = {
    # model
    "input_len": _to_int,
    "sample_rate": _to_int,
    "aux_channels": _to_int,
    "aux_kernel": _to_int,
    "aux_stride": _to_int,
    "pool_kernel": _to_int,
    "pool_stride": _to_int,
    "gru_hidden": _to_int,
    "aux_embed_dim": _to_opt_int,
    "tdnn_channels": _to_ints,
    "embed_dim": _to_int,
    "concat_out": _to_int,
    "leaky_slope": _to_float,
    "feature_norm": _to_bool,
    "seed": _to_int,
    "enforce_bottleneck": _to_bool,
    "frontend": _to_str,
    # front-end
    "n_fft": _to_int,
    "hop": _to_int,
    "n_mels": _to_int,
    "fmin": _to_float,
    "fmax": _to_float,
    "cqt_fmin": _to_float,
    "cqt_bins_per_octave": _to_int,
    "cqt_n_bins": _to_int,
    "cqt_hop": _to_int,
    # training
    "epochs": _to_int,
    "batch_size": _to_int,
    "lr": _to_float,
    # synthetic data
    "synth_n": _to_int,
    "synth_duration": _to_float,
    "synth_artifact": _to_str,
    "synth_seed": _to_opt_int,
    "synth_eval_seed": _to_opt_int,
    # tandem operating point
    "p_miss_asv": _to_float,
    "p_fa_asv": _to_float,
    "p_miss_spoof_asv": _to_float,
    "pi_tar": _to_float,
    "pi_non": _to_float,
    "pi_spoof": _to_float,
    "c_miss_asv": _to_float,
    "c_fa_asv": _to_float,
    "c_miss_cm": _to_float,
    "c_fa_cm": _to_float,
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    """Parses assignments into typed values; each key at most once."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _SCHEMA[key](raw)
        except ConfigError as e:
            raise ConfigError(f"{source}:{lineno}: {key}: {e}") from None
    return values


@dataclass
class RunConfig:
    """Everything a command needs: model config, training hyperparameters,
    synthetic-data recipe, and the tandem operating point."""

    cfg: ArNetConfig
    epochs: int = 2
    batch_size: int = 16
    lr: float = 1e-3
    synth_n: int = 100
    synth_duration: float = 0.6
    synth_artifact: str = "phase_flatten"
    synth_seed: int | None = None
    synth_eval_seed: int | None = None

    asv: AsvOperatingPoint = None  # filled in resolve()

    def train_synth_spec(self) -> SynthSpec:
        seed = self.cfg.seed if self.synth_seed is None else self.synth_seed
        return SynthSpec(seed=seed, n_per_class=self.synth_n,
                         duration_s=self.synth_duration, sr=self.cfg.sample_rate,
                         artifact=self.synth_artifact)

    def eval_synth_spec(self) -> SynthSpec:
        base = self.cfg.seed if self.synth_seed is None else self.synth_seed
        seed = base + 1 if self.synth_eval_seed is None else self.synth_eval_seed
        return SynthSpec(seed=seed, n_per_class=self.synth_n,
                         duration_s=self.synth_duration, sr=self.cfg.sample_rate,
                         artifact=self.synth_artifact)


def resolve(values: dict[str, object], base: ArNetConfig | None = None) -> RunConfig:
    """Builds the run configuration, layering file values over ``base``."""
    base = base if base is not None else ArNetConfig()

    def pick(key, fallback):
        return values.get(key, fallback)

    fe = base.frontend
    frontend = FrontendConfig(
        kind=pick("frontend", fe.kind),
        sample_rate=pick("sample_rate", base.sample_rate),
        n_fft=pick("n_fft", fe.n_fft),
        hop=pick("hop", fe.hop),
        n_mels=pick("n_mels", fe.n_mels),
        fmin=pick("fmin", fe.fmin),
        fmax=pick("fmax", fe.fmax),
        cqt_fmin=pick("cqt_fmin", fe.cqt_fmin),
        cqt_bins_per_octave=pick("cqt_bins_per_octave", fe.cqt_bins_per_octave),
        cqt_n_bins=pick("cqt_n_bins", fe.cqt_n_bins),
        cqt_hop=pick("cqt_hop", fe.cqt_hop),
    )
    cfg = ArNetConfig(
        input_len=pick("input_len", base.input_len),
        sample_rate=pick("sample_rate", base.sample_rate),
        aux_channels=pick("aux_channels", base.aux_channels),
        aux_kernel=pick("aux_kernel", base.aux_kernel),
        aux_stride=pick("aux_stride", base.aux_stride),
        pool_kernel=pick("pool_kernel", base.pool_kernel),
        pool_stride=pick("pool_stride", base.pool_stride),
        gru_hidden=pick("gru_hidden", base.gru_hidden),
        aux_embed_dim=pick("aux_embed_dim", base.aux_embed_dim),
        tdnn_channels=pick("tdnn_channels", base.tdnn_channels),
        embed_dim=pick("embed_dim", base.embed_dim),
        concat_out=pick("concat_out", base.concat_out),
        leaky_slope=pick("leaky_slope", base.leaky_slope),
        feature_norm=pick("feature_norm", base.feature_norm),
        seed=pick("seed", base.seed),
        enforce_bottleneck=pick("enforce_bottleneck", base.enforce_bottleneck),
        frontend=frontend,
    )
    artifact = pick("synth_artifact", "phase_flatten")
    if artifact not in ARTIFACTS:
        raise ConfigError(f"synth_artifact must be one of {ARTIFACTS}, got {artifact!r}")
    asv = AsvOperatingPoint(
        p_miss_asv=pick("p_miss_asv", 0.01),
        p_fa_asv=pick("p_fa_asv", 0.01),
        p_miss_spoof_asv=pick("p_miss_spoof_asv", 0.05),
        pi_tar=pick("pi_tar", 0.9405),
        pi_non=pick("pi_non", 0.0095),
        pi_spoof=pick("pi_spoof", 0.05),
        c_miss_asv=pick("c_miss_asv", 1.0),
        c_fa_asv=pick("c_fa_asv", 10.0),
        c_miss_cm=pick("c_miss_cm", 1.0),
        c_fa_cm=pick("c_fa_cm", 10.0),
    )
    return RunConfig(
        cfg=cfg,
        epochs=pick("epochs", 2),
        batch_size=pick("batch_size", 16),
        lr=pick("lr", 1e-3),
        synth_n=pick("synth_n", 100),
        synth_duration=pick("synth_duration", 0.6),
        synth_artifact=artifact,
        synth_seed=pick("synth_seed", None),
        synth_eval_seed=pick("synth_eval_seed", None),
        asv=asv,
    )


def load_run_config(path=None, base: ArNetConfig | None = None) -> RunConfig:
    if path is None:
        return resolve({}, base)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return resolve(parse_config_text(text, source=str(path)), base)
