"""Anti-spoofing toolkit: a lightweight raw-waveform auxiliary encoder
complementing a handcrafted-feature main encoder, plus the DSP front-ends,
metrics, and complexity accounting needed to exercise the design."""

from .complexity import ComplexityReport, build_report, count_macs, count_params
from .data import SynthSpec, TrialRecord, read_wav, synth_dataset, write_wav
from .errors import ConfigError, DataError, FormatError, GraphError, ShapeError
from .frontend import (
    FeatureMap,
    FilterBank,
    FrontendConfig,
    Waveform,
    cqt,
    extract,
    frame_and_window,
    log_mel,
    mel_filterbank,
    stft_power,
)
from .metrics import (
    AsvOperatingPoint,
    EvalReport,
    ScoreSet,
    compute_eer,
    compute_min_tdcf,
    det_points,
    evaluate,
)
from .model import (
    ArNetConfig,
    Embedding,
    ModelParams,
    activation_dump,
    auxiliary_encode,
    concat_encode,
    decode,
    desk_config,
    forward,
    forward_logits,
    init_params,
    load_model,
    main_encode,
    micro_config,
    save_model,
    score_dataset,
    tiny_config,
    train,
    wide_aux_config,
)
from .optim import OptimizerState, adam_step
from .rng import RngState
from .tensor import Tensor, backward

__version__ = "0.1.0"
