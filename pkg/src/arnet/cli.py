"""Command-line surface.

Exit codes are a stable contract: 0 success, 1 verification failure,
2 usage/format/config error, 3 data error. Stdout carries the
machine-parseable results; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import complexity as cx
from . import data as dio
from . import gradcheck as gc
from . import model as md
from .config import load_run_config
from .errors import ConfigError, DataError, FormatError, ShapeError
from .frontend import CQT_KIND, MEL_KIND, extract
from .metrics import evaluate

_PRESETS = {
    "desk": md.desk_config,
    "tiny": md.tiny_config,
    "wide": md.wide_aux_config,
}


def _base_config(args):
    preset = getattr(args, "preset", None)
    return _PRESETS[preset]() if preset else None


def _cmd_featurize(args) -> int:
    rc = load_run_config(args.config)
    fe = rc.cfg.frontend
    if args.frontend:
        from dataclasses import replace
        fe = replace(fe, kind=args.frontend)
    w = dio.read_wav(args.wav)
    fm = extract(w, fe)
    dio.write_features(args.out, fm.values)
    print(f"rows={fm.n_frames} cols={fm.n_bins}")
    return 0


def _load_data(args, rc, for_eval: bool):
    if args.data == "synth":
        spec = rc.eval_synth_spec() if for_eval else rc.train_synth_spec()
        return dio.synth_dataset(spec)
    return dio.load_dataset_dir(args.data)


def _cmd_train(args) -> int:
    rc = load_run_config(args.config, base=_base_config(args))
    dataset = _load_data(args, rc, for_eval=False)
    params, history = md.train(rc.cfg, dataset, rc.epochs, rc.batch_size, rc.lr,
                               mode=args.mode)
    md.save_model(args.out, params)
    print(f"final_loss={history[-1][1]:.6f}")
    return 0


def _cmd_eval(args) -> int:
    params = md.load_model(args.model)
    rc = load_run_config(args.config, base=params.cfg)
    dataset = _load_data(args, rc, for_eval=True)
    scores = md.score_dataset(params, dataset)
    dio.write_scores(args.scores_out, scores)
    report = evaluate(scores, rc.asv)
    print(f"EER: {report.eer * 100.0:.4f}%")
    print(f"min-tDCF: {report.min_tdcf:.4f}")
    return 0


def _cmd_complexity(args) -> int:
    rc = load_run_config(args.config, base=_base_config(args))
    report = cx.build_report(rc.cfg, args.input_len)
    print(cx.render_csv(report) if args.csv else cx.render_table(report))
    return 0


def _cmd_gradcheck(args) -> int:
    results = gc.run_suite(perturb=args.perturb)
    failed = []
    for name, err in results.items():
        print(f"op={name} max_rel_err={err:.3e}")
        if err >= gc.TOLERANCE:
            failed.append(name)
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _cmd_synth(args) -> int:
    rc = load_run_config(args.config)
    spec = dio.SynthSpec(seed=args.seed, n_per_class=args.n,
                         duration_s=rc.synth_duration, sr=rc.cfg.sample_rate,
                         artifact=rc.synth_artifact)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = dio.synth_dataset(spec)
    for w, _label in dataset:
        dio.write_wav(out_dir / f"{w.utt_id}.wav", w)
    proto = out_dir / "protocol.txt"
    dio.write_protocol(proto, dio.dataset_records(dataset, spec.artifact))
    print(f"wavs={len(dataset)} protocol={proto}")
    return 0


def _cmd_dump_activations(args) -> int:
    params = md.load_model(args.model)
    w = dio.read_wav(args.wav)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, values in md.activation_dump(w, params):
        dio.write_features(out_dir / f"{name}.arnf", values)
        print(f"stage={name} rows={values.shape[0]} cols={values.shape[1]}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arnet",
        description="Anti-spoofing toolkit: featurize / train / eval / "
                    "complexity / gradcheck / synth / dump-activations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="extract a feature file from a WAV")
    p.add_argument("--wav", required=True)
    p.add_argument("--frontend", choices=[MEL_KIND, CQT_KIND], default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("train", help="train a model on a directory or synth data")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", choices=sorted(_PRESETS), default=None)
    p.add_argument("--data", required=True, help="dataset directory or 'synth'")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--mode", choices=[md.MODE_ARNET, md.MODE_MAIN_ONLY],
                   default=md.MODE_ARNET)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a dataset and report EER / min-tDCF")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="dataset directory or 'synth'")
    p.add_argument("--scores-out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("complexity", help="per-layer parameter and MAC report")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", choices=sorted(_PRESETS), default=None)
    p.add_argument("--input-len", type=int, default=None)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=_cmd_complexity)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--perturb", default=None, metavar="OP",
                   help="testing hook: corrupt one op's gradient to force a failure")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("synth", help="write a seeded synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True, help="utterances per class")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("dump-activations",
                       help="write the conv and pooling stage outputs as feature files")
    p.add_argument("--wav", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_dump_activations)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, FormatError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entry() -> None:  # console-script wrapper
    sys.exit(main())
