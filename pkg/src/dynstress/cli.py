"""Command-line entry point wiring the pipeline stages together.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.
Every run writes its fully resolved configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import evaluation, pipeline
from .features import MfccConfig, write_fseq
from .labelling import LabellingConfig
from .model import ModelConfig, load_checkpoint
from .segmentation import (
    DataError,
    align_labels,
    concat_augment,
    load_clip,
    read_manifest,
    segment,
    write_wav,
)
from .training import TrainConfig, TrainingDiverged, train
from .vad import is_stress

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _read_config_file(path: str) -> dict:
    """Simple key=value config; '#' starts a comment."""
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}: bad config line {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


def _merge_config(args: argparse.Namespace) -> None:
    """File values fill in flags the user left at their defaults."""
    if not getattr(args, "config", None):
        return
    file_vals = _read_config_file(args.config)
    # the subcommand's own parser holds the flag defaults
    parser = args.subparser
    for key, val in file_vals.items():
        if not hasattr(args, key):
            continue
        default = parser.get_default(key)
        if getattr(args, key) == default:
            cur = default
            if isinstance(cur, bool):
                val = val.lower() in ("1", "true", "yes")
            elif isinstance(cur, int):
                val = int(val)
            elif isinstance(cur, float):
                val = float(val)
            setattr(args, key, val)


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", None) or
               os.environ.get("DYNSTRESS_RUN_DIR", "runs"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_resolved(args, out: Path) -> None:
    resolved = {
        k: v for k, v in vars(args).items() if k not in ("func", "subparser")
    }
    (out / "resolved_config.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True, default=str) + "\n"
    )


def _lab_cfg(args) -> LabellingConfig:
    return LabellingConfig(n=args.n, lam=args.lam, tau=args.tau)


def _add_label_flags(p):
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--lambda", dest="lam", type=float, default=0.8)
    p.add_argument("--tau", type=float, default=0.5)


def _add_common(p):
    p.add_argument("--manifest", required=True)
    p.add_argument("--base-dir", default=None,
                   help="directory audio paths are relative to "
                        "(default: the manifest's directory)")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="key=value config file")


def _base_dir(args) -> Path:
    return Path(args.base_dir) if args.base_dir else Path(args.manifest).parent


# --- subcommands ---

def cmd_segment(args):
    out = _out_dir(args)
    _write_resolved(args, out)
    with open(out / "windows.jsonl", "w") as f:
        for rec in read_manifest(args.manifest):
            clip = load_clip(rec, _base_dir(args))
            for w in align_labels(segment(clip), rec.spans):
                f.write(json.dumps({
                    "clip_id": w.clip_id, "index": w.index,
                    "start_s": w.start, "end_s": w.end,
                    "label": w.label.to_text() if w.label else None,
                }) + "\n")
    return 0


def cmd_augment(args):
    out = _out_dir(args)
    _write_resolved(args, out)
    records = read_manifest(args.manifest)
    groups: dict[tuple[str, str], list] = {}
    for rec in records:
        groups.setdefault((rec.speaker_id, rec.text_id), []).append(rec)
    with open(out / "augmented.jsonl", "w") as f:
        for (speaker, text), recs in groups.items():
            if len(recs) < 2:
                continue
            clips = [load_clip(r, _base_dir(args)) for r in recs]
            emotions = [r.spans[0].code for r in recs]
            joined, final, spans = concat_augment(clips, emotions, args.gap_s)
            wav_path = out / f"{joined.utterance_id}.wav"
            write_wav(wav_path, joined.samples)
            f.write(json.dumps({
                "audio_path": wav_path.name,
                "speaker_id": speaker,
                "utterance_id": joined.utterance_id,
                "text_id": text,
                "spans": [{"start_s": s.start, "end_s": s.end,
                           "label": s.code.to_text()} for s in spans],
                "final_label": final.to_text(),
                "split": recs[0].split,
            }) + "\n")
    return 0


def cmd_label(args):
    out = _out_dir(args)
    _write_resolved(args, out)
    lab = _lab_cfg(args)
    with open(out / "labels.jsonl", "w") as f:
        for rec in read_manifest(args.manifest):
            for rd in pipeline.load_recording(rec, _base_dir(args), None, lab):
                for i, (emo, stress) in enumerate(
                    zip(rd.emotion_codes, rd.stress_codes)
                ):
                    f.write(json.dumps({
                        "clip_id": rd.clip_id, "window": i,
                        "emotion": emo.to_text(),
                        "stress_code": stress.to_text(),
                        "stress": is_stress(stress),
                    }) + "\n")
    return 0


def cmd_extract(args):
    out = _out_dir(args)
    _write_resolved(args, out)
    mfcc_cfg = MfccConfig(include_deltas=args.deltas)
    for rec in read_manifest(args.manifest):
        clip = load_clip(rec, _base_dir(args))
        n_windows = len(segment(clip))
        mat = pipeline.clip_feature_matrix(
            rec, _base_dir(args), args.features, n_windows, mfcc_cfg
        )
        write_fseq(out / f"{rec.utterance_id}.fseq", mat)
    return 0


def _load_split_samples(args, lab):
    records = read_manifest(args.manifest)
    mfcc_cfg = MfccConfig(include_deltas=getattr(args, "deltas", False))
    recordings = []
    for rec in records:
        recordings.extend(pipeline.load_recording(
            rec, _base_dir(args), args.features, lab, mfcc_cfg
        ))
    by_split: dict[str, list] = {}
    for rd in recordings:
        by_split.setdefault(rd.split, []).append(rd)
    return by_split


def cmd_train(args):
    out = _out_dir(args)
    _write_resolved(args, out)
    lab = _lab_cfg(args)
    by_split = _load_split_samples(args, lab)
    train_recs = by_split.get("train", [])
    val_recs = by_split.get("val") or by_split.get("test") or train_recs
    train_samples = pipeline.build_samples(train_recs, args.n)
    val_samples = pipeline.build_samples(val_recs, args.n)
    if not train_samples or not val_samples:
        raise DataError("no usable training/validation samples in manifest")
    d = train_samples[0].features.shape[1]
    mcfg = ModelConfig(arch=args.arch, feature_dim=d, hidden=args.hidden,
                       dropout=args.dropout)
    default_epochs = 20 if args.arch == "lstm" else 50
    tcfg = TrainConfig(
        epochs=args.epochs if args.epochs else default_epochs,
        iterations_per_epoch=args.iterations,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        teacher_forcing_p=args.teacher_forcing_p,
        seed=args.seed,
        patience=args.patience,
    )
    result = train(train_samples, val_samples, tcfg, mcfg, out)
    print(f"best validation loss {result['best_val_loss']:.6f} "
          f"after {result['epochs_run']} epochs -> {result['checkpoint']}")
    return 0


def cmd_eval(args):
    out = _out_dir(args)
    _write_resolved(args, out)
    params, mcfg = load_checkpoint(args.ckpt)
    lab = _lab_cfg(args)
    by_split = _load_split_samples(args, lab)
    recs = by_split.get(args.split) or [r for v in by_split.values() for r in v]
    if not recs:
        raise DataError("no recordings to evaluate")
    if args.level == "segment":
        preds, truths = [], []
        for rd in recs:
            flags = pipeline.predict_stress_flags(
                rd.features, args.n, params, mcfg
            )
            preds.extend(flags)
            truths.extend(is_stress(c) for c in rd.stress_codes)
        report = evaluation.score_segment_level(preds, truths)
    else:
        groups, truth = {}, {}
        for rd in recs:
            groups[rd.clip_id] = pipeline.predict_stress_flags(
                rd.features, args.n, params, mcfg
            )
            if rd.stress_label is not None:
                truth[rd.clip_id] = bool(rd.stress_label)
            else:
                truth[rd.clip_id] = evaluation.majority_vote(
                    [is_stress(c) for c in rd.stress_codes]
                )
        report = evaluation.score_sequence_level(groups, truth)
    summary = {
        "level": args.level, "accuracy": report.accuracy, "f1": report.f1,
        "tp": report.tp, "fp": report.fp, "tn": report.tn, "fn": report.fn,
    }
    (out / "eval.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{args.level}-level accuracy={report.accuracy:.4f} f1={report.f1:.4f}")
    return 0


def _parse_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def cmd_sweep(args):
    out = _out_dir(args)
    _write_resolved(args, out)
    records = read_manifest(args.manifest)
    sequences = []
    # Reference labels come from each record's stress_spans; the dummy
    # labelling config below only drives windowing, not the sweep itself.
    lab = LabellingConfig(n=0, lam=1.0, tau=0.5)
    for rec in records:
        if not rec.stress_spans:
            continue
        for rd in pipeline.load_recording(rec, _base_dir(args), None, lab):
            pairs = [
                (e, r) for e, r in zip(rd.emotion_codes, rd.reference_codes)
                if r is not None
            ]
            if pairs:
                sequences.append(([p[0] for p in pairs], [p[1] for p in pairs]))
    if not sequences:
        raise DataError("sweep needs records with stress_spans references")
    n_values = _parse_range(args.n)
    lambdas = [float(x) for x in args.lam.split(",")]
    cells = evaluation.labelling_sweep(sequences, n_values, lambdas, args.tau)
    evaluation.write_sweep_csv(cells, out / "sweep_binary.csv", "binary")
    evaluation.write_sweep_csv(cells, out / "sweep_exact.csv", "exact")
    print(f"wrote {len(cells)} sweep cells to {out}")
    return 0


def cmd_ablate(args):
    out = _out_dir(args)
    _write_resolved(args, out)
    lab = _lab_cfg(args)
    by_split = _load_split_samples(args, lab)
    recs = by_split.get(args.split) or [r for v in by_split.values() for r in v]
    cells = []
    for ckpt in args.ckpt:
        params, mcfg = load_checkpoint(ckpt)
        for n in _parse_range(args.n_values):
            preds, truths = [], []
            for rd in recs:
                preds.extend(pipeline.predict_stress_flags(
                    rd.features, n, params, mcfg
                ))
                truths.extend(is_stress(c) for c in rd.stress_codes)
            report = evaluation.score_segment_level(preds, truths)
            cells.append(evaluation.AblationCell(
                str(ckpt), args.features, n, report
            ))
    evaluation.ablation_grid(cells, out / "ablation.csv")
    print(f"wrote {len(cells)} ablation cells to {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="dynstress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", parents=[], help="cut clips into windows")
    _add_common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("augment", help="concatenate same-speaker clips")
    _add_common(p)
    p.add_argument("--gap-s", type=float, default=0.0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("label", help="derive temporal stress labels")
    _add_common(p)
    _add_label_flags(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("extract", help="write per-window feature files")
    _add_common(p)
    p.add_argument("--features", default="mfcc")
    p.add_argument("--deltas", action="store_true")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a stress classifier")
    _add_common(p)
    _add_label_flags(p)
    p.add_argument("--arch", choices=["lstm", "transformer"], default="lstm")
    p.add_argument("--features", default="mfcc")
    p.add_argument("--deltas", action="store_true")
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--epochs", type=int, default=0,
                   help="0 = architecture default (20 lstm / 50 transformer)")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--teacher-forcing-p", type=float, default=0.8)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint")
    _add_common(p)
    _add_label_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--features", default="mfcc")
    p.add_argument("--level", choices=["segment", "sequence"], default="segment")
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="labelling agreement grid")
    _add_common(p)
    p.add_argument("--n", default="0..5")
    p.add_argument("--lambda", dest="lam", default="0.01,0.1,0.8,1")
    p.add_argument("--tau", type=float, default=0.5)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="evaluate checkpoints over a grid")
    _add_common(p)
    _add_label_flags(p)
    p.add_argument("--ckpt", action="append", required=True)
    p.add_argument("--features", default="mfcc")
    p.add_argument("--n-values", default="0..5")
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_ablate)

    for sp in sub.choices.values():
        sp.set_defaults(subparser=sp)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args)
        return args.func(args)
    except TrainingDiverged as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_DIVERGED
    except DataError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
