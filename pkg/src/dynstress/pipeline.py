"""Manifest-to-training-set assembly and sequential inference.

Ties together segmentation, features, relabelling and the model: builds
sliding-window samples for training and rolls the model out over recordings
at inference time, feeding its own past predictions as context.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import MfccConfig, load_embeddings, window_mfcc
from .labelling import LabellingConfig, relabel_sequence
from .model import ModelConfig, context_array, forward_batch, make_context
from .segmentation import (
    ClipRecord,
    DataError,
    align_labels,
    load_clip,
    segment,
    window_samples,
)
from .training import TrainSample
from .vad import VadCode, is_stress


@dataclass
class RecordingData:
    """Per-recording windows: features plus ground-truth labels."""

    clip_id: str
    split: str
    features: np.ndarray              # (n_windows, d) for labelled windows
    emotion_codes: list[VadCode]      # one per labelled window
    stress_codes: list[VadCode]       # relabelled ground truth
    reference_codes: list[VadCode | None]  # from stress_spans, if present
    stress_label: bool | None         # recording-level truth, if any


def _labelled_runs(labels: list[VadCode | None]) -> list[tuple[int, int]]:
    """Maximal [start, end) runs of consecutively labelled windows."""
    runs, start = [], None
    for i, lab in enumerate(labels):
        if lab is not None and start is None:
            start = i
        elif lab is None and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(labels)))
    return runs


def clip_feature_matrix(
    rec: ClipRecord, base_dir: str | Path, feature_spec: str,
    n_windows: int, mfcc_cfg: MfccConfig,
) -> np.ndarray:
    """Features for every window of one clip: from-scratch MFCC or rows of a
    precomputed embedding file (`file:<dir>`)."""
    if feature_spec == "mfcc":
        clip = load_clip(rec, base_dir)
        windows = segment(clip)
        return np.stack([
            window_mfcc(window_samples(clip, w), mfcc_cfg) for w in windows
        ])
    if feature_spec.startswith("file:"):
        emb_dir = Path(feature_spec[5:])
        mat = load_embeddings(emb_dir / f"{rec.utterance_id}.fseq",
                              expected_dim=None)
        if mat.shape[0] != n_windows:
            raise DataError(
                f"{rec.utterance_id}: embedding file has {mat.shape[0]} rows, "
                f"clip has {n_windows} windows"
            )
        return mat
    raise DataError(f"unknown feature spec {feature_spec!r}")


def load_recording(
    rec: ClipRecord, base_dir: str | Path, feature_spec: str | None,
    lab_cfg: LabellingConfig, mfcc_cfg: MfccConfig = MfccConfig(),
) -> list[RecordingData]:
    """One RecordingData per maximal labelled run of a clip's windows.

    ``feature_spec=None`` skips feature extraction (labelling-only use)."""
    clip = load_clip(rec, base_dir)
    windows = align_labels(segment(clip), rec.spans)
    if feature_spec is None:
        feats = np.zeros((len(windows), 0))
    else:
        feats = clip_feature_matrix(
            rec, base_dir, feature_spec, len(windows), mfcc_cfg
        )
    ref_windows = (
        align_labels(windows, rec.stress_spans) if rec.stress_spans else None
    )
    labels = [w.label for w in windows]
    out = []
    for run_idx, (lo, hi) in enumerate(_labelled_runs(labels)):
        emotions = [labels[i] for i in range(lo, hi)]
        stress = relabel_sequence(emotions, lab_cfg)
        refs = (
            [ref_windows[i].label for i in range(lo, hi)]
            if ref_windows is not None else [None] * (hi - lo)
        )
        out.append(RecordingData(
            clip_id=f"{rec.utterance_id}#{run_idx}",
            split=rec.split,
            features=feats[lo:hi],
            emotion_codes=emotions,
            stress_codes=stress,
            reference_codes=refs,
            stress_label=rec.stress_label,
        ))
    return out


def build_samples(
    recordings: list[RecordingData], history: int
) -> list[TrainSample]:
    """Sliding-window samples: features for windows t-h..t, ground-truth
    context [default, s_{t-h}, ..., s_{t-1}], target s_t.

    ``prev_indices`` point at the samples for the context windows so teacher
    forcing can substitute model rollouts; -1 where no full-length sample
    exists (early windows keep ground truth there).
    """
    samples: list[TrainSample] = []
    index_of: dict[tuple[str, int], int] = {}
    for rd in recordings:
        for t in range(history, len(rd.stress_codes)):
            ctx_codes = make_context(rd.stress_codes[t - history : t])
            prev = tuple(
                index_of.get((rd.clip_id, t - history + k), -1)
                for k in range(history)
            )
            idx = len(samples)
            samples.append(TrainSample(
                features=rd.features[t - history : t + 1],
                context=context_array(ctx_codes),
                target=rd.stress_codes[t],
                clip_id=rd.clip_id,
                window_index=t,
                prev_indices=prev,
            ))
            index_of[(rd.clip_id, t)] = idx
    return samples


def predict_recording(
    features: np.ndarray, history: int, params, cfg: ModelConfig,
) -> list[VadCode]:
    """Sequential inference over one recording's windows.

    The context is built from the model's own past predictions (the default
    code stands in before any prediction exists), mirroring deployment where
    no ground-truth stress labels are available.
    """
    preds: list[VadCode] = []
    for t in range(features.shape[0]):
        lo = max(0, t - history)
        X = features[lo : t + 1]
        ctx = context_array(make_context(preds[lo:t]))
        probs = forward_batch(X[None], ctx[None], params, cfg).data[0]
        preds.append(VadCode(*(int(p > 0.5) for p in probs)))
    return preds


def predict_stress_flags(
    features: np.ndarray, history: int, params, cfg: ModelConfig,
) -> list[bool]:
    return [is_stress(c) for c in predict_recording(features, history, params, cfg)]
