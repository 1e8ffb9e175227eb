"""Sliding-window segmentation, label alignment and concatenation augmentation.

Recordings are cut into fixed 10 s windows advancing in 5 s hops; short
emotion-labelled clips from the same speaker and sentence are concatenated to
synthesise temporal emotion progressions.
"""

from __future__ import annotations

import json
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .vad import VadCode, parse_label

REQUIRED_SAMPLE_RATE = 16000


class DataError(Exception):
    """Malformed or unusable input data (bad WAV, bad manifest, ...)."""


@dataclass
class AudioClip:
    samples: np.ndarray  # float amplitudes in [-1, 1]
    sample_rate: int
    speaker_id: str
    utterance_id: str
    text_id: str = ""

    def __post_init__(self):
        if self.sample_rate != REQUIRED_SAMPLE_RATE:
            raise DataError(
                f"clip {self.utterance_id!r}: sample rate must be "
                f"{REQUIRED_SAMPLE_RATE} Hz, got {self.sample_rate}"
            )
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class SegmentWindow:
    index: int
    start: float
    end: float
    clip_id: str
    label: VadCode | None = None


@dataclass(frozen=True)
class LabelSpan:
    start: float
    end: float
    code: VadCode


def segment(
    clip: AudioClip, window_s: float = 10.0, hop_s: float = 5.0
) -> list[SegmentWindow]:
    """Cut a clip into overlapping windows; trailing audio shorter than a
    full window is dropped."""
    if clip.duration < window_s:
        raise DataError(
            f"clip {clip.utterance_id!r} is {clip.duration:.2f}s, "
            f"shorter than one {window_s:.0f}s window"
        )
    count = int((clip.duration - window_s) // hop_s) + 1
    return [
        SegmentWindow(
            index=k,
            start=k * hop_s,
            end=k * hop_s + window_s,
            clip_id=clip.utterance_id,
        )
        for k in range(count)
    ]


def window_samples(clip: AudioClip, window: SegmentWindow) -> np.ndarray:
    lo = int(round(window.start * clip.sample_rate))
    hi = int(round(window.end * clip.sample_rate))
    return clip.samples[lo:hi]


def align_labels(
    windows: Sequence[SegmentWindow], spans: Sequence[LabelSpan]
) -> list[SegmentWindow]:
    """Attach to each window the label of the span containing its midpoint.

    Spans are half-open [start, end); windows whose midpoint no span covers
    stay unlabelled.  Overlapping spans are rejected.
    """
    spans = sorted(spans, key=lambda s: s.start)
    for a, b in zip(spans, spans[1:]):
        if b.start < a.end:
            raise DataError(f"overlapping label spans: {a} / {b}")
    out = []
    for w in windows:
        mid = (w.start + w.end) / 2.0
        label = None
        for s in spans:
            if s.start <= mid < s.end:
                label = s.code
                break
        out.append(SegmentWindow(w.index, w.start, w.end, w.clip_id, label))
    return out


def concat_augment(
    clips: Sequence[AudioClip],
    emotions: Sequence[VadCode],
    gap_s: float = 0.0,
) -> tuple[AudioClip, VadCode, list[LabelSpan]]:
    """Concatenate same-speaker, same-sentence clips spoken in different
    emotional states.

    Returns the joined clip, the label of the final emotional state, and the
    per-span emotion labels so overlapping windows can straddle transitions.
    Joins are raw abutment, optionally separated by ``gap_s`` of silence.
    """
    if len(clips) < 2:
        raise DataError("concat_augment needs at least two clips")
    if len(emotions) != len(clips):
        raise DataError("need one emotion code per clip")
    speaker = clips[0].speaker_id
    text = clips[0].text_id
    for c in clips[1:]:
        if c.speaker_id != speaker:
            raise DataError(
                f"speaker mismatch: {c.speaker_id!r} vs {speaker!r}"
            )
        if c.text_id != text:
            raise DataError(f"text mismatch: {c.text_id!r} vs {text!r}")
    gap = np.zeros(int(round(gap_s * REQUIRED_SAMPLE_RATE)))
    pieces, spans = [], []
    cursor = 0.0
    for i, (c, e) in enumerate(zip(clips, emotions)):
        if i > 0 and len(gap):
            pieces.append(gap)
            cursor += len(gap) / REQUIRED_SAMPLE_RATE
        pieces.append(c.samples)
        spans.append(LabelSpan(cursor, cursor + c.duration, e))
        cursor += c.duration
    joined = AudioClip(
        samples=np.concatenate(pieces),
        sample_rate=REQUIRED_SAMPLE_RATE,
        speaker_id=speaker,
        utterance_id="+".join(c.utterance_id for c in clips),
        text_id=text,
    )
    return joined, emotions[-1], spans


# --- WAV I/O (RIFF, 16-bit signed PCM, mono, 16 kHz) ---

def load_wav(path: str | Path, speaker_id: str = "", utterance_id: str = "",
             text_id: str = "") -> AudioClip:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing WAV file: {path}")
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getcomptype() != "NONE":
                raise DataError(f"{path}: compressed WAV not supported")
            if wf.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit PCM")
            if wf.getnchannels() != 1:
                raise DataError(f"{path}: expected mono audio")
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as e:
        raise DataError(f"{path}: not a readable WAV file ({e})") from e
    if rate != REQUIRED_SAMPLE_RATE:
        raise DataError(
            f"{path}: sample rate {rate} Hz, expected {REQUIRED_SAMPLE_RATE}"
        )
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(pcm, rate, speaker_id, utterance_id or path.stem, text_id)


def write_wav(path: str | Path, samples: np.ndarray,
              sample_rate: int = REQUIRED_SAMPLE_RATE) -> None:
    pcm = np.clip(np.asarray(samples) * 32768.0, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


# --- Manifest (JSON lines, one record per clip) ---

@dataclass
class ClipRecord:
    audio_path: str
    speaker_id: str
    utterance_id: str
    text_id: str
    spans: list[LabelSpan]
    split: str
    stress_spans: list[LabelSpan] = field(default_factory=list)
    stress_label: bool | None = None  # recording-level truth, if any


def _parse_spans(raw) -> list[LabelSpan]:
    return [
        LabelSpan(float(s["start_s"]), float(s["end_s"]), parse_label(s["label"]))
        for s in raw
    ]


def read_manifest(path: str | Path) -> list[ClipRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing manifest: {path}")
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            rec = ClipRecord(
                audio_path=obj["audio_path"],
                speaker_id=obj.get("speaker_id", ""),
                utterance_id=obj.get("utterance_id", Path(obj["audio_path"]).stem),
                text_id=obj.get("text_id", ""),
                spans=_parse_spans(obj.get("spans", [])),
                split=obj.get("split", "train"),
                stress_spans=_parse_spans(obj.get("stress_spans", [])),
                stress_label=obj.get("stress_label"),
            )
        except (KeyError, ValueError, TypeError) as e:
            raise DataError(f"{path}:{lineno}: bad manifest record ({e})") from e
        records.append(rec)
    return records


def load_clip(rec: ClipRecord, base_dir: str | Path = ".") -> AudioClip:
    p = Path(rec.audio_path)
    if not p.is_absolute():
        p = Path(base_dir) / p
    return load_wav(p, rec.speaker_id, rec.utterance_id, rec.text_id)
