"""Dynamic stress detection from speech: temporal relabelling of emotion
sequences, windowed features, and cross-attention sequence classifiers."""

from .labelling import LabellingConfig, relabel_sequence
from .vad import STRESS_CODE, Emotion, VadCode, encode_emotion, hamming_distance, is_stress

__all__ = [
    "Emotion",
    "LabellingConfig",
    "STRESS_CODE",
    "VadCode",
    "encode_emotion",
    "hamming_distance",
    "is_stress",
    "relabel_sequence",
]

__version__ = "0.1.0"
