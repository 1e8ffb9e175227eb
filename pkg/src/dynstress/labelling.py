"""Temporal stress relabelling via decayed Hamming distances.

Each window's emotion code is compared against the canonical stress code;
distances over the current and up to ``n`` preceding windows are summed with
exponentially decaying weights, and windows whose total falls at or below a
threshold are relabelled as stress.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .vad import STRESS_CODE, VadCode, hamming_distance


@dataclass(frozen=True)
class LabellingConfig:
    """Relabelling knobs: history length ``n``, decay ``lam``, relative
    threshold ``tau`` (the absolute threshold is ``tau * theta_max``)."""

    n: int
    lam: float
    tau: float = 0.5

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"n must be >= 0, got {self.n}")
        if self.lam <= 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")

    def threshold(self) -> float:
        return self.tau * theta_max(self.n, self.lam)


def decay_weight(lam: float, age: int) -> float:
    """Weight of a window ``age`` steps in the past: e^(-lam * age)."""
    if age < 0:
        raise ValueError(f"age must be >= 0, got {age}")
    return math.exp(-lam * age)


def theta_total(history: Sequence[VadCode], lam: float) -> float:
    """Decayed sum of stress distances over a window history.

    ``history`` is ordered oldest to current; the last element has age 0.
    Summation runs newest to oldest, matching the threshold computation so
    exact boundary ties are decided consistently.
    """
    if not history:
        raise ValueError("history must be non-empty")
    total = 0.0
    last = len(history) - 1
    for age in range(len(history)):
        d = hamming_distance(STRESS_CODE, history[last - age])
        total += math.exp(-lam * age) * d
    return total


def theta_max(n: int, lam: float) -> float:
    """Upper bound of theta_total over n+1 windows (all at distance 2)."""
    return 2.0 * sum(math.exp(-lam * k) for k in range(n + 1))


def assign_label(
    history: Sequence[VadCode], current: VadCode, config: LabellingConfig
) -> VadCode:
    """Label one window: stress if the decayed distance total is at or below
    the threshold, otherwise the window's own emotion code."""
    if len(history) > config.n:
        raise ValueError(
            f"history holds {len(history)} codes, config allows at most {config.n}"
        )
    total = theta_total(list(history) + [current], config.lam)
    if total <= config.threshold():
        return STRESS_CODE
    return current


def relabel_sequence(
    emotions: Sequence[VadCode], config: LabellingConfig
) -> list[VadCode]:
    """Apply assign_label across a whole sequence.

    Windows near the start use all available past windows (fewer than n).
    """
    if not emotions:
        raise ValueError("emotions must be non-empty")
    n, lam = config.n, config.lam
    # Precomputed per-age weights; same values and summation order as
    # theta_total (newest first).
    weights = [math.exp(-lam * k) for k in range(n + 1)]
    threshold = config.threshold()
    dists = [hamming_distance(STRESS_CODE, e) for e in emotions]
    out: list[VadCode] = []
    for t, code in enumerate(emotions):
        total = 0.0
        for age in range(min(t, n) + 1):
            total += weights[age] * dists[t - age]
        out.append(STRESS_CODE if total <= threshold else code)
    return out
