"""Optimisation: per-dimension BCE, Adam, teacher forcing, early stopping."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Tensor
from .model import (
    ModelConfig,
    forward_batch,
    init_params,
    param_names,
    save_checkpoint,
)
from .vad import VadCode

_CLAMP = 1e-7


class TrainingDiverged(RuntimeError):
    """Raised when the loss becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    iterations_per_epoch: int = 1000
    batch_size: int = 16
    learning_rate: float = 0.001
    teacher_forcing_p: float = 0.8
    seed: int = 0
    patience: int = 5
    lr_decay: float = 0.5
    lr_decay_every: int = 5

    def __post_init__(self):
        if not 0.0 <= self.teacher_forcing_p <= 1.0:
            raise ValueError("teacher_forcing_p must be in [0, 1]")
        for name in ("epochs", "iterations_per_epoch", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class LossReport:
    valence: float
    arousal: float
    dominance: float

    @property
    def total(self) -> float:
        return (self.valence + self.arousal + self.dominance) / 3.0


def bce_loss(probs: Sequence[float], target: VadCode) -> LossReport:
    """Per-dimension binary cross-entropy; probabilities clamped to
    [1e-7, 1 - 1e-7] before the logs."""
    t = target.as_tuple()
    comps = []
    for p, ti in zip(probs, t):
        p = min(max(p, _CLAMP), 1.0 - _CLAMP)
        comps.append(-(ti * np.log(p) + (1 - ti) * np.log(1.0 - p)))
    return LossReport(*comps)


def batch_loss_graph(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean BCE over a batch, inside the autodiff graph.

    ``probs`` is (B, 3); ``targets`` is a float (B, 3) array of 0/1.
    """
    p = probs.clip(_CLAMP, 1.0 - _CLAMP)
    t = Tensor(targets)
    loss = -(t * p.log() + (1.0 - t) * (1.0 - p).log())
    return loss.mean()


def gradient(
    params, X: np.ndarray, S: np.ndarray, targets: np.ndarray,
    cfg: ModelConfig, train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Exact reverse-mode gradients of the mean batch loss.

    Returns (loss value, gradient arrays keyed like the parameters).
    """
    if X.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    for p in params.values():
        p.grad = None
    probs = forward_batch(X, S, params, cfg, train=train, rng=rng)
    loss = batch_loss_graph(probs, targets)
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite training loss: {value}")
    loss.backward()
    grads = {
        n: (params[n].grad if params[n].grad is not None
            else np.zeros_like(params[n].data))
        for n in params
    }
    return value, grads


def numerical_gradient(loss_fn, params, h: float = 1e-3) -> dict[str, np.ndarray]:
    """Central finite differences of a scalar loss over every parameter.

    Independent oracle for the analytic gradients; O(2 * n_params) loss
    evaluations, intended for reduced-size models only.
    """
    grads = {}
    for name in param_names(params):
        data = params[name].data
        g = np.zeros_like(data)
        flat = data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def sample_context(
    ground_truth: Sequence[VadCode], model_rollout: Sequence[VadCode],
    p: float, rng: np.random.Generator,
) -> Sequence[VadCode]:
    """One Bernoulli draw per sequence: ground truth with probability p,
    otherwise the model's own past predictions."""
    if len(ground_truth) != len(model_rollout):
        raise ValueError("context sequences must have equal length")
    return ground_truth if rng.random() < p else model_rollout


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for n, p in self.params.items():
            g = grads[n]
            self.m[n] = self.beta1 * self.m[n] + (1.0 - self.beta1) * g
            self.v[n] = self.beta2 * self.v[n] + (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (self.m[n] / b1c) / (
                np.sqrt(self.v[n] / b2c) + self.eps
            )


class EarlyStopping:
    """Stop when validation loss fails to improve for `patience` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.counter = 0
        self.stop = False

    def update(self, val_loss: float) -> bool:
        """Returns True when this epoch improved on the best loss."""
        if val_loss < self.best:
            self.best = val_loss
            self.counter = 0
            return True
        self.counter += 1
        if self.counter > self.patience:
            self.stop = True
        return False


@dataclass
class TrainSample:
    """One sliding-window training example."""

    features: np.ndarray          # (T, d)
    context: np.ndarray           # (T, 3) ground-truth context (default first)
    target: VadCode
    clip_id: str = ""
    window_index: int = 0
    prev_indices: tuple[int, ...] = ()  # dataset indices of the context windows
    # (-1 where no full sample exists; ground truth is used there)


def _step_rng(seed: int, *counters: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, *counters)))


def _rollout_contexts(
    samples: Sequence[TrainSample], idx: Sequence[int], params, cfg: ModelConfig,
) -> dict[int, np.ndarray]:
    """One-step rollout: predict each context window with ground-truth
    context, binarise, and substitute into the current window's context.
    Gradients never flow through these predictions."""
    needed = sorted({
        j for i in idx for j in samples[i].prev_indices if j >= 0
    })
    preds: dict[int, np.ndarray] = {}
    if needed:
        X = np.stack([samples[j].features for j in needed])
        S = np.stack([samples[j].context for j in needed])
        probs = forward_batch(X, S, params, cfg).data
        for j, p in zip(needed, probs):
            preds[j] = (p > 0.5).astype(np.float64)
    out = {}
    for i in idx:
        s = samples[i]
        ctx = s.context.copy()
        # ctx rows: [default, label_{t-h}, ..., label_{t-1}]
        for slot, j in enumerate(s.prev_indices, start=1):
            if j >= 0 and j in preds:
                ctx[slot] = preds[j]
        out[i] = ctx
    return out


def evaluate_loss(samples: Sequence[TrainSample], params, cfg: ModelConfig,
                  batch_size: int = 64) -> float:
    """Mean BCE over samples with ground-truth contexts."""
    total, count = 0.0, 0
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo : lo + batch_size]
        X = np.stack([s.features for s in chunk])
        S = np.stack([s.context for s in chunk])
        T = np.array([s.target.as_tuple() for s in chunk], dtype=np.float64)
        probs = forward_batch(X, S, params, cfg).data
        p = np.clip(probs, _CLAMP, 1.0 - _CLAMP)
        losses = -(T * np.log(p) + (1.0 - T) * np.log(1.0 - p)).mean(axis=1)
        total += float(losses.sum())
        count += len(chunk)
    return total / max(count, 1)


def evaluate_accuracy(samples: Sequence[TrainSample], params, cfg: ModelConfig,
                      batch_size: int = 64) -> tuple[float, float]:
    """Segment accuracy / F1 on the stress decision, ground-truth contexts."""
    from .vad import STRESS_CODE
    tp = fp = tn = fn = 0
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo : lo + batch_size]
        X = np.stack([s.features for s in chunk])
        S = np.stack([s.context for s in chunk])
        probs = forward_batch(X, S, params, cfg).data
        codes = probs > 0.5
        for s, c in zip(chunk, codes):
            pred = bool(c[0] == 0 and c[1] == 1 and c[2] == 0)
            truth = s.target == STRESS_CODE
            if pred and truth:
                tp += 1
            elif pred and not truth:
                fp += 1
            elif not pred and truth:
                fn += 1
            else:
                tn += 1
    total = tp + fp + tn + fn
    acc = (tp + tn) / total if total else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    return acc, f1


def train(
    train_samples: Sequence[TrainSample],
    val_samples: Sequence[TrainSample],
    tcfg: TrainConfig,
    mcfg: ModelConfig,
    out_dir: str | Path,
) -> dict:
    """Full optimisation loop; writes best checkpoint and a metrics CSV.

    Mini-batches are drawn with replacement; teacher forcing draws one
    Bernoulli per sequence per step.  Deterministic given (config, seed).
    """
    if not train_samples or not val_samples:
        raise ValueError("train and validation sets must be non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = init_params(mcfg, _step_rng(tcfg.seed, 0))
    opt = Adam(params, lr=tcfg.learning_rate)
    stopper = EarlyStopping(tcfg.patience)
    ckpt_path = out_dir / "best.ckpt"
    metrics_path = out_dir / "metrics.csv"
    rows = []
    step = 0
    for epoch in range(tcfg.epochs):
        opt.lr = tcfg.learning_rate * (
            tcfg.lr_decay ** (epoch // tcfg.lr_decay_every)
        )
        epoch_loss = 0.0
        for it in range(tcfg.iterations_per_epoch):
            rng = _step_rng(tcfg.seed, 1, epoch, it)
            idx = rng.integers(0, len(train_samples), size=tcfg.batch_size)
            use_rollout = [
                rng.random() >= tcfg.teacher_forcing_p for _ in idx
            ]
            if any(use_rollout):
                rollouts = _rollout_contexts(train_samples, idx, params, mcfg)
            X = np.stack([train_samples[i].features for i in idx])
            S = np.stack([
                rollouts[i] if roll else train_samples[i].context
                for i, roll in zip(idx, use_rollout)
            ])
            T = np.array(
                [train_samples[i].target.as_tuple() for i in idx],
                dtype=np.float64,
            )
            loss, grads = gradient(params, X, S, T, mcfg, train=True, rng=rng)
            opt.step(grads)
            epoch_loss += loss
            step += 1
        train_loss = epoch_loss / tcfg.iterations_per_epoch
        val_loss = evaluate_loss(val_samples, params, mcfg)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss: {val_loss}")
        val_acc, val_f1 = evaluate_accuracy(val_samples, params, mcfg)
        rows.append((epoch, step, train_loss, val_loss, val_acc, val_f1, opt.lr))
        if stopper.update(val_loss):
            save_checkpoint(ckpt_path, params, mcfg)
        if stopper.stop:
            break
    with open(metrics_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["epoch", "step", "train_loss", "val_loss", "val_acc", "val_f1", "lr"]
        )
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return {
        "params": params,
        "best_val_loss": stopper.best,
        "epochs_run": len(rows),
        "checkpoint": ckpt_path,
        "metrics": metrics_path,
        "history": rows,
    }
