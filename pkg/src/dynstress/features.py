"""Per-window speech features: from-scratch MFCC (d=40) and loaders for
precomputed self-supervised embeddings (d=1024)."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .segmentation import REQUIRED_SAMPLE_RATE, DataError


@dataclass(frozen=True)
class MfccConfig:
    frame_len_s: float = 0.025
    frame_hop_s: float = 0.010
    n_fft: int = 512
    n_mels: int = 64
    n_coeffs: int = 40
    pre_emphasis: float = 0.97
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10
    include_deltas: bool = False  # appends pooled deltas, doubling d

    def __post_init__(self):
        if self.n_coeffs > self.n_mels:
            raise ValueError("n_coeffs must not exceed n_mels")
        if self.fmax > REQUIRED_SAMPLE_RATE / 2:
            raise ValueError("fmax above Nyquist")

    @property
    def dim(self) -> int:
        return self.n_coeffs * (2 if self.include_deltas else 1)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(cfg: MfccConfig, sample_rate: int = REQUIRED_SAMPLE_RATE) -> np.ndarray:
    """Triangular mel filters on the HTK scale, shape (n_mels, n_fft//2 + 1)."""
    n_bins = cfg.n_fft // 2 + 1
    mel_pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.arange(n_bins) * sample_rate / cfg.n_fft
    fb = np.zeros((cfg.n_mels, n_bins))
    for j in range(cfg.n_mels):
        lo, mid, hi = hz_pts[j], hz_pts[j + 1], hz_pts[j + 2]
        rise = (bin_freqs - lo) / (mid - lo)
        fall = (hi - bin_freqs) / (hi - mid)
        fb[j] = np.maximum(0.0, np.minimum(rise, fall))
    return fb


def dct_basis(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis matrix, rows are basis vectors."""
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    basis = np.cos(np.pi * k * (2 * m + 1) / (2 * n))
    basis *= np.sqrt(2.0 / n)
    basis[0] *= np.sqrt(0.5)
    return basis


def mfcc_frames(samples: np.ndarray, cfg: MfccConfig = MfccConfig(),
                sample_rate: int = REQUIRED_SAMPLE_RATE) -> np.ndarray:
    """MFCC matrix for one 10 s window, shape (n_frames, n_coeffs).

    Pipeline: pre-emphasis, 25 ms / 10 ms Hann frames, magnitude spectrum
    (n_fft=512), 64 mel filters, log with floor, orthonormal DCT-II, first
    40 coefficients.  A 10 s window yields 998 frames.
    """
    samples = np.asarray(samples, dtype=np.float64)
    expected = 10 * sample_rate
    if len(samples) != expected:
        raise DataError(
            f"expected exactly {expected} samples (10 s at {sample_rate} Hz), "
            f"got {len(samples)}"
        )
    emph = np.empty_like(samples)
    emph[0] = samples[0]
    emph[1:] = samples[1:] - cfg.pre_emphasis * samples[:-1]

    flen = int(round(cfg.frame_len_s * sample_rate))
    fhop = int(round(cfg.frame_hop_s * sample_rate))
    n_frames = (len(emph) - flen) // fhop + 1
    idx = np.arange(flen)[None, :] + fhop * np.arange(n_frames)[:, None]
    frames = emph[idx] * np.hanning(flen)

    mag = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1))
    fb = mel_filterbank(cfg, sample_rate)
    mel = mag @ fb.T
    logmel = np.log(np.maximum(mel, cfg.log_floor))
    coeffs = logmel @ dct_basis(cfg.n_mels).T[:, : cfg.n_coeffs]
    return coeffs


def delta_frames(frames: np.ndarray, width: int = 2) -> np.ndarray:
    """Temporal derivatives via standard regression over +-width frames."""
    padded = np.pad(frames, ((width, width), (0, 0)), mode="edge")
    num = sum(
        k * (padded[width + k : len(frames) + width + k] -
             padded[width - k : len(frames) + width - k])
        for k in range(1, width + 1)
    )
    denom = 2 * sum(k * k for k in range(1, width + 1))
    return num / denom


def pool_window(frames: np.ndarray) -> np.ndarray:
    """Mean over frames, one value per coefficient."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise DataError("pool_window needs a non-empty frame matrix")
    return frames.mean(axis=0)


def window_mfcc(samples: np.ndarray, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """One pooled feature vector for a 10 s window (d=40, or 80 with deltas)."""
    frames = mfcc_frames(samples, cfg)
    vec = pool_window(frames)
    if cfg.include_deltas:
        vec = np.concatenate([vec, pool_window(delta_frames(frames))])
    return vec


# --- FSEQ feature files: magic "FSEQ", version, rows, cols, f32 LE payload ---

_FSEQ_MAGIC = b"FSEQ"
_FSEQ_VERSION = 1


def write_fseq(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise DataError("feature matrix must be 2-D")
    with open(path, "wb") as f:
        f.write(_FSEQ_MAGIC)
        f.write(struct.pack("<III", _FSEQ_VERSION, matrix.shape[0], matrix.shape[1]))
        f.write(matrix.astype("<f4").tobytes())


def read_fseq(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing feature file: {path}")
    blob = path.read_bytes()
    if blob[:4] != _FSEQ_MAGIC:
        raise DataError(f"{path}: bad magic, not an FSEQ file")
    if len(blob) < 16:
        raise DataError(f"{path}: truncated header")
    version, rows, cols = struct.unpack("<III", blob[4:16])
    if version != _FSEQ_VERSION:
        raise DataError(f"{path}: unsupported FSEQ version {version}")
    expected = 16 + 4 * rows * cols
    if len(blob) != expected:
        raise DataError(f"{path}: payload is {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob[16:], dtype="<f4").reshape(rows, cols)
    return data.astype(np.float64)


def load_embeddings(path: str | Path, expected_dim: int | None = 1024) -> np.ndarray:
    """Load precomputed per-window embeddings, one row per window."""
    mat = read_fseq(path)
    if expected_dim is not None and mat.shape[1] != expected_dim:
        raise DataError(
            f"{path}: embedding dim {mat.shape[1]}, expected {expected_dim}"
        )
    if not np.all(np.isfinite(mat)):
        raise DataError(f"{path}: non-finite values in embeddings")
    return mat
