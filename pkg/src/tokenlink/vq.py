"""Token sequences, vector-quantization codebooks and receiver zero padding.

A tokenizer maps an image to ``N`` indices into a ``K x d`` codebook.  The
first ``key_count`` indices are key tokens; the remainder are detail tokens in
descending order of importance.  Positions that never arrived at the receiver
are carried with ``received_mask == False`` and dequantize to the all-zero
latent, not to codeword 0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from os import PathLike

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, ProtocolError

CODEBOOK_MAGIC = b"RTCB"
KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6
DUPLICATE_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TokenSequence:
    """``total`` importance-ordered token indices with a key/detail split."""

    indices: np.ndarray
    key_count: int
    received_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("indices must be one-dimensional")
        mask = (
            np.ones(idx.size, dtype=bool)
            if self.received_mask is None
            else np.asarray(self.received_mask, dtype=bool)
        )
        if mask.shape != idx.shape:
            raise ValueError("received_mask length must equal number of indices")
        if not 1 <= self.key_count <= idx.size:
            raise ValueError(f"key_count {self.key_count} outside [1, {idx.size}]")
        if not mask[: self.key_count].all():
            raise ProtocolError("key tokens must always be present")
        if (idx < 0).any():
            raise ValueError("token indices must be non-negative")
        object.__setattr__(self, "indices", _frozen(idx))
        object.__setattr__(self, "received_mask", _frozen(mask))

    @property
    def total(self) -> int:
        return int(self.indices.size)

    @property
    def received_count(self) -> int:
        return int(self.received_mask.sum())

    def key_tokens(self) -> np.ndarray:
        return self.indices[: self.key_count]

    def detail_tokens(self) -> np.ndarray:
        return self.indices[self.key_count :]

    def truncated(self, t: int) -> "TokenSequence":
        """Keep the first ``t`` tokens and mark the rest as missing."""
        return zero_pad(self.indices[:t], self.key_count, self.total)


@dataclass(frozen=True)
class Codebook:
    """``K`` real-valued codewords of dimension ``d``."""

    codewords: np.ndarray

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=np.float64)
        if cw.ndim != 2 or cw.shape[0] == 0 or cw.shape[1] == 0:
            raise ConfigError("codewords must be a non-empty K x d array")
        if not np.isfinite(cw).all():
            raise ConfigError("codewords must be finite")
        object.__setattr__(self, "codewords", _frozen(cw))

    @property
    def K(self) -> int:
        return int(self.codewords.shape[0])

    @property
    def d(self) -> int:
        return int(self.codewords.shape[1])

    @property
    def bits(self) -> int:
        """Bits needed to address every codeword, ``ceil(log2 K)``."""
        return max(1, int(self.K - 1).bit_length())

    def min_pairwise_distance(self) -> float:
        if self.K < 2:
            return np.inf
        dist, _ = cKDTree(self.codewords).query(self.codewords, k=2)
        return float(dist[:, 1].min())

    def save(self, path: str | PathLike) -> None:
        with open(path, "wb") as fh:
            fh.write(CODEBOOK_MAGIC)
            fh.write(struct.pack("<II", self.K, self.d))
            fh.write(self.codewords.astype("<f4").tobytes(order="C"))

    @classmethod
    def load(cls, path: str | PathLike) -> "Codebook":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != CODEBOOK_MAGIC:
            raise ConfigError(f"{path}: not a codebook file (bad magic)")
        if len(raw) < 12:
            raise ConfigError(f"{path}: truncated header")
        K, d = struct.unpack("<II", raw[4:12])
        expected = 12 + 4 * K * d
        if len(raw) != expected:
            raise ConfigError(f"{path}: expected {expected} bytes, found {len(raw)}")
        cw = np.frombuffer(raw, dtype="<f4", offset=12).reshape(K, d)
        return cls(cw.astype(np.float64))


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    first = rng.integers(n)
    centers[0] = x[first]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            raise ConfigError(f"only {j} distinct samples available for {k} codewords")
        pick = rng.choice(n, p=d2 / total)
        centers[j] = x[pick]
        np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1), out=d2)
    return centers


def kmeans(
    samples: np.ndarray, K: int, seed: int = 0
) -> tuple[np.ndarray, list[float]]:
    """Lloyd's k-means with k-means++ seeding.

    Returns the centroids and the objective (sum of squared distances) at
    every assignment step.  Empty clusters keep their previous centroid, which
    keeps the objective non-increasing.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigError("samples must be a non-empty 2-D array")
    if K < 1:
        raise ConfigError("K must be positive")
    if x.shape[0] < K:
        raise ConfigError(f"need at least K={K} samples, got {x.shape[0]}")

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, K, rng)
    history: list[float] = []
    for _ in range(KMEANS_MAX_ITER):
        dist, label = cKDTree(centers).query(x)
        obj = float((dist**2).sum())
        if history and obj > history[-1] * (1 + 1e-12) + 1e-300:
            raise AssertionError(f"k-means objective increased: {history[-1]} -> {obj}")
        history.append(obj)
        counts = np.bincount(label, minlength=K)
        sums = np.zeros_like(centers)
        np.add.at(sums, label, x)
        new = centers.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift <= KMEANS_TOL:
            break
    return centers, history


def train_codebook(samples: np.ndarray, K: int, seed: int = 0) -> Codebook:
    """Fit a ``K``-entry codebook to ``samples`` (shape ``(n, d)``).

    Codewords are rounded to float32 so that a saved and reloaded codebook
    quantizes identically.
    """
    centers, _ = kmeans(samples, K, seed)
    cb = Codebook(centers.astype(np.float32).astype(np.float64))
    if cb.min_pairwise_distance() <= DUPLICATE_TOL:
        raise ConfigError("trained codebook contains duplicate codewords")
    return cb


def quantize(v: np.ndarray, cb: Codebook) -> int | np.ndarray:
    """Index of the nearest codeword; ties go to the lowest index.

    ``v`` may be a single ``d``-vector (returns ``int``) or an ``(n, d)``
    batch (returns an integer array).
    """
    arr = np.asarray(v, dtype=np.float64)
    single = arr.ndim == 1
    batch = arr[None, :] if single else arr
    if batch.ndim != 2 or batch.shape[1] != cb.d:
        raise ValueError(f"vector dimension {arr.shape} does not match codebook d={cb.d}")
    out = np.empty(batch.shape[0], dtype=np.int64)
    step = max(1, (1 << 22) // (cb.K * cb.d))
    for lo in range(0, batch.shape[0], step):
        chunk = batch[lo : lo + step]
        d2 = ((chunk[:, None, :] - cb.codewords[None, :, :]) ** 2).sum(axis=2)
        out[lo : lo + step] = np.argmin(d2, axis=1)
    return int(out[0]) if single else out


def dequantize(t: int | np.ndarray, cb: Codebook) -> np.ndarray:
    idx = np.asarray(t)
    if idx.size and (idx.min() < 0 or idx.max() >= cb.K):
        raise ValueError(f"token index out of range [0, {cb.K})")
    return cb.codewords[idx].copy()


def zero_pad(received, key_count: int, total: int) -> TokenSequence:
    """Extend a received token prefix to ``total`` positions.

    Missing positions carry index 0 with ``received_mask`` false.
    """
    rx = np.asarray(received, dtype=np.int64).ravel()
    if rx.size < key_count:
        raise ProtocolError(
            f"received {rx.size} tokens but {key_count} key tokens are mandatory"
        )
    if rx.size > total:
        raise ValueError(f"received {rx.size} tokens, more than total {total}")
    indices = np.zeros(total, dtype=np.int64)
    indices[: rx.size] = rx
    mask = np.zeros(total, dtype=bool)
    mask[: rx.size] = True
    return TokenSequence(indices, key_count, mask)


def sequence_latents(seq: TokenSequence, cb: Codebook) -> np.ndarray:
    """``(total, d)`` latents; masked positions are all-zero vectors."""
    out = np.zeros((seq.total, cb.d))
    present = seq.received_mask
    out[present] = dequantize(seq.indices[present], cb)
    return out
