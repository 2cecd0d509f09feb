"""Gray-mapped QAM, complex AWGN channel and max-log soft demapping.

SNR is symbol-energy to noise ratio Es/N0.  Constellations have unit average
energy, so the complex noise variance is ``10 ** (-snr_db / 10)``, split
equally between I and Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

LLR_CLIP = 30.0
SUPPORTED_BITS = (1, 2, 4, 6)
NAMES = {1: "BPSK", 2: "QPSK", 4: "16QAM", 6: "64QAM"}


@dataclass(frozen=True)
class ConstellationSpec:
    """``points[label]`` for each ``m``-bit label (MSB first)."""

    bits_per_symbol: int
    levels: np.ndarray  # integer (I, Q) amplitudes, shape (2**m, 2)

    @property
    def m(self) -> int:
        return self.bits_per_symbol

    @property
    def order(self) -> int:
        return 1 << self.bits_per_symbol

    @property
    def name(self) -> str:
        return NAMES[self.bits_per_symbol]

    @property
    def energy_scale(self) -> int:
        """Integer mean of ``I**2 + Q**2`` over the unscaled levels."""
        e = int((self.levels.astype(np.int64) ** 2).sum())
        assert e % self.order == 0
        return e // self.order

    @property
    def points(self) -> np.ndarray:
        pts = self.levels[:, 0] + 1j * self.levels[:, 1]
        return pts / math.sqrt(self.energy_scale)

    @property
    def label_bits(self) -> np.ndarray:
        """``(2**m, m)`` bit matrix of every label."""
        lab = np.arange(self.order)
        shifts = np.arange(self.m - 1, -1, -1)
        return ((lab[:, None] >> shifts) & 1).astype(np.int8)


@lru_cache(maxsize=None)
def _table() -> dict[int, np.ndarray]:
    text = resources.files("tokenlink.data").joinpath("constellations.txt").read_text()
    rows: dict[int, list[tuple[int, int, int]]] = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m, label, i, q = (int(v) for v in line.split())
        rows.setdefault(m, []).append((label, i, q))
    out = {}
    for m, entries in rows.items():
        entries.sort()
        if [e[0] for e in entries] != list(range(1 << m)):
            raise ValueError(f"constellation table for m={m} is incomplete")
        out[m] = np.array([(i, q) for _, i, q in entries], dtype=np.int64)
    return out


def constellation(m: int) -> ConstellationSpec:
    if m not in SUPPORTED_BITS:
        raise ValueError(f"unsupported bits per symbol {m}; choose from {SUPPORTED_BITS}")
    return ConstellationSpec(m, _table()[m])


def modulate(bits: np.ndarray, spec: ConstellationSpec) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int64).ravel()
    if b.size % spec.m:
        raise ValueError(f"{b.size} bits is not a multiple of {spec.m}")
    groups = b.reshape(-1, spec.m)
    labels = groups @ (1 << np.arange(spec.m - 1, -1, -1))
    return spec.points[labels]


@dataclass(frozen=True)
class ChannelParams:
    snr_db: float
    h: complex = 1.0 + 0.0j
    seed: int = 0

    @property
    def noise_variance(self) -> float:
        return 0.0 if math.isinf(self.snr_db) and self.snr_db > 0 else 10.0 ** (-self.snr_db / 10.0)


def awgn_channel(
    symbols: np.ndarray, params: ChannelParams, rng: np.random.Generator | None = None
) -> np.ndarray:
    """``r = h * s + n`` with circularly symmetric complex Gaussian ``n``.

    ``snr_db = inf`` is the noiseless mode.  Without an explicit ``rng`` the
    noise stream is seeded from ``params.seed``.
    """
    s = np.asarray(symbols, dtype=np.complex128)
    out = params.h * s
    var = params.noise_variance
    if var == 0.0:
        return out
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    std = math.sqrt(var / 2.0)
    noise = rng.normal(0.0, std, (2,) + s.shape)
    return out + noise[0] + 1j * noise[1]


def _distances(received: np.ndarray, spec: ConstellationSpec, h: complex) -> np.ndarray:
    r = np.asarray(received, dtype=np.complex128).ravel()
    return np.abs(r[:, None] - h * spec.points[None, :]) ** 2


def demodulate_soft(
    received: np.ndarray, spec: ConstellationSpec, h: complex, noise_var: float
) -> np.ndarray:
    """Max-log bit LLRs, positive favouring 0, clipped to +-30.

    LLR = (min_{x: b=1} |r - h x|^2 - min_{x: b=0} |r - h x|^2) / noise_var
    """
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    bits = spec.label_bits.astype(bool)
    r = np.asarray(received, dtype=np.complex128).ravel()
    out = np.empty((r.size, spec.m))
    step = 1 << 16
    for lo in range(0, r.size, step):
        d2 = _distances(r[lo : lo + step], spec, h)
        for j in range(spec.m):
            one = d2[:, bits[:, j]].min(axis=1)
            zero = d2[:, ~bits[:, j]].min(axis=1)
            out[lo : lo + step, j] = (one - zero) / noise_var
    return np.clip(out, -LLR_CLIP, LLR_CLIP).ravel()


def demodulate_hard(received: np.ndarray, spec: ConstellationSpec, h: complex = 1.0) -> np.ndarray:
    """Minimum-distance demapping to bits."""
    labels = _distances(received, spec, h).argmin(axis=1)
    return spec.label_bits[labels].ravel()
