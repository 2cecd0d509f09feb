"""SNR-indexed modulation-and-coding selection.

Table file format, one row per entry (``#`` starts a comment)::

    min_snr_db  bits_per_symbol  code_rate  label

``-inf`` marks the always-feasible fallback row, which must come first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from os import PathLike
from pathlib import Path

import numpy as np

from . import fec, modem
from .errors import ConfigError


@dataclass(frozen=True)
class McsEntry:
    min_snr_db: float
    bits_per_symbol: int
    code_rate: Fraction
    label: str

    @property
    def efficiency(self) -> Fraction:
        return self.bits_per_symbol * self.code_rate


class McsTable:
    def __init__(self, entries):
        self.entries = tuple(entries)
        self._validate()

    def _validate(self):
        e = self.entries
        if not e:
            raise ConfigError("MCS table is empty")
        if e[0].min_snr_db != -math.inf:
            raise ConfigError("first MCS row must have min_snr_db = -inf (fallback)")
        for a, b in zip(e, e[1:]):
            if not b.min_snr_db > a.min_snr_db:
                raise ConfigError("MCS thresholds must be strictly ascending")
            if not b.efficiency > a.efficiency:
                raise ConfigError("spectral efficiency must increase with threshold")
        rates = set(fec.supported_rates())
        for row in e:
            if row.bits_per_symbol not in modem.SUPPORTED_BITS:
                raise ConfigError(f"{row.label}: unsupported bits per symbol {row.bits_per_symbol}")
            if row.code_rate not in rates:
                raise ConfigError(f"{row.label}: code rate {row.code_rate} has no puncturing pattern")

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @classmethod
    def parse(cls, text: str) -> "McsTable":
        rows = []
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ConfigError(f"MCS table line {n}: expected 4 fields, got {len(parts)}")
            try:
                rows.append(McsEntry(float(parts[0]), int(parts[1]), Fraction(parts[2]), parts[3]))
            except ValueError as exc:
                raise ConfigError(f"MCS table line {n}: {exc}") from None
        return cls(rows)

    @classmethod
    def load(cls, path: str | PathLike) -> "McsTable":
        return cls.parse(Path(path).read_text())

    def dumps(self) -> str:
        lines = ["# min_snr_db m r label"]
        for e in self.entries:
            lines.append(f"{e.min_snr_db:g} {e.bits_per_symbol} {e.code_rate} {e.label}")
        return "\n".join(lines) + "\n"


def default_table() -> McsTable:
    return McsTable.parse(resources.files("tokenlink.data").joinpath("mcs_default.txt").read_text())


def select_mcs(snr_db: float, table: McsTable | None = None) -> McsEntry:
    """Highest-threshold entry with ``min_snr_db <= snr_db``."""
    table = table or default_table()
    chosen = table.entries[0]
    for e in table.entries:
        if e.min_snr_db <= snr_db:
            chosen = e
    return chosen


def compute_cbr(n_symbols: int, H: int, W: int) -> float:
    if H <= 0 or W <= 0:
        raise ValueError("image dimensions must be positive")
    return n_symbols / (H * W * 3)


def block_error_rate(
    m: int,
    r,
    snr_db: float,
    blocks: int = 200,
    info_len: int = 1024,
    seed: int = 0,
    cfg: fec.TurboConfig | None = None,
) -> float:
    """Monte-Carlo BLER of one MCS over AWGN."""
    spec = modem.constellation(m)
    rng = np.random.default_rng(seed)
    params = modem.ChannelParams(snr_db)
    errors = 0
    for _ in range(blocks):
        info = rng.integers(0, 2, info_len, dtype=np.int8)
        tx = fec.rate_match(fec.turbo_encode(info, cfg), r)
        pad = -tx.size % m
        sym = modem.modulate(np.concatenate([tx, np.zeros(pad, dtype=np.int8)]), spec)
        rx = modem.awgn_channel(sym, params, rng)
        llr = modem.demodulate_soft(rx, spec, params.h, params.noise_variance)[: tx.size]
        dec = fec.turbo_decode(fec.rate_recover(llr, r, info_len), cfg)
        errors += bool((dec != info).any())
    return errors / blocks


def calibrate_threshold(
    m: int,
    r,
    target_bler: float = 0.1,
    lo: float = -6.0,
    hi: float = 24.0,
    resolution: float = 0.25,
    blocks: int = 200,
    info_len: int = 1024,
    seed: int = 0,
) -> float:
    """Lowest SNR on a ``resolution`` grid whose BLER is at most ``target_bler``.

    Bisection on the grid; BLER is assumed non-increasing in SNR.
    """
    grid = np.arange(lo, hi + resolution / 2, resolution)
    a, b = 0, len(grid) - 1
    if block_error_rate(m, r, grid[b], blocks, info_len, seed) > target_bler:
        raise ConfigError(f"m={m} r={r} misses BLER {target_bler} even at {hi} dB")
    while a < b:
        mid = (a + b) // 2
        if block_error_rate(m, r, grid[mid], blocks, info_len, seed) <= target_bler:
            b = mid
        else:
            a = mid + 1
    return float(grid[a])


def calibrate_table(
    candidates, target_bler: float = 0.1, blocks: int = 200, info_len: int = 1024, seed: int = 0
) -> list[tuple[int, Fraction, str, float]]:
    """Measured threshold for every ``(m, r, label)`` candidate."""
    out = []
    for m, r, label in candidates:
        thr = calibrate_threshold(m, r, target_bler, blocks=blocks, info_len=info_len, seed=seed)
        out.append((m, Fraction(r), label, thr))
    return out


def table_from_calibration(rows) -> McsTable:
    """Build a table from calibrated rows; the lowest-efficiency row becomes the fallback.

    Rows whose threshold is not above the previous kept row are dropped, since a
    more efficient scheme that works at the same SNR dominates them.
    """
    rows = sorted(rows, key=lambda t: t[0] * t[1])
    kept: list[McsEntry] = []
    for m, r, label, thr in rows:
        if not kept:
            kept.append(McsEntry(-math.inf, m, Fraction(r), label))
            continue
        while len(kept) > 1 and kept[-1].min_snr_db >= thr:
            kept.pop()
        kept.append(McsEntry(thr, m, Fraction(r), label))
    return McsTable(kept)
